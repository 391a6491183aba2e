#pragma once

// Sharpness and rank-degeneracy summaries of a Ritz spectrum.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flatspec/model.hpp"
#include "flatspec/slq.hpp"

namespace flatspec {

struct RankBoundInput {
  std::size_t d_x = 0;
  std::size_t d_y = 0;
  std::vector<std::size_t> neuron_counts;  // hidden widths plus the output layer
  std::uint64_t P = 0;

  static RankBoundInput from_spec(const ModelSpec& spec);
};

struct RankBound {
  std::uint64_t bound = 0;
  double degeneracy_floor = 0.0;
};

// bound = 4 d_y (sum N_l + d_x); floor = max(0, 1 - bound / P).
RankBound rank_bound(const RankBoundInput& in);

struct Degeneracy {
  double ratio = 0.0;
  double node_value = 0.0;
  bool merged = false;
};

// Weight of the Ritz node closest to zero (ties go to the more negative node).
// With merge, the two closest nodes are combined and their value is the
// weight-averaged one.
Degeneracy degeneracy_ratio(std::span<const double> nodes, std::span<const double> weights, bool merge);

// Averages the per-seed values so that each run contributes one node.
Degeneracy degeneracy_ratio(const RitzSpectrum& s, bool merge);

enum class CurvatureKind { hessian, ggn };
std::string to_string(CurvatureKind k);
CurvatureKind curvature_kind_from_string(const std::string& s);

// Merging is the default for Hessians only; the GGN has no split zero node.
inline bool default_merge(CurvatureKind k) { return k == CurvatureKind::hessian; }

struct SharpnessContext {
  CurvatureKind kind = CurvatureKind::hessian;
  BnMode bn_mode = BnMode::eval;
  double l2 = 0.0;
  bool l2_in_curvature = false;
  std::string dataset_id;
  std::size_t samples = 0;
  std::size_t batch_size = 0;  // 0 is the full dataset in one batch
  std::int64_t epoch = -1;
  std::optional<double> train_loss, train_acc, test_loss, test_acc;
};

struct SharpnessReport {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double trace = 0.0;
  double trace_std_error = 0.0;
  double frobenius = 0.0;
  double mean_eigenvalue = 0.0;
  double degeneracy_ratio = 0.0;
  double degeneracy_node_value = 0.0;
  bool merged = false;
  bool trace_caveat = false;  // spectrum has materially negative nodes
  std::uint64_t rank_bound = 0;
  double degeneracy_floor = 0.0;
  std::uint64_t P = 0;
  std::size_t m = 0;
  std::size_t num_seeds = 0;
  SharpnessContext context;
};

SharpnessReport sharpness_report(const RitzSpectrum& s, const RankBoundInput& bound, const SharpnessContext& ctx);
SharpnessReport sharpness_report(const RitzSpectrum& s, const RankBoundInput& bound, const SharpnessContext& ctx,
                                 bool merge);

// Longitudinal tracking, one row per report.
std::string sharpness_csv_header();
std::string sharpness_csv_row(const SharpnessReport& r);

}  // namespace flatspec
