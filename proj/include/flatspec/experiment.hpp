#pragma once

// Experiment plans: dataset ingestion, training variants, spectra and the
// artifacts written for each run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatspec/datasets.hpp"
#include "flatspec/serialize.hpp"

namespace flatspec {

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSource {
  std::string kind = "blobs";  // "blobs" or "mnist"
  // mnist
  std::filesystem::path images, labels;
  bool standardize = false;  // statistics from the training split
  std::size_t subset = 0;    // 0 keeps every sample
  std::uint64_t subset_seed = 0;
  // blobs
  std::size_t d_x = 100, d_y = 10, n_per_class = 100;
  double separation = 3.0;
  std::uint64_t seed = 0;
  // split: either a fraction of the 45,000 / 5,000 split or explicit counts
  double split_fraction = 0.0;
  std::size_t n_train = 0, n_validation = 0;
  std::uint64_t split_seed = 0;
};

Split load_split(const DatasetSource& src);

struct SpectrumSettings {
  std::size_t m = 80;
  std::size_t seeds = 1;
  Probe probe = Probe::rademacher;
  std::uint64_t base_seed = 0;
  std::vector<CurvatureKind> operators{CurvatureKind::hessian};
  std::vector<BnMode> bn_modes{BnMode::eval};
  std::size_t batch_size = 0;  // curvature batches; 0 is one full batch
  bool l2_in_curvature = false;
  std::optional<bool> merge;  // default per operator
  std::size_t track_every = 0;  // epochs between degeneracy snapshots; 0 disables
};

struct Variant {
  TrainConfig config;
  std::vector<double> lr_grid;  // empty trains config.lr only
};

struct ExperimentPlan {
  std::string name;
  ModelSpec model;
  DatasetSource dataset;
  std::vector<Variant> variants;
  SpectrumSettings spectrum;
  std::filesystem::path output_dir;

  // Throws PlanError.
  void validate() const;
};

void to_json(Json& j, const DatasetSource& d);
void from_json(const Json& j, DatasetSource& d);
void to_json(Json& j, const SpectrumSettings& s);
void from_json(const Json& j, SpectrumSettings& s);
void to_json(Json& j, const Variant& v);
void from_json(const Json& j, Variant& v);
void to_json(Json& j, const ExperimentPlan& p);
void from_json(const Json& j, ExperimentPlan& p);

// Parses and validates; relative paths resolve against the plan file's directory.
ExperimentPlan load_plan(const std::filesystem::path& path);

struct SpectrumArtifact {
  CurvatureKind kind;
  BnMode bn_mode;
  std::filesystem::path spectrum_path;
  std::string spectrum_hash;
  SharpnessReport report;
};

struct RunArtifact {
  std::string variant;
  TrainConfig config;  // with the selected learning rate
  std::filesystem::path dir, config_path, checkpoint_path, history_path, report_path, metadata_path;
  std::vector<SpectrumArtifact> spectra;
  Evaluation train, validation;
  double weight_norm = 0.0;
  double wall_seconds = 0.0;
};

struct VariantFailure {
  std::string variant;
  std::string error;
};

struct PlanResult {
  std::vector<RunArtifact> artifacts;  // sorted by variant name
  std::vector<VariantFailure> failures;
  std::filesystem::path comparison_json, comparison_csv;

  int exit_code() const { return failures.empty() ? 0 : 1; }
};

struct RunOptions {
  Exec exec = Exec::parallel;
  std::vector<std::string> only;  // restrict to these variants
  bool quiet = false;
};

PlanResult run_plan(const ExperimentPlan& plan, const RunOptions& opts = {});

// Desk plans: "l2-sharpness", "l2-sharpness-mlp", "bn-mode", "gadam-sgd".
// MNIST files are used when given, otherwise Gaussian blobs.
std::vector<std::string> default_plan_names();
ExperimentPlan default_plan(const std::string& name, const std::filesystem::path& output_dir,
                            const std::optional<std::pair<std::filesystem::path, std::filesystem::path>>& mnist = {});

// Write to a temporary sibling, then rename over the target.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);
std::string file_hash(const std::filesystem::path& path);

}  // namespace flatspec
