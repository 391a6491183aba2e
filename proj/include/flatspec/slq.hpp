#pragma once

// Lanczos quadrature: m-step Lanczos with full reorthogonalization gives a
// tridiagonal T whose eigenvalues (Ritz nodes) and squared first eigenvector
// components (weights) form an m-point Gauss rule for the spectral measure
// seen from the start vector.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatspec/kernels.hpp"
#include "flatspec/linear_operator.hpp"
#include "flatspec/tridiag.hpp"

namespace flatspec {

class SlqError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LanczosOptions {
  double breakdown_tol = 1e-12;  // relative to the running operator-norm estimate
  bool check_symmetry = true;
  std::uint64_t symmetry_seed = 0x5eed;
  double symmetry_tol = 1e-8;
};

struct LanczosResult {
  SymTridiag tridiag;
  Vec nodes;    // ascending
  Vec weights;  // squared first components, sum to 1
  std::uint64_t seed = 0;
  std::size_t m_requested = 0;
  std::size_t m_effective = 0;
  bool breakdown = false;  // stopped early on an invariant subspace
  double ortho_residual = 0.0;  // max |Q^T Q - I|
  double norm_estimate = 0.0;
};

LanczosResult lanczos(const LinearOperator& op, std::span<const double> v0, std::size_t m,
                      const LanczosOptions& opts = {});

// Sampled check of u^T (A v) = v^T (A u) relative to |u||Av| + |v||Au|.
// Returns the measured relative asymmetry.
double symmetry_defect(const LinearOperator& op, std::uint64_t seed);

enum class Probe { rademacher, gaussian };
std::string to_string(Probe p);
Probe probe_from_string(const std::string& s);

struct RitzSpectrum {
  std::size_t dim = 0;  // P
  std::size_t m = 0;    // requested steps
  Probe probe = Probe::rademacher;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;   // derived per-run seeds
  std::vector<LanczosResult> per_seed;
  Vec nodes;    // pooled, ascending
  Vec weights;  // pooled weight / num_seeds

  std::size_t num_seeds() const { return per_seed.size(); }
};

// Runs one Lanczos per seed from probe vectors drawn with derive_seed(base_seed, s).
// Seeds may run concurrently; each result depends only on its own seed.
RitzSpectrum spectral_density(const LinearOperator& op, std::size_t m, std::size_t num_seeds,
                              Probe probe = Probe::rademacher, std::uint64_t base_seed = 0,
                              Exec exec = Exec::serial, const LanczosOptions& opts = {});

// The pooled measure rebuilt from per-seed runs.
void pool(RitzSpectrum& s);

struct MomentEstimates {
  double trace = 0.0;
  double frob_sq = 0.0;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  Vec trace_per_seed;
  double trace_std_error = 0.0;  // sample std / sqrt(seeds); 0 for one seed
};

MomentEstimates moment_estimates(const RitzSpectrum& s);

// sum_j w_j t_j^k.
double quadrature_moment(std::span<const double> nodes, std::span<const double> weights, unsigned k);

}  // namespace flatspec
