#include "flatspec/slq.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <limits>
#include <numeric>

#include "flatspec/rng.hpp"

namespace flatspec {

std::string to_string(Probe p) { return p == Probe::rademacher ? "rademacher" : "gaussian"; }

Probe probe_from_string(const std::string& s) {
  if (s == "rademacher") return Probe::rademacher;
  if (s == "gaussian") return Probe::gaussian;
  throw SlqError("unknown probe '" + s + "'");
}

double symmetry_defect(const LinearOperator& op, std::uint64_t seed) {
  Rng rng(seed);
  const Vec u = gaussian(rng, op.dim), v = gaussian(rng, op.dim);
  const Vec au = op(u), av = op(v);
  const double scale = norm2(u) * norm2(av) + norm2(v) * norm2(au);
  if (scale == 0.0) return 0.0;
  return std::abs(dot(u, av) - dot(v, au)) / scale;
}

namespace {

// w -= sum_i (q_i . w) q_i over the first k basis vectors; returns the coefficient on q_{k-1}.
double project_out(const std::vector<Vec>& q, std::size_t k, Vec& w) {
  Vec c(k);
  for (std::size_t i = 0; i < k; ++i) c[i] = dot(q[i], w);
  for (std::size_t i = 0; i < k; ++i) axpy(-c[i], q[i], w);
  return k > 0 ? c[k - 1] : 0.0;
}

double ortho_residual(const std::vector<Vec>& q) {
  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) worst = std::max(worst, std::abs(dot(q[i], q[j]) - (i == j ? 1.0 : 0.0)));
  return worst;
}

}  // namespace

LanczosResult lanczos(const LinearOperator& op, std::span<const double> v0, std::size_t m, const LanczosOptions& opts) {
  const std::size_t p = op.dim;
  if (m < 1) throw SlqError("lanczos: m must be >= 1");
  if (v0.size() != p) throw SlqError("lanczos: start vector has length " + std::to_string(v0.size()) +
                                     ", operator dimension is " + std::to_string(p));
  const double v0_norm = norm2(v0);
  if (!(v0_norm > 0.0) || !std::isfinite(v0_norm)) throw SlqError("lanczos: start vector is zero or not finite");
  if (opts.check_symmetry) {
    const double defect = symmetry_defect(op, opts.symmetry_seed);
    if (!(defect <= opts.symmetry_tol))
      throw SlqError("lanczos: operator failed the symmetry check (relative defect " + std::to_string(defect) + ")");
  }
  LanczosResult r;
  r.m_requested = m;
  m = std::min(m, p);
  std::vector<Vec> q;
  q.reserve(m);
  q.emplace_back(v0.begin(), v0.end());
  scale(1.0 / v0_norm, q[0]);
  Vec w(p);
  double norm_est = 0.0;
  double beta_prev = 0.0;

  for (std::size_t j = 0; j < m; ++j) {
    op.apply(q[j], w);
    if (!all_finite(w)) throw SlqError("lanczos: operator returned non-finite values at step " + std::to_string(j));
    double alpha = dot(q[j], w);
    axpy(-alpha, q[j], w);
    if (j > 0) axpy(-beta_prev, q[j - 1], w);
    // Two passes of classical Gram-Schmidt against the whole basis.
    alpha += project_out(q, j + 1, w);
    alpha += project_out(q, j + 1, w);
    r.tridiag.diag.push_back(alpha);
    const double beta = norm2(w);
    norm_est = std::max(norm_est, std::abs(alpha) + beta_prev + beta);
    if (j + 1 == m) break;
    if (beta <= opts.breakdown_tol * std::max(norm_est, std::numeric_limits<double>::min())) {
      r.breakdown = true;
      break;
    }
    r.tridiag.offdiag.push_back(beta);
    q.push_back(w);
    scale(1.0 / beta, q.back());
    beta_prev = beta;
  }

  r.m_effective = r.tridiag.size();
  r.norm_estimate = norm_est;
  r.ortho_residual = ortho_residual(q);
  const TridiagEigen eig = sym_tridiag_eigen(r.tridiag);
  r.nodes = eig.eigenvalues;
  r.weights.resize(eig.first_components.size());
  for (std::size_t i = 0; i < r.weights.size(); ++i) r.weights[i] = eig.first_components[i] * eig.first_components[i];
  return r;
}

void pool(RitzSpectrum& s) {
  std::vector<std::pair<double, double>> atoms;
  const double inv = 1.0 / static_cast<double>(s.per_seed.size());
  for (const auto& run : s.per_seed)
    for (std::size_t i = 0; i < run.nodes.size(); ++i) atoms.emplace_back(run.nodes[i], run.weights[i] * inv);
  std::stable_sort(atoms.begin(), atoms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  s.nodes.clear();
  s.weights.clear();
  for (const auto& [n, w] : atoms) {
    s.nodes.push_back(n);
    s.weights.push_back(w);
  }
}

RitzSpectrum spectral_density(const LinearOperator& op, std::size_t m, std::size_t num_seeds, Probe probe,
                              std::uint64_t base_seed, Exec exec, const LanczosOptions& opts) {
  if (m < 1) throw SlqError("spectral_density: m must be >= 1");
  if (num_seeds < 1) throw SlqError("spectral_density: num_seeds must be >= 1");
  if (opts.check_symmetry) {
    const double defect = symmetry_defect(op, opts.symmetry_seed);
    if (!(defect <= opts.symmetry_tol))
      throw SlqError("spectral_density: operator failed the symmetry check (relative defect " +
                     std::to_string(defect) + ")");
  }
  LanczosOptions inner = opts;
  inner.check_symmetry = false;

  RitzSpectrum s;
  s.dim = op.dim;
  s.m = m;
  s.probe = probe;
  s.base_seed = base_seed;
  s.seeds.resize(num_seeds);
  s.per_seed.resize(num_seeds);
  for (std::size_t k = 0; k < num_seeds; ++k) s.seeds[k] = derive_seed(base_seed, k);

  auto run = [&](std::size_t k) {
    Rng rng(s.seeds[k]);
    const Vec v = probe == Probe::rademacher ? rademacher(rng, op.dim) : gaussian(rng, op.dim);
    s.per_seed[k] = lanczos(op, v, m, inner);
    s.per_seed[k].seed = s.seeds[k];
  };
  if (exec == Exec::parallel && num_seeds > 1) {
    std::exception_ptr error;
    std::mutex mu;
    const auto n = static_cast<long long>(num_seeds);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long k = 0; k < n; ++k) {
      try {
        run(static_cast<std::size_t>(k));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (std::size_t k = 0; k < num_seeds; ++k) run(k);
  }
  pool(s);
  return s;
}

double quadrature_moment(std::span<const double> nodes, std::span<const double> weights, unsigned k) {
  double total = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) total += weights[i] * std::pow(nodes[i], static_cast<double>(k));
  return total;
}

MomentEstimates moment_estimates(const RitzSpectrum& s) {
  if (s.per_seed.empty() || s.nodes.empty()) throw SlqError("moment_estimates: empty spectrum");
  MomentEstimates e;
  const double p = static_cast<double>(s.dim);
  e.lambda_max = -std::numeric_limits<double>::infinity();
  e.lambda_min = std::numeric_limits<double>::infinity();
  for (const auto& run : s.per_seed) {
    e.trace_per_seed.push_back(p * quadrature_moment(run.nodes, run.weights, 1));
    e.frob_sq += p * quadrature_moment(run.nodes, run.weights, 2);
    e.lambda_max = std::max(e.lambda_max, run.nodes.back());
    e.lambda_min = std::min(e.lambda_min, run.nodes.front());
  }
  const double n = static_cast<double>(s.per_seed.size());
  e.trace = std::accumulate(e.trace_per_seed.begin(), e.trace_per_seed.end(), 0.0) / n;
  e.frob_sq /= n;
  if (s.per_seed.size() > 1) {
    double var = 0.0;
    for (double t : e.trace_per_seed) var += (t - e.trace) * (t - e.trace);
    var /= n - 1.0;
    e.trace_std_error = std::sqrt(var / n);
  }
  return e;
}

}  // namespace flatspec
