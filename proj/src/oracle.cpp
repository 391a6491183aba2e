#include "flatspec/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "flatspec/curvature.hpp"
#include "flatspec/datasets.hpp"
#include "flatspec/deep_linear.hpp"
#include "flatspec/rng.hpp"
#include "flatspec/slq.hpp"
#include "flatspec/tridiag.hpp"

namespace flatspec {

namespace {

Eigen::VectorXd dense_eigenvalues(const Mat& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

Mat random_symmetric(Rng& rng, std::size_t n) {
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

OracleResult check(std::string name, double measured, double tol, std::string detail) {
  return {std::move(name), measured, tol, measured <= tol && std::isfinite(measured), std::move(detail)};
}

// Richardson-extrapolated central differences: (4 D(h/2) - D(h)) / 3.
template <class F>
Vec fd_vector(F f, std::span<const double> x, std::span<const double> dir, double h) {
  auto central = [&](double step) {
    Vec xp(x.begin(), x.end()), xm(x.begin(), x.end());
    axpy(step, dir, xp);
    axpy(-step, dir, xm);
    Vec fp = f(xp), fm = f(xm);
    for (std::size_t i = 0; i < fp.size(); ++i) fp[i] = (fp[i] - fm[i]) / (2 * step);
    return fp;
  };
  const Vec d1 = central(h), d2 = central(h / 2);
  Vec out(d1.size());
  for (std::size_t i = 0; i < d1.size(); ++i) out[i] = (4 * d2[i] - d1[i]) / 3;
  return out;
}

double rel_err(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

CurvatureContext small_mlp(Exec exec, std::uint64_t seed) {
  const ModelSpec spec{5, {7, 6}, 3, Activation::tanh, {false, true}, LossKind::cross_entropy};
  const Dataset d = synth_blobs(5, 3, 8, 1.5, seed);
  BatchNormState bn = BatchNormState::fresh(spec);
  Rng rng(seed + 1);
  for (auto& m : bn.running_mean)
    for (auto& x : m) x = 0.2 * rng.normal();
  for (auto& v : bn.running_var)
    for (auto& x : v) x = 0.5 + rng.uniform();
  ParamVector p = init_params(spec, seed);
  for (auto& x : p.flat) x += 0.1 * rng.normal();
  return make_context(spec, p, bn, BnMode::eval, d, 0.01, 0, false, exec);
}

}  // namespace

bool OracleReport::all_pass() const {
  return std::all_of(results.begin(), results.end(), [](const OracleResult& r) { return r.pass; });
}

OracleReport oracle_suite(Exec exec) {
  OracleReport rep;
  auto& out = rep.results;
  Rng rng(20240601);

  {
    SymTridiag t;
    const std::size_t n = 60;
    for (std::size_t i = 0; i < n; ++i) t.diag.push_back(rng.normal());
    for (std::size_t i = 0; i + 1 < n; ++i) t.offdiag.push_back(rng.normal());
    const TridiagEigen te = sym_tridiag_eigen(t);
    const Eigen::VectorXd ref = dense_eigenvalues(t.dense());
    double err = 0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(te.eigenvalues[i] - ref[static_cast<Eigen::Index>(i)]));
    out.push_back(check("tridiag_eigenvalues_vs_dense", err, 1e-12, "n=60, max abs eigenvalue error"));
  }

  {
    const std::size_t n = 120;
    const Mat a = random_symmetric(rng, n);
    const Vec v0 = rademacher(rng, n);
    const LanczosResult l = lanczos(dense_operator(a), v0, n);
    const Eigen::VectorXd ref = dense_eigenvalues(a);
    double err = 0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(l.nodes[i] - ref[static_cast<Eigen::Index>(i)]));
    out.push_back(check("lanczos_full_vs_dense", err, 1e-8, "P=m=120, max abs node error"));
    const double wsum = std::accumulate(l.weights.begin(), l.weights.end(), 0.0);
    out.push_back(check("ritz_weight_sum", std::abs(wsum - 1.0), 1e-10, "|sum w - 1|"));

    const LanczosResult l5 = lanczos(dense_operator(a), v0, 5);
    Vec u = v0;
    scale(1.0 / norm2(u), u);
    Vec ak = u;
    double worst = 0;
    for (unsigned k = 1; k <= 8; ++k) {
      ak = matvec(a, ak);
      const double exact = dot(u, ak);
      const double quad = quadrature_moment(l5.nodes, l5.weights, k);
      worst = std::max(worst, std::abs(quad - exact) / std::max(std::abs(exact), 1.0));
    }
    out.push_back(check("gauss_quadrature_moments", worst, 1e-6, "m=5, k<=8, relative"));
  }

  {
    Vec d(500);
    std::iota(d.begin(), d.end(), 1.0);
    // Rademacher probes make z'Dz exact on a diagonal, so the standard error is
    // roundoff; the floor keeps the check meaningful there.
    for (Probe probe : {Probe::rademacher, Probe::gaussian}) {
      const RitzSpectrum s = spectral_density(diagonal_operator(d), 30, 30, probe, 7, exec);
      const MomentEstimates e = moment_estimates(s);
      out.push_back(check("hutchinson_trace_diag500_" + to_string(probe), std::abs(e.trace - 125250.0),
                          std::max(3.0 * e.trace_std_error, 1e-12 * 125250.0),
                          "|estimate - 125250| against 3 standard errors, 30 seeds"));
    }
  }

  {
    const CurvatureContext ctx = small_mlp(exec, 11);
    const auto& obj = ctx.objective;
    const Vec& w = ctx.params;
    const double h = 1e-4 * (1.0 + norm2(w));
    const Vec g = gradient(ctx);
    Vec fd(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      Vec e(w.size(), 0.0);
      e[i] = 1.0;
      fd[i] = fd_vector(
          [&](const Vec& x) {
            Vec gg(x.size());
            return Vec{obj.evaluate<double>(x, gg)};
          },
          w, e, h)[0];
    }
    out.push_back(check("mlp_gradient_vs_fd", rel_err(g, fd), 1e-6, "P=" + std::to_string(w.size()) + ", relative"));

    const MlpObjective curv = ctx.curvature_objective();
    const Vec v = rademacher(rng, w.size());
    const Vec hv = hvp(ctx, v);
    const Vec fd_hv = fd_vector([&](const Vec& x) { return flatspec::gradient(curv, x); }, w, v, h);
    out.push_back(check("mlp_hvp_vs_fd", rel_err(hv, fd_hv), 1e-6, "directional difference of the gradient"));

    const Vec u = gaussian(rng, w.size());
    const Vec hu = hvp(ctx, u);
    out.push_back(check("mlp_hvp_symmetry", std::abs(dot(u, hv) - dot(v, hu)) / (norm2(u) * norm2(hv)), 1e-12,
                        "|u'Hv - v'Hu| / (|u| |Hv|)"));

    const Eigen::VectorXd gev = dense_eigenvalues(exact_hessian(ggn_operator(ctx)));
    out.push_back(check("ggn_positive_semidefinite", std::max(0.0, -gev.minCoeff()) / gev.maxCoeff(), 1e-10,
                        "-lambda_min / lambda_max of the dense GGN"));
  }

  {
    double worst_trace = 0, worst_lmax = 0, worst_grad = 0, worst_rescale = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t depth = 2 + static_cast<std::size_t>(rng.below(5));
      DeepLinearModel m;
      for (std::size_t i = 0; i < depth; ++i) m.weights.push_back(rng.uniform(-1.5, 1.5));
      m.x = rng.uniform(-1.0, 1.0);
      const DeepLinearHessian h = deep_linear_hessian(m);
      const Eigen::VectorXd ev = dense_eigenvalues(h.matrix);
      worst_trace = std::max(worst_trace, std::abs(ev.sum() - h.trace) / std::abs(h.trace));
      worst_lmax = std::max(worst_lmax, std::abs(ev.maxCoeff() - h.lambda_max) / std::abs(h.lambda_max));

      const Vec g = deep_linear_grad(m);
      Vec fd(depth);
      for (std::size_t i = 0; i < depth; ++i) {
        Vec e(depth, 0.0);
        e[i] = 1.0;
        fd[i] = fd_vector(
            [&](const Vec& w) {
              return Vec{deep_linear_loss({w, m.x}).loss};
            },
            m.weights, e, 1e-4 * (1.0 + norm2(m.weights)))[0];
      }
      worst_grad = std::max(worst_grad, rel_err(g, fd));

      DeepLinearModel r = m;
      const double a = rng.uniform(0.5, 4.0);
      r.weights[0] *= a;
      r.weights[depth - 1] /= a;
      const double l0 = deep_linear_loss(m).loss, l1 = deep_linear_loss(r).loss;
      worst_rescale = std::max(worst_rescale, std::abs(l1 - l0) / l0);
    }
    out.push_back(check("deep_linear_trace_closed_form", worst_trace, 1e-10, "20 chains, relative"));
    out.push_back(check("deep_linear_lambda_max_closed_form", worst_lmax, 1e-10, "20 chains, relative"));
    out.push_back(check("deep_linear_gradient_vs_fd", worst_grad, 1e-6, "20 chains, relative"));
    out.push_back(check("deep_linear_rescaling_invariance", worst_rescale, 1e-12, "20 chains, relative loss change"));
  }
  return rep;
}

void to_json(Json& j, const OracleResult& r) {
  j = Json{{"name", r.name},
           {"measured", std::isfinite(r.measured) ? Json(r.measured) : Json(nullptr)},
           {"tolerance", r.tolerance},
           {"pass", r.pass},
           {"detail", r.detail}};
}

void to_json(Json& j, const OracleReport& r) { j = Json{{"pass", r.all_pass()}, {"results", r.results}}; }

}  // namespace flatspec
