#pragma once

// Test-only oracles: dense eigensolver (Eigen), finite differences and
// hyper-dual exact Hessians of the naive reference risk.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "flatspec/linalg.hpp"
#include "flatspec/rng.hpp"
#include "naive_mlp.hpp"

namespace flatspec::testing {

inline Vec dense_eigenvalues(const Mat& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a(r, c);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  Vec out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
  return out;
}

inline Mat random_symmetric(Rng& rng, std::size_t n) {
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline Dataset random_dataset(std::size_t n, std::size_t d_x, std::size_t d_y, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.inputs = Mat(n, d_x);
  for (auto& v : d.inputs.data()) v = rng.normal();
  d.labels.resize(n);
  for (auto& l : d.labels) l = static_cast<int>(rng.below(d_y));
  d.num_classes = d_y;
  d.id = "random";
  return d;
}

// Random running statistics so eval-mode BN differs from batch statistics.
inline BatchNormState random_bn(const ModelSpec& spec, Rng& rng) {
  BatchNormState bn = BatchNormState::fresh(spec);
  for (std::size_t l = 0; l < bn.running_mean.size(); ++l) {
    for (auto& v : bn.running_mean[l]) v = 0.3 * rng.normal();
    for (auto& v : bn.running_var[l]) v = 0.5 + rng.uniform();
  }
  return bn;
}

struct NaiveProblem {
  ModelSpec spec;
  BatchNormState bn;
  BnMode mode;
  const Dataset* data;
  std::size_t batch_size;
  double l2;

  double risk(const Vec& w) const { return naive_risk<double>(spec, w, bn, mode, *data, batch_size, l2); }

  double fd_step(const Vec& w) const { return 1e-4 * (1.0 + norm2(w)); }

  // Central differences D(s) at s = h, h/2, h/4 with base step h = 1e-4 (1 + ||w||),
  // combined by two Richardson levels so the truncation error is O(h^6).
  Vec fd_gradient(const Vec& w) const {
    const double h = fd_step(w);
    Vec g(w.size()), wp = w;
    auto central = [&](std::size_t i, double step) {
      wp[i] = w[i] + step;
      const double fp = risk(wp);
      wp[i] = w[i] - step;
      const double fm = risk(wp);
      wp[i] = w[i];
      return (fp - fm) / (2.0 * step);
    };
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d1 = central(i, h), d2 = central(i, 0.5 * h), d4 = central(i, 0.25 * h);
      const double r1 = (4.0 * d2 - d1) / 3.0, r2 = (4.0 * d4 - d2) / 3.0;
      g[i] = (16.0 * r2 - r1) / 15.0;
    }
    return g;
  }

  // False when some relu changes state at one of the stencil points, i.e. the
  // risk is not smooth along the segment finite differences sample.
  bool smooth_stencil(const Vec& w) const {
    if (spec.activation != Activation::relu) return true;
    auto pattern = [&](const Vec& x) {
      std::vector<char> p;
      naive_risk<double>(spec, x, bn, mode, *data, batch_size, l2, &p);
      return p;
    };
    const auto base = pattern(w);
    const double h = fd_step(w);
    Vec wp = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (double s : {h, -h}) {
        wp[i] = w[i] + s;
        if (pattern(wp) != base) return false;
      }
      wp[i] = w[i];
    }
    return true;
  }

  // Exact Hessian from hyper-dual forward evaluations (upper triangle mirrored).
  Mat hyperdual_hessian(const Vec& w) const {
    const std::size_t p = w.size();
    Mat h(p, p);
    std::vector<HyperDual> hw(p);
    for (std::size_t i = 0; i < p; ++i) hw[i] = HyperDual(w[i]);
    for (std::size_t j = 0; j < p; ++j) {
      hw[j].b = 1.0;
      for (std::size_t k = j; k < p; ++k) {
        hw[k].c = 1.0;
        const HyperDual r = naive_risk<HyperDual>(spec, hw, bn, mode, *data, batch_size, l2);
        h(j, k) = h(k, j) = r.d;
        hw[k].c = 0.0;
      }
      hw[j].b = 0.0;
    }
    return h;
  }
};

}  // namespace flatspec::testing
