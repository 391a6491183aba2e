#pragma once

// Scalar product-chain model L = exp((w_1 * ... * w_d) X) with closed-form
// derivatives. Used to illustrate that rescaling (w_i -> a w_i, w_j -> w_j / a)
// leaves the loss unchanged while gradient and curvature move arbitrarily.

#include <algorithm>
#include <cstdint>
#include <vector>
#include <cmath>
#include <span>
#include <stdexcept>

#include "flatspec/dual.hpp"
#include "flatspec/linalg.hpp"

namespace flatspec {

inline constexpr double kExponentClamp = 700.0;

struct DeepLinearModel {
  Vec weights;  // d >= 2
  double x = 1.0;

  void validate() const {
    if (weights.size() < 2) throw std::invalid_argument("DeepLinearModel: depth must be >= 2");
  }
};

struct DeepLinearLoss {
  double loss;
  bool saturated;
};

DeepLinearLoss deep_linear_loss(const DeepLinearModel& m);

// Component i is (prod_{j != i} w_j) X exp((prod w) X).
Vec deep_linear_grad(const DeepLinearModel& m);

// |X| exp(...) sqrt(sum_i prod_{j != i} w_j^2), the closed-form gradient norm.
double deep_linear_grad_norm(const DeepLinearModel& m);

// Rank-one curvature matrix |X| L g g^T with g_i = prod_{j != i} w_j, together
// with its trace, which equals its largest eigenvalue.
struct DeepLinearHessian {
  Mat matrix;
  double trace;
  double lambda_max;
  bool saturated;
};
DeepLinearHessian deep_linear_hessian(const DeepLinearModel& m);

// Full second derivative of exp((prod w) X):
//   X^2 L g_i g_j + [i != j] X L prod_{k != i,j} w_k
Mat deep_linear_full_hessian(const DeepLinearModel& m);

// Product of all weights except index `skip` (and `skip2`, if distinct).
template <class S>
S product_except(std::span<const S> w, std::size_t skip, std::size_t skip2 = SIZE_MAX) {
  S p{1.0};
  for (std::size_t k = 0; k < w.size(); ++k)
    if (k != skip && k != skip2) p = p * w[k];
  return p;
}

// Loss and gradient over any scalar type. With S = Dual the gradient tangent is
// an exact Hessian-vector product. Prefix/suffix products keep the gradient
// well defined when some weights are zero.
template <class S>
S deep_linear_value_and_grad(std::span<const S> w, double x, std::span<S> grad, bool* saturated = nullptr) {
  using std::exp;
  const std::size_t d = w.size();
  std::vector<S> prefix(d + 1, S{1.0}), suffix(d + 1, S{1.0});
  for (std::size_t i = 0; i < d; ++i) prefix[i + 1] = prefix[i] * w[i];
  for (std::size_t i = d; i-- > 0;) suffix[i] = suffix[i + 1] * w[i];
  S z = prefix[d] * x;
  bool sat = false;
  if (value_of(z) > kExponentClamp) {
    z = S{kExponentClamp};
    sat = true;
  }
  if (saturated) *saturated = sat;
  const S loss = exp(z);
  for (std::size_t i = 0; i < d; ++i) grad[i] = prefix[i] * suffix[i + 1] * x * loss;
  return loss;
}

}  // namespace flatspec
