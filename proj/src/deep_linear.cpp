#include "flatspec/deep_linear.hpp"

namespace flatspec {

namespace {

struct Chain {
  Vec g;  // g_i = prod_{j != i} w_j
  double loss;
  bool saturated;
};

Chain chain(const DeepLinearModel& m) {
  m.validate();
  Chain c;
  c.g.resize(m.weights.size());
  const std::span<const double> w(m.weights);
  for (std::size_t i = 0; i < w.size(); ++i) c.g[i] = product_except(w, i);
  double z = product_except(w, SIZE_MAX) * m.x;
  c.saturated = z > kExponentClamp;
  if (c.saturated) z = kExponentClamp;
  c.loss = std::exp(z);
  return c;
}

}  // namespace

DeepLinearLoss deep_linear_loss(const DeepLinearModel& m) {
  const Chain c = chain(m);
  return {c.loss, c.saturated};
}

Vec deep_linear_grad(const DeepLinearModel& m) {
  const Chain c = chain(m);
  Vec g(c.g.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = c.g[i] * m.x * c.loss;
  return g;
}

double deep_linear_grad_norm(const DeepLinearModel& m) {
  const Chain c = chain(m);
  double s = 0.0;
  for (double gi : c.g) s += gi * gi;
  return std::abs(m.x) * std::sqrt(s) * c.loss;
}

DeepLinearHessian deep_linear_hessian(const DeepLinearModel& m) {
  const Chain c = chain(m);
  const std::size_t d = c.g.size();
  const double scale = std::abs(m.x) * c.loss;
  DeepLinearHessian h{Mat(d, d), 0.0, 0.0, c.saturated};
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    sq += c.g[i] * c.g[i];
    for (std::size_t j = 0; j < d; ++j) h.matrix(i, j) = c.g[i] * c.g[j] * scale;
  }
  h.trace = sq * scale;
  h.lambda_max = h.trace;
  return h;
}

Mat deep_linear_full_hessian(const DeepLinearModel& m) {
  const Chain c = chain(m);
  const std::size_t d = c.g.size();
  const std::span<const double> w(m.weights);
  Mat h(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = m.x * m.x * c.loss * c.g[i] * c.g[j];
      if (i != j) v += m.x * c.loss * product_except(w, i, j);
      h(i, j) = v;
    }
  }
  return h;
}

}  // namespace flatspec
