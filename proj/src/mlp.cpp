#include "flatspec/mlp.hpp"

#include <cmath>

namespace flatspec {

Mat forward(const ModelSpec& spec, const ParamVector& params, const BatchNormState& bn, const Mat& inputs,
            BnMode mode, Exec exec) {
  auto cache = mlp_forward<double>(spec, params.layout, std::span<const double>(params.flat), bn, inputs, mode, exec);
  return std::move(cache.logits);
}

SoftmaxResult softmax_cross_entropy(const Mat& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw ModelError("softmax_cross_entropy: label count mismatch");
  const std::size_t n = logits.rows();
  // With scale 1 the logit gradient is p - onehot; add the onehot back for p.
  Mat grad;
  const double total = softmax_xent_sum(logits, labels, 1.0, &grad);
  for (std::size_t i = 0; i < n; ++i) grad(i, static_cast<std::size_t>(labels[i])) += 1.0;
  return {total / static_cast<double>(n), std::move(grad)};
}

double small_loss_exponential_approx(const Mat& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw ModelError("small_loss_exponential_approx: label count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto q = static_cast<std::size_t>(labels[i]);
    for (std::size_t k = 0; k < logits.cols(); ++k)
      if (k != q) total += std::exp(logits(i, k) - logits(i, q));
  }
  return total / static_cast<double>(logits.rows());
}

void update_running_stats(BatchNormState& bn, const ForwardCache<double>& cache, double momentum) {
  for (std::size_t l = 0; l < cache.hidden.size(); ++l) {
    const auto& hc = cache.hidden[l];
    if (hc.batch_mean.empty()) continue;
    auto& rm = bn.running_mean[l];
    auto& rv = bn.running_var[l];
    for (std::size_t j = 0; j < rm.size(); ++j) {
      rm[j] = (1.0 - momentum) * rm[j] + momentum * hc.batch_mean[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * hc.batch_var[j];
    }
  }
}

double accuracy(const Mat& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[arg]) arg = k;
    if (static_cast<int>(arg) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace flatspec
