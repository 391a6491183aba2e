#pragma once

// Forward and backward passes of the feed-forward classifier, generic over the
// scalar type. S = double gives losses and gradients; S = Dual carries a
// parameter-space tangent through both passes, so the backward pass returns
// the exact directional derivative of the gradient (a Hessian-vector product).

#include <cmath>
#include <span>
#include <vector>

#include "flatspec/dual.hpp"
#include "flatspec/kernels.hpp"
#include "flatspec/model.hpp"

namespace flatspec {

template <class S>
struct HiddenCache {
  Matrix<S> z;      // affine output
  Matrix<S> xhat;   // normalized z (batch-norm layers)
  Matrix<S> y;      // activation input
  Matrix<S> a;      // activation output
  std::vector<S> inv_std;
  Vec batch_mean;   // values only; used to update running statistics
  Vec batch_var;
};

template <class S>
struct ForwardCache {
  std::vector<HiddenCache<S>> hidden;
  Matrix<S> logits;
};

namespace detail {

template <class S>
Matrix<S> block_matrix(std::span<const S> w, const ParamBlock& b) {
  return Matrix<S>(b.rows, b.cols, std::vector<S>(w.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                  w.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size())));
}

template <class S>
std::span<const S> block_span(std::span<const S> w, const ParamBlock& b) {
  return w.subspan(b.offset, b.size());
}

template <class S>
void add_bias(Matrix<S>& z, std::span<const S> bias) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
}

template <class S>
void accumulate_colsum(const Matrix<S>& m, std::span<S> out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
}

template <class S>
void accumulate(std::span<S> dst, const Matrix<S>& src) {
  const auto& d = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) dst[i] += d[i];
}

template <class S>
void check_input(const ModelSpec& spec, const Matrix<S>& x) {
  if (x.cols() != spec.input_dim)
    throw ModelError("forward: layer 0 expects " + std::to_string(spec.input_dim) + " inputs, got " +
                     std::to_string(x.cols()));
}

}  // namespace detail

template <class S, class SX>
ForwardCache<S> mlp_forward(const ModelSpec& spec, const ParamLayout& layout, std::span<const S> w,
                            const BatchNormState& bn, const Matrix<SX>& x, BnMode mode, Exec exec) {
  using std::sqrt;
  using std::tanh;
  detail::check_input(spec, x);
  if (w.size() != layout.size())
    throw ModelError("forward: parameter length " + std::to_string(w.size()) + " does not match layout " +
                     std::to_string(layout.size()));
  const std::size_t n = x.rows();
  const std::size_t hidden = spec.hidden_widths.size();
  ForwardCache<S> cache;
  cache.hidden.resize(hidden);

  for (std::size_t l = 0; l <= hidden; ++l) {
    const Matrix<S> weight = detail::block_matrix(w, layout.block(l, ParamRole::weight));
    const auto bias = detail::block_span(w, layout.block(l, ParamRole::bias));
    Matrix<S> z;
    if (l == 0) {
      kernels::gemm_nn(exec, x, weight, z);
    } else {
      kernels::gemm_nn(exec, cache.hidden[l - 1].a, weight, z);
    }
    detail::add_bias(z, bias);
    if (l == hidden) {
      cache.logits = std::move(z);
      break;
    }

    auto& hc = cache.hidden[l];
    const std::size_t width = z.cols();
    if (spec.has_bn(l)) {
      const auto gamma = detail::block_span(w, layout.block(l, ParamRole::bn_gamma));
      const auto beta = detail::block_span(w, layout.block(l, ParamRole::bn_beta));
      hc.inv_std.assign(width, S{});
      hc.batch_mean.assign(width, 0.0);
      hc.batch_var.assign(width, 0.0);
      hc.xhat = Matrix<S>(n, width);
      hc.y = Matrix<S>(n, width);
      for (std::size_t j = 0; j < width; ++j) {
        S mean{}, var{};
        if (mode == BnMode::train) {
          for (std::size_t i = 0; i < n; ++i) mean += z(i, j);
          mean = mean / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const S c = z(i, j) - mean;
            var += c * c;
          }
          var = var / static_cast<double>(n);
          hc.batch_mean[j] = value_of(mean);
          hc.batch_var[j] = value_of(var);
        } else {
          if (bn.running_mean.size() <= l || bn.running_mean[l].size() != width)
            throw ModelError("forward: layer " + std::to_string(l) + " has no running statistics");
          mean = S{bn.running_mean[l][j]};
          var = S{bn.running_var[l][j]};
        }
        hc.inv_std[j] = 1.0 / sqrt(var + kBnEpsilon);
        for (std::size_t i = 0; i < n; ++i) {
          hc.xhat(i, j) = (z(i, j) - mean) * hc.inv_std[j];
          hc.y(i, j) = gamma[j] * hc.xhat(i, j) + beta[j];
        }
      }
    } else {
      hc.y = z;
    }
    hc.z = std::move(z);

    hc.a = Matrix<S>(n, width);
    auto& ad = hc.a.data();
    const auto& yd = hc.y.data();
    switch (spec.activation) {
      case Activation::identity: ad = yd; break;
      case Activation::relu:
        for (std::size_t k = 0; k < yd.size(); ++k) ad[k] = value_of(yd[k]) > 0.0 ? yd[k] : S{};
        break;
      case Activation::tanh:
        for (std::size_t k = 0; k < yd.size(); ++k) ad[k] = tanh(yd[k]);
        break;
    }
  }
  return cache;
}

// Accumulates d(loss)/d(params) into `grad` given the upstream logit gradient.
template <class S, class SX>
void mlp_backward(const ModelSpec& spec, const ParamLayout& layout, std::span<const S> w,
                  const ForwardCache<S>& cache, const Matrix<SX>& x, BnMode mode, const Matrix<S>& dlogits,
                  std::span<S> grad, Exec exec) {
  const std::size_t hidden = spec.hidden_widths.size();
  const std::size_t n = x.rows();
  Matrix<S> delta = dlogits;  // gradient w.r.t. the current layer's affine output
  Matrix<S> dw;
  Matrix<S> da;

  for (std::size_t l = hidden + 1; l-- > 0;) {
    const auto& wb = layout.block(l, ParamRole::weight);
    const auto& bb = layout.block(l, ParamRole::bias);
    if (l < hidden) {
      // delta currently holds d/d(activation output) of hidden layer l.
      const auto& hc = cache.hidden[l];
      auto& dd = delta.data();
      const auto& yd = hc.y.data();
      const auto& ad = hc.a.data();
      switch (spec.activation) {
        case Activation::identity: break;
        case Activation::relu:
          for (std::size_t k = 0; k < dd.size(); ++k)
            if (!(value_of(yd[k]) > 0.0)) dd[k] = S{};
          break;
        case Activation::tanh:
          for (std::size_t k = 0; k < dd.size(); ++k) dd[k] = dd[k] * (1.0 - ad[k] * ad[k]);
          break;
      }
      if (spec.has_bn(l)) {
        const auto& gb = layout.block(l, ParamRole::bn_gamma);
        const auto& betab = layout.block(l, ParamRole::bn_beta);
        const auto gamma = detail::block_span(w, gb);
        const std::size_t width = delta.cols();
        for (std::size_t j = 0; j < width; ++j) {
          S dgamma{}, dbeta{}, sum_dxhat{}, sum_dxhat_xhat{};
          for (std::size_t i = 0; i < n; ++i) {
            dgamma += delta(i, j) * hc.xhat(i, j);
            dbeta += delta(i, j);
            const S dxhat = delta(i, j) * gamma[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * hc.xhat(i, j);
          }
          grad[gb.offset + j] += dgamma;
          grad[betab.offset + j] += dbeta;
          const double nd = static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const S dxhat = delta(i, j) * gamma[j];
            if (mode == BnMode::train) {
              delta(i, j) = hc.inv_std[j] / nd * (nd * dxhat - sum_dxhat - hc.xhat(i, j) * sum_dxhat_xhat);
            } else {
              delta(i, j) = dxhat * hc.inv_std[j];
            }
          }
        }
      }
    }

    if (l == 0) {
      kernels::gemm_tn(exec, x, delta, dw);
    } else {
      kernels::gemm_tn(exec, cache.hidden[l - 1].a, delta, dw);
    }
    detail::accumulate(grad.subspan(wb.offset, wb.size()), dw);
    detail::accumulate_colsum(delta, grad.subspan(bb.offset, bb.size()));
    if (l > 0) {
      const Matrix<S> weight = detail::block_matrix(w, wb);
      kernels::gemm_nt(exec, delta, weight, da);
      std::swap(delta, da);
    }
  }
}

// Sum over rows of softmax cross-entropy. If dlogits is given it receives
// scale * (softmax - onehot).
template <class S>
S softmax_xent_sum(const Matrix<S>& logits, std::span<const int> labels, double scale, Matrix<S>* dlogits) {
  using std::exp;
  using std::log;
  const std::size_t n = logits.rows(), c = logits.cols();
  if (dlogits) *dlogits = Matrix<S>(n, c);
  S total{};
  std::vector<S> e(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (value_of(row[k]) > value_of(row[arg])) arg = k;
    const S mx = row[arg];
    S sum{};
    for (std::size_t k = 0; k < c; ++k) {
      e[k] = exp(row[k] - mx);
      sum += e[k];
    }
    const std::size_t q = static_cast<std::size_t>(labels[i]);
    total += log(sum) - (row[q] - mx);
    if (dlogits) {
      for (std::size_t k = 0; k < c; ++k) {
        S p = e[k] / sum;
        if (k == q) p -= 1.0;
        (*dlogits)(i, k) = p * scale;
      }
    }
  }
  return total;
}

// Loss sum of one batch; accumulates scale * gradient of that sum into grad.
template <class S>
S batch_loss_and_grad(const ModelSpec& spec, const ParamLayout& layout, std::span<const S> w,
                      const BatchNormState& bn, const Mat& x, std::span<const int> labels, BnMode mode,
                      double scale, std::span<S> grad, Exec exec, ForwardCache<S>* keep = nullptr) {
  ForwardCache<S> cache = mlp_forward<S>(spec, layout, w, bn, x, mode, exec);
  Matrix<S> dlogits;
  const S loss = softmax_xent_sum(cache.logits, labels, scale, &dlogits);
  mlp_backward<S>(spec, layout, w, cache, x, mode, dlogits, grad, exec);
  if (keep) *keep = std::move(cache);
  return loss;
}

// Logits for `inputs`; in train mode the whole input is one batch.
Mat forward(const ModelSpec& spec, const ParamVector& params, const BatchNormState& bn, const Mat& inputs,
            BnMode mode, Exec exec = Exec::parallel);

struct SoftmaxResult {
  double loss;  // mean over rows
  Mat probs;
};
SoftmaxResult softmax_cross_entropy(const Mat& logits, std::span<const int> labels);

// sum_i sum_{k != q(i)} exp(z_k - z_q(i)) / N: first-order expansion of the
// cross-entropy, accurate only in the small-loss regime.
double small_loss_exponential_approx(const Mat& logits, std::span<const int> labels);

// Exponential moving update of running statistics from a train-mode pass.
void update_running_stats(BatchNormState& bn, const ForwardCache<double>& cache, double momentum);

double accuracy(const Mat& logits, std::span<const int> labels);

}  // namespace flatspec
