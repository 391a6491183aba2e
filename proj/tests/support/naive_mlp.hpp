#pragma once

// Straightforward per-sample reference implementation of the classifier's
// empirical risk, written independently of the library's kernels and
// backward pass. Generic over the scalar so it can be driven by doubles
// (finite differences) or hyper-duals (exact second derivatives).

#include <cmath>
#include <vector>

#include "flatspec/model.hpp"
#include "hyperdual.hpp"

namespace flatspec::testing {

template <class T>
T naive_risk(const ModelSpec& spec, const std::vector<T>& w, const BatchNormState& bn, BnMode mode,
             const Dataset& data, std::size_t batch_size, double l2, std::vector<char>* relu_pattern = nullptr) {
  using std::exp;
  using std::log;
  using std::sqrt;
  using std::tanh;
  const std::size_t layers = spec.hidden_widths.size() + 1;

  // Offsets: per layer weight[in][out], bias[out], then gamma[out], beta[out] if BN.
  std::vector<std::size_t> w_off(layers), b_off(layers), g_off(layers), be_off(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? spec.input_dim : spec.hidden_widths[l - 1];
    const std::size_t out = l + 1 < layers ? spec.hidden_widths[l] : spec.output_dim;
    w_off[l] = off;
    off += in * out;
    b_off[l] = off;
    off += out;
    if (l + 1 < layers && l < spec.batch_norm.size() && spec.batch_norm[l]) {
      g_off[l] = off;
      off += out;
      be_off[l] = off;
      off += out;
    }
  }

  const std::size_t n = data.size();
  const std::size_t bs = batch_size == 0 ? n : batch_size;
  T total{};
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t stop = std::min(n, start + bs);
    const std::size_t m = stop - start;
    // act[i] is the current layer input of sample i.
    std::vector<std::vector<T>> act(m);
    for (std::size_t i = 0; i < m; ++i) {
      act[i].resize(spec.input_dim);
      for (std::size_t k = 0; k < spec.input_dim; ++k) act[i][k] = T(data.inputs(start + i, k));
    }
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = act[0].size();
      const std::size_t out = l + 1 < layers ? spec.hidden_widths[l] : spec.output_dim;
      std::vector<std::vector<T>> z(m, std::vector<T>(out));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < out; ++o) {
          T s = w[b_off[l] + o];
          for (std::size_t k = 0; k < in; ++k) s = s + act[i][k] * w[w_off[l] + k * out + o];
          z[i][o] = s;
        }
      if (l + 1 < layers) {
        const bool has_bn = l < spec.batch_norm.size() && spec.batch_norm[l];
        if (has_bn) {
          for (std::size_t o = 0; o < out; ++o) {
            T mean{}, var{};
            if (mode == BnMode::train) {
              for (std::size_t i = 0; i < m; ++i) mean = mean + z[i][o];
              mean = mean / T(double(m));
              for (std::size_t i = 0; i < m; ++i) var = var + (z[i][o] - mean) * (z[i][o] - mean);
              var = var / T(double(m));
            } else {
              mean = T(bn.running_mean[l][o]);
              var = T(bn.running_var[l][o]);
            }
            const T denom = sqrt(var + T(kBnEpsilon));
            for (std::size_t i = 0; i < m; ++i)
              z[i][o] = w[g_off[l] + o] * ((z[i][o] - mean) / denom) + w[be_off[l] + o];
          }
        }
        for (auto& row : z)
          for (auto& v : row) {
            if (spec.activation == Activation::relu) {
              if (relu_pattern) relu_pattern->push_back(primal(v) > 0.0);
              if (!(primal(v) > 0.0)) v = T(0.0);
            } else if (spec.activation == Activation::tanh) {
              v = tanh(v);
            }
          }
      }
      act = std::move(z);
    }
    for (std::size_t i = 0; i < m; ++i) {
      const auto& zl = act[i];
      T s{};
      for (const auto& v : zl) s = s + exp(v);
      total = total + log(s) - zl[static_cast<std::size_t>(data.labels[start + i])];
    }
  }
  total = total / T(double(n));
  if (l2 > 0.0) {
    T sq{};
    for (const auto& v : w) sq = sq + v * v;
    total = total + T(0.5 * l2) * sq;
  }
  return total;
}

}  // namespace flatspec::testing
