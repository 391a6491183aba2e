#pragma once

#include <functional>
#include <span>

#include "flatspec/linalg.hpp"

namespace flatspec {

// Symmetric matrix-free operator v -> A v.
struct LinearOperator {
  std::size_t dim = 0;
  std::function<void(std::span<const double> in, std::span<double> out)> apply;

  Vec operator()(std::span<const double> v) const {
    Vec out(dim, 0.0);
    apply(v, out);
    return out;
  }
};

inline LinearOperator dense_operator(Mat a) {
  const std::size_t n = a.rows();
  return {n, [a = std::move(a)](std::span<const double> in, std::span<double> out) {
            for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), in);
          }};
}

inline LinearOperator diagonal_operator(Vec d) {
  const std::size_t n = d.size();
  return {n, [d = std::move(d)](std::span<const double> in, std::span<double> out) {
            for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * in[i];
          }};
}

inline LinearOperator identity_operator(std::size_t n) {
  return {n, [](std::span<const double> in, std::span<double> out) {
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i];
          }};
}

}  // namespace flatspec
