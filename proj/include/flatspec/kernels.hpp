#pragma once

// Dense kernels used by the MLP forward/backward passes.
//
// Every kernel has a serial reference and an OpenMP variant. Both variants
// compute each output element with the same loop nest in the same order, so
// results are bit-identical regardless of thread count; the parallel variant
// only distributes output rows across threads.

#include <cstddef>
#include <stdexcept>
#include <string>

#include "flatspec/linalg.hpp"

namespace flatspec {

enum class Exec { serial, parallel };

namespace kernels {

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("kernel shape mismatch: ") + what);
}

// C.row(i) = A.row(i) * B
template <class SA, class SB, class SC>
inline void gemm_nn_row(const Matrix<SA>& a, const Matrix<SB>& b, Matrix<SC>& c, std::size_t i) {
  auto out = c.row(i);
  for (auto& v : out) v = SC{};
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const SA aik = a(i, k);
    const auto brow = b.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
  }
}

// C.row(k) = sum_i A(i,k) * B.row(i)
template <class SA, class SB, class SC>
inline void gemm_tn_row(const Matrix<SA>& a, const Matrix<SB>& b, Matrix<SC>& c, std::size_t k) {
  auto out = c.row(k);
  for (auto& v : out) v = SC{};
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const SA aik = a(i, k);
    const auto brow = b.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
  }
}

// C(i,j) = dot(A.row(i), B.row(j))
template <class SA, class SB, class SC>
inline void gemm_nt_row(const Matrix<SA>& a, const Matrix<SB>& b, Matrix<SC>& c, std::size_t i) {
  const auto arow = a.row(i);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const auto brow = b.row(j);
    SC acc{};
    for (std::size_t k = 0; k < arow.size(); ++k) acc += arow[k] * brow[k];
    c(i, j) = acc;
  }
}

}  // namespace detail

// C = A * B
template <class SA, class SB, class SC>
void gemm_nn(Exec exec, const Matrix<SA>& a, const Matrix<SB>& b, Matrix<SC>& c) {
  detail::check(a.cols() == b.rows(), "gemm_nn inner");
  if (c.rows() != a.rows() || c.cols() != b.cols()) c = Matrix<SC>(a.rows(), b.cols());
  const auto n = static_cast<long long>(a.rows());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) detail::gemm_nn_row(a, b, c, static_cast<std::size_t>(i));
  } else {
    for (long long i = 0; i < n; ++i) detail::gemm_nn_row(a, b, c, static_cast<std::size_t>(i));
  }
}

// C = A^T * B. Sums over the rows of A (the batch dimension) in row order.
template <class SA, class SB, class SC>
void gemm_tn(Exec exec, const Matrix<SA>& a, const Matrix<SB>& b, Matrix<SC>& c) {
  detail::check(a.rows() == b.rows(), "gemm_tn inner");
  if (c.rows() != a.cols() || c.cols() != b.cols()) c = Matrix<SC>(a.cols(), b.cols());
  const auto n = static_cast<long long>(a.cols());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < n; ++k) detail::gemm_tn_row(a, b, c, static_cast<std::size_t>(k));
  } else {
    for (long long k = 0; k < n; ++k) detail::gemm_tn_row(a, b, c, static_cast<std::size_t>(k));
  }
}

// C = A * B^T
template <class SA, class SB, class SC>
void gemm_nt(Exec exec, const Matrix<SA>& a, const Matrix<SB>& b, Matrix<SC>& c) {
  detail::check(a.cols() == b.cols(), "gemm_nt inner");
  if (c.rows() != a.rows() || c.cols() != b.rows()) c = Matrix<SC>(a.rows(), b.rows());
  const auto n = static_cast<long long>(a.rows());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) detail::gemm_nt_row(a, b, c, static_cast<std::size_t>(i));
  } else {
    for (long long i = 0; i < n; ++i) detail::gemm_nt_row(a, b, c, static_cast<std::size_t>(i));
  }
}

}  // namespace kernels
}  // namespace flatspec
