#include "flatspec/tridiag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flatspec {

Mat SymTridiag::dense() const {
  const std::size_t m = diag.size();
  Mat a(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    a(i, i) = diag[i];
    if (i + 1 < m) {
      a(i, i + 1) = offdiag[i];
      a(i + 1, i) = offdiag[i];
    }
  }
  return a;
}

TridiagEigen sym_tridiag_eigen(const SymTridiag& t, bool want_vectors) {
  const std::size_t n = t.diag.size();
  if (n == 0) throw std::invalid_argument("sym_tridiag_eigen: empty matrix");
  if (t.offdiag.size() + 1 != n) {
    throw std::invalid_argument("sym_tridiag_eigen: offdiag length must be diag length - 1");
  }

  Vec d = t.diag;
  Vec e(n, 0.0);
  std::copy(t.offdiag.begin(), t.offdiag.end(), e.begin());

  // z holds either the full eigenvector matrix or just its first row.
  const std::size_t zrows = want_vectors ? n : 1;
  Mat z(zrows, n);
  for (std::size_t k = 0; k < zrows; ++k) z(k, k) = 1.0;

  constexpr std::size_t kMaxIterPerValue = 60;
  const double eps = std::numeric_limits<double>::epsilon();
  double f = 0.0;
  double tst1 = 0.0;

  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

    if (m > l) {
      std::size_t iter = 0;
      do {
        if (++iter > kMaxIterPerValue) throw TridiagConvergenceError(l, kMaxIterPerValue);

        // Wilkinson-style shift from the leading 2x2 block.
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[ii];
          h = c * p;
          r = std::hypot(p, e[ii]);
          e[ii + 1] = s * r;
          s = e[ii] / r;
          c = p / r;
          p = c * d[ii] - s * g;
          d[ii + 1] = h + s * (c * g + s * d[ii]);
          for (std::size_t k = 0; k < zrows; ++k) {
            h = z(k, ii + 1);
            z(k, ii + 1) = s * z(k, ii) + c * h;
            z(k, ii) = c * z(k, ii) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  TridiagEigen out;
  out.eigenvalues.resize(n);
  out.first_components.resize(n);
  if (want_vectors) out.vectors = Mat(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = order[i];
    out.eigenvalues[i] = d[src];
    out.first_components[i] = z(0, src);
    if (want_vectors)
      for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = z(k, src);
  }
  return out;
}

}  // namespace flatspec
