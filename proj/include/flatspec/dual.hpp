#pragma once

// Forward-mode dual number. Running the reverse (backprop) pass over Dual
// scalars yields the directional derivative of the gradient, i.e. an exact
// Hessian-vector product.

#include <cmath>

namespace flatspec {

struct Dual {
  double v{0.0};  // value
  double d{0.0};  // tangent

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  constexpr Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
};

constexpr Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
constexpr Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
constexpr Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
constexpr Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
constexpr Dual operator/(const Dual& a, const Dual& b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

constexpr Dual operator+(const Dual& a, double b) { return {a.v + b, a.d}; }
constexpr Dual operator+(double a, const Dual& b) { return {a + b.v, b.d}; }
constexpr Dual operator-(const Dual& a, double b) { return {a.v - b, a.d}; }
constexpr Dual operator-(double a, const Dual& b) { return {a - b.v, -b.d}; }
constexpr Dual operator*(const Dual& a, double b) { return {a.v * b, a.d * b}; }
constexpr Dual operator*(double a, const Dual& b) { return {a * b.v, a * b.d}; }
constexpr Dual operator/(const Dual& a, double b) { return {a.v / b, a.d / b}; }
constexpr Dual operator/(double a, const Dual& b) { return {a / b.v, -a * b.d / (b.v * b.v)}; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
inline Dual tanh(const Dual& a) {
  const double t = std::tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}

constexpr double value_of(double x) { return x; }
constexpr double value_of(const Dual& x) { return x.v; }
constexpr double tangent_of(double) { return 0.0; }
constexpr double tangent_of(const Dual& x) { return x.d; }

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) { return std::isfinite(x.v) && std::isfinite(x.d); }

}  // namespace flatspec
