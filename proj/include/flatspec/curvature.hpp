#pragma once

// Gradients and exact curvature products of objectives.
//
// Hessian-vector products are computed forward-over-reverse: the objective's
// gradient routine is evaluated on Dual parameters (w + eps v), and the
// tangent of the returned gradient is H v. No finite differences are used.

#include <concepts>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>

#include "flatspec/deep_linear.hpp"
#include "flatspec/dual.hpp"
#include "flatspec/kernels.hpp"
#include "flatspec/linear_operator.hpp"
#include "flatspec/model.hpp"

namespace flatspec {

class CurvatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything exposing `S evaluate(span<const S> w, span<S> grad)` for double and Dual.
template <class O>
concept Objective = requires(const O& o, std::span<const double> w, std::span<double> g,
                             std::span<const Dual> wd, std::span<Dual> gd) {
  { o.dim() } -> std::convertible_to<std::size_t>;
  { o.evaluate(w, g) } -> std::convertible_to<double>;
  { o.evaluate(wd, gd) } -> std::convertible_to<Dual>;
};

template <Objective O>
Vec gradient(const O& obj, std::span<const double> w) {
  Vec g(obj.dim(), 0.0);
  obj.evaluate(w, std::span<double>(g));
  return g;
}

template <Objective O>
Vec hvp(const O& obj, std::span<const double> w, std::span<const double> v) {
  const std::size_t p = obj.dim();
  if (w.size() != p || v.size() != p) throw CurvatureError("hvp: vector length does not match objective");
  std::vector<Dual> wd(p), gd(p);
  for (std::size_t i = 0; i < p; ++i) wd[i] = Dual(w[i], v[i]);
  obj.evaluate(std::span<const Dual>(wd), std::span<Dual>(gd));
  Vec out(p);
  for (std::size_t i = 0; i < p; ++i) {
    out[i] = gd[i].d;
    if (!std::isfinite(out[i])) throw CurvatureError("hvp: non-finite component " + std::to_string(i));
  }
  return out;
}

template <Objective O>
LinearOperator hessian_operator(O obj, Vec w) {
  const std::size_t p = obj.dim();
  return {p, [obj = std::move(obj), w = std::move(w)](std::span<const double> in, std::span<double> out) {
            const Vec hv = hvp(obj, w, in);
            std::copy(hv.begin(), hv.end(), out.begin());
          }};
}

// L = exp((prod w) X) as an objective over w.
struct DeepLinearObjective {
  std::size_t depth = 3;
  double x = 1.0;

  std::size_t dim() const { return depth; }
  template <class S>
  S evaluate(std::span<const S> w, std::span<S> grad) const {
    return deep_linear_value_and_grad<S>(w, x, grad);
  }
};

// L = 1/2 w^T A w.
struct QuadraticObjective {
  Mat a;

  std::size_t dim() const { return a.rows(); }
  template <class S>
  S evaluate(std::span<const S> w, std::span<S> grad) const {
    S loss{};
    for (std::size_t r = 0; r < a.rows(); ++r) {
      S acc{};
      for (std::size_t c = 0; c < a.cols(); ++c) acc += a(r, c) * w[c];
      grad[r] = acc;
      loss += 0.5 * w[r] * acc;
    }
    return loss;
  }
};

// Fixed partition of a dataset into contiguous batches.
struct BatchSet {
  std::vector<Mat> inputs;
  std::vector<std::vector<int>> labels;
  std::size_t total = 0;

  static BatchSet partition(const Dataset& data, std::size_t batch_size);
  std::size_t count() const { return inputs.size(); }
};

// Empirical risk of the feed-forward classifier over a fixed batch list,
// R(w) = (1/N) sum_i l_i + l2/2 ||w||^2. In BN train mode each batch is
// normalized with its own statistics. Batches may be evaluated concurrently;
// partial sums are always reduced in batch order, so results are bit-stable.
class MlpObjective {
 public:
  MlpObjective(ModelSpec spec, const Dataset& data, BatchNormState bn, BnMode mode, double l2,
               std::size_t batch_size = 0, Exec exec = Exec::parallel);

  std::size_t dim() const { return layout_.size(); }
  double l2() const { return l2_; }
  const ModelSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  BnMode mode() const { return mode_; }
  std::size_t batch_count() const { return batches_->count(); }
  std::size_t sample_count() const { return batches_->total; }

  MlpObjective with_l2(double l2) const {
    MlpObjective o = *this;
    o.l2_ = l2;
    return o;
  }
  MlpObjective with_exec(Exec exec) const {
    MlpObjective o = *this;
    o.exec_ = exec;
    return o;
  }

  template <class S>
  S evaluate(std::span<const S> w, std::span<S> grad) const;

  // (J^T H_z J + l2 I) v with H_z = diag(p) - p p^T per sample.
  Vec ggn_product(std::span<const double> w, std::span<const double> v) const;

 private:
  ModelSpec spec_;
  ParamLayout layout_;
  std::shared_ptr<const BatchSet> batches_;
  BatchNormState bn_;
  BnMode mode_;
  double l2_;
  Exec exec_;
};

extern template double MlpObjective::evaluate<double>(std::span<const double>, std::span<double>) const;
extern template Dual MlpObjective::evaluate<Dual>(std::span<const Dual>, std::span<Dual>) const;

// Model, parameters and data at which curvature is measured. By default the
// L2 shift l2*I is excluded from curvature products (it still enters the
// gradient); include_l2_in_curvature switches it on.
struct CurvatureContext {
  MlpObjective objective;
  Vec params;
  bool include_l2_in_curvature = false;

  // Objective whose Hessian is the reported curvature.
  MlpObjective curvature_objective() const {
    return objective.with_l2(include_l2_in_curvature ? objective.l2() : 0.0);
  }
};

CurvatureContext make_context(const ModelSpec& spec, const ParamVector& params, const BatchNormState& bn, BnMode mode,
                              const Dataset& data, double l2, std::size_t batch_size = 0,
                              bool include_l2_in_curvature = false, Exec exec = Exec::parallel);

double loss(const CurvatureContext& ctx);
Vec gradient(const CurvatureContext& ctx);
Vec hvp(const CurvatureContext& ctx, std::span<const double> v);
Vec ggn_vp(const CurvatureContext& ctx, std::span<const double> v);

LinearOperator hessian_operator(const CurvatureContext& ctx);
LinearOperator ggn_operator(const CurvatureContext& ctx);

inline constexpr std::size_t kExactHessianCap = 2000;

// Dense matrix assembled column by column from op(e_j). Refuses dim > cap.
Mat exact_hessian(const LinearOperator& op, std::size_t cap = kExactHessianCap);
Mat exact_hessian(const CurvatureContext& ctx, std::size_t cap = kExactHessianCap);

}  // namespace flatspec
