#include "flatspec/curvature.hpp"

#include <algorithm>
#include <exception>
#include <mutex>

#include "flatspec/mlp.hpp"

namespace flatspec {

BatchSet BatchSet::partition(const Dataset& data, std::size_t batch_size) {
  data.validate();
  const std::size_t n = data.size();
  const std::size_t bs = batch_size == 0 ? n : std::min(batch_size, n);
  BatchSet set;
  set.total = n;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t stop = std::min(n, start + bs);
    std::vector<std::size_t> rows(stop - start);
    for (std::size_t r = start; r < stop; ++r) rows[r - start] = r;
    set.inputs.push_back(gather_rows(data.inputs, rows));
    set.labels.emplace_back(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                            data.labels.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return set;
}

MlpObjective::MlpObjective(ModelSpec spec, const Dataset& data, BatchNormState bn, BnMode mode, double l2,
                           std::size_t batch_size, Exec exec)
    : spec_(std::move(spec)),
      layout_(spec_),
      batches_(std::make_shared<BatchSet>(BatchSet::partition(data, batch_size))),
      bn_(std::move(bn)),
      mode_(mode),
      l2_(l2),
      exec_(exec) {
  if (data.dim() != spec_.input_dim)
    throw CurvatureError("MlpObjective: dataset has " + std::to_string(data.dim()) + " features, model expects " +
                         std::to_string(spec_.input_dim));
  if (l2_ < 0.0) throw CurvatureError("MlpObjective: L2 coefficient must be >= 0");
}

namespace {

// Runs body(b, inner_exec) for every batch. Batches go to separate threads
// when there are several; otherwise the kernels themselves run in parallel.
template <class Body>
void for_each_batch(std::size_t count, Exec exec, Body&& body) {
  if (exec == Exec::parallel && count > 1) {
    std::exception_ptr error;
    std::mutex mu;
    const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
    for (long long b = 0; b < n; ++b) {
      try {
        body(static_cast<std::size_t>(b), Exec::serial);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (std::size_t b = 0; b < count; ++b) body(b, exec);
  }
}

template <class S>
bool all_finite(const std::vector<S>& v) {
  return std::all_of(v.begin(), v.end(), [](const S& x) { return is_finite(x); });
}

}  // namespace

template <class S>
S MlpObjective::evaluate(std::span<const S> w, std::span<S> grad) const {
  const std::size_t p = layout_.size();
  if (w.size() != p || grad.size() != p) throw CurvatureError("MlpObjective::evaluate: parameter length mismatch");
  const std::size_t nb = batches_->count();
  const double scale = 1.0 / static_cast<double>(batches_->total);
  std::vector<std::vector<S>> partial(nb);
  std::vector<S> losses(nb);

  for_each_batch(nb, exec_, [&](std::size_t b, Exec inner) {
    partial[b].assign(p, S{});
    losses[b] = batch_loss_and_grad<S>(spec_, layout_, w, bn_, batches_->inputs[b], batches_->labels[b], mode_,
                                       scale, std::span<S>(partial[b]), inner);
    if (!is_finite(losses[b]) || !all_finite(partial[b]))
      throw CurvatureError("non-finite loss or derivative in batch " + std::to_string(b));
  });

  std::fill(grad.begin(), grad.end(), S{});
  S total{};
  for (std::size_t b = 0; b < nb; ++b) {
    total += losses[b];
    const auto& pb = partial[b];
    for (std::size_t i = 0; i < p; ++i) grad[i] += pb[i];
  }
  total = total * scale;
  if (l2_ > 0.0) {
    S sq{};
    for (std::size_t i = 0; i < p; ++i) {
      sq += w[i] * w[i];
      grad[i] += l2_ * w[i];
    }
    total += 0.5 * l2_ * sq;
  }
  return total;
}

template double MlpObjective::evaluate<double>(std::span<const double>, std::span<double>) const;
template Dual MlpObjective::evaluate<Dual>(std::span<const Dual>, std::span<Dual>) const;

Vec MlpObjective::ggn_product(std::span<const double> w, std::span<const double> v) const {
  const std::size_t p = layout_.size();
  if (w.size() != p || v.size() != p) throw CurvatureError("ggn_vp: vector length mismatch");
  std::vector<Dual> wd(p);
  for (std::size_t i = 0; i < p; ++i) wd[i] = Dual(w[i], v[i]);
  const std::size_t nb = batches_->count();
  const double scale = 1.0 / static_cast<double>(batches_->total);
  std::vector<Vec> partial(nb);

  for_each_batch(nb, exec_, [&](std::size_t b, Exec inner) {
    const Mat& x = batches_->inputs[b];
    // Tangent of the logits is J v.
    const auto dual_cache = mlp_forward<Dual>(spec_, layout_, std::span<const Dual>(wd), bn_, x, mode_, inner);
    auto cache = mlp_forward<double>(spec_, layout_, w, bn_, x, mode_, inner);
    const std::size_t n = x.rows(), c = cache.logits.cols();
    Mat seed(n, c);
    Vec prob(c);
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = cache.logits.row(i);
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) sum += (prob[k] = std::exp(z[k] - mx));
      double pjv = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        prob[k] /= sum;
        pjv += prob[k] * dual_cache.logits(i, k).d;
      }
      for (std::size_t k = 0; k < c; ++k) seed(i, k) = scale * prob[k] * (dual_cache.logits(i, k).d - pjv);
    }
    partial[b].assign(p, 0.0);
    mlp_backward<double>(spec_, layout_, w, cache, x, mode_, seed, std::span<double>(partial[b]), inner);
    if (!flatspec::all_finite(partial[b]))
      throw CurvatureError("non-finite GGN product in batch " + std::to_string(b));
  });

  Vec out(p, 0.0);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < p; ++i) out[i] += partial[b][i];
  if (l2_ > 0.0)
    for (std::size_t i = 0; i < p; ++i) out[i] += l2_ * v[i];
  return out;
}

CurvatureContext make_context(const ModelSpec& spec, const ParamVector& params, const BatchNormState& bn, BnMode mode,
                              const Dataset& data, double l2, std::size_t batch_size, bool include_l2_in_curvature,
                              Exec exec) {
  CurvatureContext ctx{MlpObjective(spec, data, bn, mode, l2, batch_size, exec), params.flat, include_l2_in_curvature};
  if (ctx.params.size() != ctx.objective.dim()) throw CurvatureError("make_context: parameter length mismatch");
  return ctx;
}

double loss(const CurvatureContext& ctx) {
  Vec g(ctx.objective.dim());
  return ctx.objective.evaluate(std::span<const double>(ctx.params), std::span<double>(g));
}

Vec gradient(const CurvatureContext& ctx) {
  Vec g(ctx.objective.dim());
  const double l = ctx.objective.evaluate(std::span<const double>(ctx.params), std::span<double>(g));
  if (!std::isfinite(l)) throw CurvatureError("gradient: non-finite loss");
  return g;
}

Vec hvp(const CurvatureContext& ctx, std::span<const double> v) {
  if (!all_finite(v)) throw CurvatureError("hvp: input vector is not finite");
  return hvp(ctx.curvature_objective(), ctx.params, v);
}

Vec ggn_vp(const CurvatureContext& ctx, std::span<const double> v) {
  if (!all_finite(v)) throw CurvatureError("ggn_vp: input vector is not finite");
  return ctx.curvature_objective().ggn_product(ctx.params, v);
}

LinearOperator hessian_operator(const CurvatureContext& ctx) {
  return hessian_operator(ctx.curvature_objective(), ctx.params);
}

LinearOperator ggn_operator(const CurvatureContext& ctx) {
  return {ctx.objective.dim(), [obj = ctx.curvature_objective(), w = ctx.params](std::span<const double> in,
                                                                                 std::span<double> out) {
            const Vec gv = obj.ggn_product(w, in);
            std::copy(gv.begin(), gv.end(), out.begin());
          }};
}

Mat exact_hessian(const LinearOperator& op, std::size_t cap) {
  if (op.dim > cap)
    throw CurvatureError("exact_hessian: dimension " + std::to_string(op.dim) + " exceeds cap " + std::to_string(cap));
  const std::size_t p = op.dim;
  Mat h(p, p);
  Vec e(p, 0.0), col(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < p; ++i) h(i, j) = col[i];
  }
  return h;
}

Mat exact_hessian(const CurvatureContext& ctx, std::size_t cap) { return exact_hessian(hessian_operator(ctx), cap); }

}  // namespace flatspec
