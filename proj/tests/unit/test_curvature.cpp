#include <cmath>

#include "doctest.h"
#include "flatspec/curvature.hpp"
#include "flatspec/mlp.hpp"
#include "oracles.hpp"

using namespace flatspec;
using namespace flatspec::testing;

namespace {

struct Case {
  ModelSpec spec;
  ParamVector params;
  BatchNormState bn;
  BnMode mode;
  Dataset data;
  std::size_t batch_size;
  double l2;
};

Case make_case(std::uint64_t seed) {
  Rng rng(seed);
  Case c;
  c.spec.input_dim = 2 + rng.below(4);
  const std::size_t depth = rng.below(3);
  for (std::size_t l = 0; l < depth; ++l) c.spec.hidden_widths.push_back(2 + rng.below(6));
  c.spec.output_dim = 2 + rng.below(3);
  c.spec.activation = static_cast<Activation>(rng.below(3));
  for (std::size_t l = 0; l < depth; ++l) c.spec.batch_norm.push_back(rng.below(2) == 1);
  c.params = init_params(c.spec, seed + 100);
  for (auto& w : c.params.flat) w += 0.2 * rng.normal();
  c.bn = random_bn(c.spec, rng);
  c.mode = rng.below(2) ? BnMode::train : BnMode::eval;
  c.data = random_dataset(6 + rng.below(10), c.spec.input_dim, c.spec.output_dim, seed + 7);
  c.batch_size = rng.below(2) ? 0 : 4;
  c.l2 = rng.below(2) ? 0.0 : 0.05;
  return c;
}

CurvatureContext context(const Case& c, bool include_l2 = true, Exec exec = Exec::parallel) {
  return make_context(c.spec, c.params, c.bn, c.mode, c.data, c.l2, c.batch_size, include_l2, exec);
}

NaiveProblem naive(const Case& c) { return {c.spec, c.bn, c.mode, &c.data, c.batch_size, c.l2}; }

Vec unit(std::size_t p, std::size_t j) {
  Vec e(p, 0.0);
  e[j] = 1.0;
  return e;
}

}  // namespace

TEST_CASE("gradient matches naive finite differences and hvp matches hyper-dual Hessian") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    CAPTURE(seed);
    const Case c = make_case(seed);
    const auto ctx = context(c);
    const auto ref = naive(c);
    CHECK(loss(ctx) == doctest::Approx(ref.risk(c.params.flat)).epsilon(1e-12));

    const Vec g = gradient(ctx);
    const Vec fd = ref.fd_gradient(c.params.flat);
    CHECK(max_abs_diff(g, fd) <= 1e-6 * std::max(1.0, max_abs(g)));

    const Mat h = ref.hyperdual_hessian(c.params.flat);
    const std::size_t p = ctx.objective.dim();
    double worst = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const Vec hv = hvp(ctx, unit(p, j));
      for (std::size_t i = 0; i < p; ++i) worst = std::max(worst, std::abs(hv[i] - h(i, j)));
    }
    CHECK(worst <= 1e-8 * std::max(1.0, max_abs(h.data())));
  }
}

TEST_CASE("quadratic objective: hvp is A v exactly") {
  Rng rng(3);
  const QuadraticObjective q{random_symmetric(rng, 7)};
  const Vec w = gaussian(rng, 7), v = gaussian(rng, 7);
  CHECK(hvp(q, w, v) == matvec(q.a, v));
  CHECK(gradient(q, w) == matvec(q.a, w));
}

TEST_CASE("deep linear wrapper: gradient and Hessian equal closed forms") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    DeepLinearModel m;
    m.weights.resize(3 + rng.below(3));
    for (auto& w : m.weights) w = rng.uniform(-1.1, 1.1);
    m.x = rng.uniform(-1.5, 1.5);
    const DeepLinearObjective obj{m.weights.size(), m.x};
    const Vec g = gradient(obj, m.weights), ref = deep_linear_grad(m);
    CHECK(max_abs_diff(g, ref) <= 1e-12 * std::max(1.0, max_abs(ref)));
    const Mat h = exact_hessian(hessian_operator(obj, m.weights));
    const Mat full = deep_linear_full_hessian(m);
    CHECK(max_abs_diff(h.data(), full.data()) <= 1e-10 * std::max(1.0, max_abs(full.data())));
  }
}

TEST_CASE("softmax regression: bias gradient is mean of p - onehot") {
  ModelSpec spec{3, {}, 4, Activation::identity, {}, LossKind::cross_entropy};
  ParamVector p = init_params(spec, 1);
  std::fill(p.flat.begin(), p.flat.end(), 0.0);
  const Dataset d = random_dataset(9, 3, 4, 5);
  const auto ctx = make_context(spec, p, BatchNormState::fresh(spec), BnMode::eval, d, 0.0);
  const Vec g = gradient(ctx);
  const auto& bb = p.layout.block(0, ParamRole::bias);
  for (std::size_t k = 0; k < 4; ++k) {
    double expect = 0.25;
    for (int l : d.labels) expect -= (l == static_cast<int>(k)) / 9.0;
    CHECK(g[bb.offset + k] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("L2: pure decay gradient and curvature shift") {
  ModelSpec spec{3, {}, 2, Activation::identity, {}, LossKind::cross_entropy};
  ParamVector p = init_params(spec, 2);
  // A single sample whose inputs are zero and whose logits tie gives zero data gradient only for weights;
  // with biases zero and two balanced samples the bias gradient vanishes as well.
  Dataset d;
  d.inputs = Mat(2, 3);
  d.labels = {0, 1};
  d.num_classes = 2;
  auto flat = p.flat;
  const auto& bb = p.layout.block(0, ParamRole::bias);
  flat[bb.offset] = flat[bb.offset + 1] = 0.0;
  p.flat = flat;
  const auto ctx = make_context(spec, p, BatchNormState::fresh(spec), BnMode::eval, d, 0.3);
  const Vec g = gradient(ctx);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(0.3 * p.flat[i]).epsilon(1e-14));

  const Case c = make_case(5);
  Case c0 = c, c1 = c;
  c0.l2 = 0.0;
  c1.l2 = 0.1;
  Rng rng(9);
  const Vec v = gaussian(rng, c.params.flat.size());
  const Vec h0 = hvp(context(c0), v), h1 = hvp(context(c1, true), v);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(h1[i] - h0[i] - 0.1 * v[i]) <= 1e-12);
  const Vec excluded = hvp(context(c1, false), v);
  CHECK(excluded == h0);
  CHECK(gradient(context(c1, false)) == gradient(context(c1, true)));
}

TEST_CASE("hvp linearity, symmetry and determinism") {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    const Case c = make_case(seed);
    const auto ctx = context(c);
    Rng rng(seed);
    const std::size_t p = ctx.objective.dim();
    const Vec u = gaussian(rng, p), v = gaussian(rng, p);
    const double a = rng.normal(), b = rng.normal();
    Vec comb(p);
    for (std::size_t i = 0; i < p; ++i) comb[i] = a * v[i] + b * u[i];
    const Vec hu = hvp(ctx, u), hv = hvp(ctx, v), hc = hvp(ctx, comb);
    for (std::size_t i = 0; i < p; ++i)
      CHECK(std::abs(hc[i] - (a * hv[i] + b * hu[i])) <= 1e-8 * std::max(1.0, max_abs(hc)));
    const double uhv = dot(u, hv), vhu = dot(v, hu);
    CHECK(std::abs(uhv - vhu) <= 1e-8 * std::max(1.0, std::abs(uhv)));
    CHECK(hvp(ctx, v) == hv);
    CHECK(gradient(ctx) == gradient(ctx));
  }
}

TEST_CASE("serial and parallel evaluation are bit-identical") {
  for (std::uint64_t seed = 30; seed < 34; ++seed) {
    const Case c = make_case(seed);
    const auto ser = context(c, true, Exec::serial), par = context(c, true, Exec::parallel);
    Rng rng(seed);
    const Vec v = gaussian(rng, ser.objective.dim());
    CHECK(gradient(ser) == gradient(par));
    CHECK(hvp(ser, v) == hvp(par, v));
    CHECK(ggn_vp(ser, v) == ggn_vp(par, v));
  }
}

TEST_CASE("GGN: PSD, symmetric, and equal to the Hessian for a linear model") {
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    const Case c = make_case(seed);
    const auto ctx = context(c);
    Rng rng(seed);
    const std::size_t p = ctx.objective.dim();
    for (int k = 0; k < 5; ++k) {
      const Vec v = gaussian(rng, p);
      CHECK(dot(v, ggn_vp(ctx, v)) >= -1e-10);
    }
    const Mat g = exact_hessian(ggn_operator(ctx));
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(g(i, j) - g(j, i)) <= 1e-10);
  }

  ModelSpec lin{4, {}, 3, Activation::identity, {}, LossKind::cross_entropy};
  ParamVector p = init_params(lin, 3);
  const Dataset d = random_dataset(12, 4, 3, 9);
  const auto ctx = make_context(lin, p, BatchNormState::fresh(lin), BnMode::eval, d, 0.0);
  const Mat h = exact_hessian(ctx), g = exact_hessian(ggn_operator(ctx));
  CHECK(max_abs_diff(h.data(), g.data()) <= 1e-12);
}

TEST_CASE("GGN: logit-space curvature at uniform two-class probabilities") {
  // One sample, zero input, zero parameters: J maps the bias block to logits identically,
  // so the bias block of G is diag(p) - p p^T.
  ModelSpec spec{1, {}, 2, Activation::identity, {}, LossKind::cross_entropy};
  ParamVector p = init_params(spec, 1);
  std::fill(p.flat.begin(), p.flat.end(), 0.0);
  Dataset d;
  d.inputs = Mat(1, 1);
  d.labels = {0};
  d.num_classes = 2;
  const auto ctx = make_context(spec, p, BatchNormState::fresh(spec), BnMode::eval, d, 0.0);
  const Mat g = exact_hessian(ggn_operator(ctx));
  const auto& bb = p.layout.block(0, ParamRole::bias);
  CHECK(g(bb.offset, bb.offset) == 0.25);
  CHECK(g(bb.offset, bb.offset + 1) == -0.25);
  CHECK(g(bb.offset + 1, bb.offset + 1) == 0.25);
}

TEST_CASE("exact Hessian: symmetric and capped") {
  const Case c = make_case(50);
  const Mat h = exact_hessian(context(c));
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(h(i, j) - h(j, i)) <= 1e-9);
  CHECK_THROWS_AS(exact_hessian(context(c), 3), CurvatureError);
}

TEST_CASE("errors: non-finite inputs and mismatched data") {
  const Case c = make_case(60);
  const auto ctx = context(c);
  Vec v(ctx.objective.dim(), 0.0);
  v[0] = std::nan("");
  CHECK_THROWS_AS(hvp(ctx, v), CurvatureError);
  CHECK_THROWS_AS(hvp(ctx, Vec(3, 1.0)), CurvatureError);

  ModelSpec lin{3, {4}, 2, Activation::identity, {}, LossKind::cross_entropy};
  ParamVector big = init_params(lin, 1);
  std::fill(big.flat.begin(), big.flat.end(), 1e200);
  const Dataset d = random_dataset(5, 3, 2, 1);
  CHECK_THROWS_WITH_AS(gradient(make_context(lin, big, BatchNormState::fresh(lin), BnMode::eval, d, 0.0)),
                       doctest::Contains("batch 0"), CurvatureError);

  Dataset wrong = random_dataset(4, c.spec.input_dim + 1, c.spec.output_dim, 1);
  CHECK_THROWS_AS(make_context(c.spec, c.params, c.bn, c.mode, wrong, 0.0), CurvatureError);
}

TEST_CASE("small-loss flattening: scaling the output layer on separable data") {
  ModelSpec spec{2, {8}, 2, Activation::tanh, {}, LossKind::cross_entropy};
  // Two well separated clusters; a trained-looking net is built by hand.
  Dataset d;
  d.inputs = Mat(8, 2, {2, 2, 2.5, 1.5, 1.5, 2.5, 2, 3, -2, -2, -2.5, -1.5, -1.5, -2.5, -2, -3});
  d.labels = {0, 0, 0, 0, 1, 1, 1, 1};
  d.num_classes = 2;
  ParamVector p = init_params(spec, 1);
  auto layers = unflatten(spec, p);
  for (std::size_t j = 0; j < 8; ++j) {
    layers[0].weight(0, j) = 0.5 + 0.05 * static_cast<double>(j);
    layers[0].weight(1, j) = 0.4;
    layers[1].weight(j, 0) = 0.5;
    layers[1].weight(j, 1) = -0.5;
  }
  double prev_loss = 1e9, prev_grad = 1e9, prev_curv = 1e9;
  Rng rng(2);
  const Vec v = gaussian(rng, p.flat.size());
  for (double s : {1.0, 2.0, 4.0, 8.0}) {
    auto scaled = layers;
    for (auto& w : scaled[1].weight.data()) w *= s;
    const ParamVector ps = flatten(spec, scaled);
    const auto ctx = make_context(spec, ps, BatchNormState::fresh(spec), BnMode::eval, d, 0.0);
    const double l = loss(ctx), gn = norm2(gradient(ctx)), hn = norm2(hvp(ctx, v)) / norm2(v);
    CHECK(l < prev_loss);
    CHECK(gn < prev_grad);
    CHECK(hn < prev_curv);
    prev_loss = l;
    prev_grad = gn;
    prev_curv = hn;
  }
}
