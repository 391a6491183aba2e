#include <benchmark/benchmark.h>

#include "flatspec/curvature.hpp"
#include "flatspec/datasets.hpp"
#include "flatspec/kernels.hpp"
#include "flatspec/rng.hpp"
#include "flatspec/slq.hpp"

using namespace flatspec;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (auto& x : m.data()) x = rng.normal();
  return m;
}

Exec exec_of(const benchmark::State& st) { return st.range(1) ? Exec::parallel : Exec::serial; }

void BM_gemm_nn(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Mat a = random_mat(n, n, 1), b = random_mat(n, n, 2);
  Mat c;
  for (auto _ : st) {
    kernels::gemm_nn(exec_of(st), a, b, c);
    benchmark::DoNotOptimize(c.data().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

void BM_gemm_tn(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Mat a = random_mat(4 * n, n, 1), b = random_mat(4 * n, n, 2);
  Mat c;
  for (auto _ : st) {
    kernels::gemm_tn(exec_of(st), a, b, c);
    benchmark::DoNotOptimize(c.data().data());
  }
}

struct HvpFixture {
  ModelSpec spec{100, {64, 64}, 10, Activation::relu, {true, false}, LossKind::cross_entropy};
  Dataset data = synth_blobs(100, 10, 200, 3.0, 1);
  ParamVector params = init_params(spec, 3);
  BatchNormState bn = BatchNormState::fresh(spec);
};

void BM_hvp(benchmark::State& st) {
  static const HvpFixture f;
  const auto ctx = make_context(f.spec, f.params, f.bn, BnMode::train, f.data, 0.0, 128, false, exec_of(st));
  Rng rng(5);
  const Vec v = rademacher(rng, f.params.flat.size());
  for (auto _ : st) benchmark::DoNotOptimize(hvp(ctx, v));
}

void BM_spectrum(benchmark::State& st) {
  static const HvpFixture f;
  const auto ctx = make_context(f.spec, f.params, f.bn, BnMode::eval, f.data, 0.0, 0, false, exec_of(st));
  const auto op = hessian_operator(ctx);
  for (auto _ : st) benchmark::DoNotOptimize(spectral_density(op, 10, 2, Probe::rademacher, 0, exec_of(st)));
}

}  // namespace

BENCHMARK(BM_gemm_nn)->ArgsProduct({{64, 256}, {0, 1}})->ArgNames({"n", "parallel"});
BENCHMARK(BM_gemm_tn)->ArgsProduct({{64, 256}, {0, 1}})->ArgNames({"n", "parallel"});
BENCHMARK(BM_hvp)->ArgsProduct({{0}, {0, 1}})->ArgNames({"_", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_spectrum)->ArgsProduct({{0}, {0, 1}})->ArgNames({"_", "parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
