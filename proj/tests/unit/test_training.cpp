#include <cmath>

#include "doctest.h"
#include "flatspec/training.hpp"
#include "oracles.hpp"

using namespace flatspec;
using namespace flatspec::testing;

TEST_CASE("plain schedule examples") {
  CHECK(lr_schedule(7, 10, 1.0, 0.01) == doctest::Approx(0.505).epsilon(1e-14));
  CHECK(lr_schedule(5, 10, 0.3, 0.01) == 0.3);
  CHECK(std::abs(lr_schedule(9, 10, 0.3, 0.01) - 0.003) <= 1e-15);
  CHECK(lr_schedule(10, 10, 0.3, 0.01) == 0.3 * 0.01);
  CHECK(lr_schedule(0, 10, 0.3, 0.01) == 0.3);
}

TEST_CASE("averaging schedule examples") {
  CHECK(lr_schedule_avg(2, 10, 8, 0.2) == 0.2);
  CHECK(lr_schedule_avg(7.5, 10, 8, 0.2) == 0.1);
  CHECK(lr_schedule_avg(10, 10, 8, 0.2) == 0.1);
  // Ramp as printed: t / T_avg = 0.75 selects the ramp, which is then evaluated at t / T = 0.6.
  CHECK(lr_schedule_avg(6, 10, 8, 0.2) == doctest::Approx(0.2 * (1 - 0.5 * 0.1 / 0.4)).epsilon(1e-14));
  CHECK(lr_schedule_avg(6, 10, 8, 0.2, true) == doctest::Approx(0.2 * (1 - 0.5 * 0.25 / 0.4)).epsilon(1e-14));
  CHECK(lr_schedule_avg(6, 8, 8, 0.2) == lr_schedule_avg(6, 8, 8, 0.2, true));
}

TEST_CASE("config helpers") {
  TrainConfig c;
  c.epochs = 20;
  c.lr = 0.4;
  c.final_lr_fraction = 0.1;
  CHECK(lr_schedule(14, c) == lr_schedule(14, 20, 0.4, 0.1));
  c.optimizer = OptimizerKind::gadam;
  c.avg_start = 16;
  CHECK(lr_schedule_avg(19, c) == 0.2);
  c.validate();
  c.avg_start = 20;
  CHECK_THROWS_AS(c.validate(), TrainError);
  c.avg_start = 0;
  CHECK_THROWS_AS(c.validate(), TrainError);
  TrainConfig bad;
  bad.lr = 0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  bad = TrainConfig{};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  bad = TrainConfig{};
  bad.final_lr_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  CHECK(optimizer_from_string(to_string(OptimizerKind::adamw)) == OptimizerKind::adamw);
  CHECK_THROWS_AS(optimizer_from_string("lion"), TrainError);
}

TEST_CASE("sgd step") {
  Vec w{0.0};
  OptimizerState s(1);
  const Vec g{1.0};
  sgd_step(w, s, g, 0.1, 0.9);
  CHECK(w[0] == doctest::Approx(-0.1).epsilon(1e-15));
  sgd_step(w, s, g, 0.1, 0.9);
  CHECK(s.z[0] == doctest::Approx(1.9).epsilon(1e-15));
  CHECK(w[0] == doctest::Approx(-0.29).epsilon(1e-15));

  Vec plain{1.0, 2.0};
  OptimizerState p(2);
  sgd_step(plain, p, Vec{0.5, -1}, 0.2, 0.0);
  sgd_step(plain, p, Vec{0.5, -1}, 0.2, 0.0);
  CHECK(plain[0] == doctest::Approx(0.8));
  CHECK(plain[1] == doctest::Approx(2.4));

  Vec fixed{3.0, -1.0};
  OptimizerState f(2);
  sgd_step(fixed, f, Vec{0, 0}, 0.5, 0.9);
  CHECK(fixed == Vec{3.0, -1.0});
}

TEST_CASE("adam and adamw steps") {
  Vec w{0.5};
  OptimizerState s(1);
  adam_step(w, s, Vec{1.0}, 0.001, 0.9, 0.999, 1e-8);
  CHECK(w[0] - 0.5 == doctest::Approx(-0.001 / (1 + 1e-8)).epsilon(1e-10));

  Rng rng(3);
  Vec a = gaussian(rng, 20), b = a;
  OptimizerState sa(20), sb(20);
  for (int k = 0; k < 30; ++k) {
    const Vec g = gaussian(rng, 20);
    adam_step(a, sa, g, 0.01, 0.9, 0.999, 1e-8);
    adamw_step(b, sb, g, 0.01, 0.9, 0.999, 1e-8, 0.0);
  }
  CHECK(a == b);

  Vec d{2.0, -4.0};
  OptimizerState sd(2);
  for (int k = 0; k < 5; ++k) adamw_step(d, sd, Vec{0, 0}, 0.1, 0.9, 0.999, 1e-8, 0.5);
  CHECK(d[0] == doctest::Approx(2.0 * std::pow(0.95, 5)).epsilon(1e-14));
  CHECK(d[1] == doctest::Approx(-4.0 * std::pow(0.95, 5)).epsilon(1e-14));

  Vec c{1.0};
  OptimizerState sc(1);
  const double alpha = 0.01, lambda = 0.3;
  for (int k = 0; k < 10; ++k) {
    const double before = c[0];
    adamw_step(c, sc, Vec{k % 2 ? -3.0 : 5.0}, alpha, 0.9, 0.999, 1e-8, lambda);
    // Each bias-corrected ratio is at most 1 / sqrt(1 - beta2) / (1 - beta1)-ish; a loose bound suffices.
    CHECK(std::abs(c[0] - before) <= alpha * (10.0 + lambda * std::abs(before)));
  }
}

TEST_CASE("averaged state") {
  Rng rng(5);
  AveragedState avg;
  Vec sum(10, 0.0);
  for (int k = 0; k < 37; ++k) {
    const Vec w = gaussian(rng, 10);
    avg.add(w);
    for (std::size_t i = 0; i < 10; ++i) sum[i] += w[i];
  }
  CHECK(avg.count == 37);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(avg.mean[i] - sum[i] / 37) <= 1e-12);

  AveragedState same;
  for (int k = 0; k < 4; ++k) same.add(Vec{0.3, -7.25});
  CHECK(same.mean == Vec{0.3, -7.25});
}

namespace {

Dataset blobs(std::size_t n, std::size_t d, std::uint64_t seed, double sep) {
  Dataset ds = random_dataset(n, d, 2, seed);
  for (std::size_t i = 0; i < n; ++i) ds.inputs(i, 0) += ds.labels[i] ? sep : -sep;
  return ds;
}

}  // namespace

TEST_CASE("training is reproducible and L2 shrinks the weights") {
  ModelSpec spec{5, {8}, 2, Activation::relu, {}, LossKind::cross_entropy};
  const Dataset d = blobs(80, 5, 1, 1.5), te = blobs(40, 5, 2, 1.5);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.seed = 4;
  const auto a = train(spec, cfg, d, &te);
  const auto b = train(spec, cfg, d, &te);
  REQUIRE(a.history.size() == 15);
  CHECK(a.params.flat == b.params.flat);
  for (std::size_t e = 0; e < 15; ++e) CHECK(a.history[e].train_loss == b.history[e].train_loss);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  CHECK(a.history.back().train_acc > 0.9);
  CHECK_FALSE(std::isnan(a.history.back().test_acc));

  TrainConfig reg = cfg;
  reg.l2 = 0.05;
  const auto r = train(spec, reg, d, &te);
  CHECK(norm2(r.params.flat) < norm2(a.params.flat));

  const auto ser = train(spec, cfg, d, &te, {}, std::nullopt, Exec::serial);
  CHECK(ser.params.flat == a.params.flat);

  std::size_t calls = 0;
  train(spec, cfg, d, nullptr, [&](const EpochRecord& rec, const ParamVector&, const BatchNormState&) {
    ++calls;
    CHECK(rec.epoch == calls);
    CHECK(std::isnan(rec.test_loss));
  });
  CHECK(calls == 15);
}

TEST_CASE("every optimizer trains, and schedules drive the recorded lr") {
  ModelSpec spec{4, {6}, 2, Activation::tanh, {true}, LossKind::cross_entropy};
  const Dataset d = blobs(60, 4, 9, 2.0);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw}) {
    TrainConfig cfg;
    cfg.optimizer = kind;
    cfg.lr = kind == OptimizerKind::sgd ? 0.05 : 0.01;
    cfg.decoupled_decay = kind == OptimizerKind::adamw ? 0.01 : 0.0;
    cfg.epochs = 10;
    cfg.batch_size = 10;
    const auto r = train(spec, cfg, d);
    CHECK_FALSE(r.diverged);
    CHECK(r.history.back().train_acc > 0.9);
    for (const auto& rec : r.history) CHECK(rec.lr == lr_schedule(static_cast<double>(rec.epoch - 1), cfg));
    for (const auto& v : r.bn.running_var[0]) CHECK(v > 0.0);
  }
}

TEST_CASE("gadam: averaging window, BN recompute, and divergence") {
  ModelSpec spec{4, {6}, 2, Activation::relu, {true}, LossKind::cross_entropy};
  const Dataset d = blobs(50, 4, 3, 2.0);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::gadam;
  cfg.lr = 0.01;
  cfg.decoupled_decay = 0.01;
  cfg.epochs = 6;
  cfg.avg_start = 5;
  cfg.batch_size = 10;
  std::vector<Vec> iterates;
  const auto r = gadam_run(spec, cfg, d, &d, [&](const EpochRecord&, const ParamVector& p, const BatchNormState&) {
    iterates.push_back(p.flat);
  });
  REQUIRE(r.averaged);
  CHECK(r.averaged_count == 2);
  for (std::size_t i = 0; i < iterates[4].size(); ++i)
    CHECK(r.averaged->flat[i] == doctest::Approx(0.5 * (iterates[4][i] + iterates[5][i])).epsilon(1e-12));
  for (const auto& rec : r.history) CHECK(rec.lr == lr_schedule_avg(static_cast<double>(rec.epoch - 1), cfg));
  REQUIRE(r.averaged_bn);
  REQUIRE(r.averaged_record);
  CHECK(&r.solution() == &*r.averaged);

  const BatchNormState direct = recompute_bn_stats(spec, *r.averaged, d, 10);
  CHECK(direct.running_mean == r.averaged_bn->running_mean);
  // The recomputed statistics are the plain mean of the per-batch statistics.
  Vec mean_sum(6, 0.0);
  for (std::size_t start = 0; start < 50; start += 10) {
    std::vector<std::size_t> rows;
    for (std::size_t k = start; k < start + 10; ++k) rows.push_back(k);
    const Dataset sub = d.subset(rows);
    const BatchNormState one = recompute_bn_stats(spec, *r.averaged, sub, 10);
    for (std::size_t j = 0; j < 6; ++j) mean_sum[j] += one.running_mean[0][j];
  }
  for (std::size_t j = 0; j < 6; ++j) CHECK(direct.running_mean[0][j] == doctest::Approx(mean_sum[j] / 5));

  TrainConfig sgd = cfg;
  sgd.optimizer = OptimizerKind::sgd;
  CHECK_THROWS_AS(gadam_run(spec, sgd, d), TrainError);

  TrainConfig wild;
  wild.lr = 1e6;
  wild.momentum = 0.99;
  wild.epochs = 50;
  wild.batch_size = 5;
  ModelSpec lin{4, {16}, 2, Activation::identity, {}, LossKind::cross_entropy};
  const auto bad = train(lin, wild, d);
  CHECK(bad.diverged);
  CHECK(bad.history.size() < 50);
  CHECK(bad.failure.find("diverged") != std::string::npos);
}

TEST_CASE("history csv") {
  EpochRecord r{1, 0.1, 0.5, 0.75, 0.6, 0.7, 3.0};
  const std::string csv = history_csv({r});
  CHECK(csv.rfind("epoch,lr,train_loss,train_acc,test_loss,test_acc,weight_norm\n", 0) == 0);
  CHECK(csv.find("1,0.10000000000000001,0.5,0.75,") != std::string::npos);
}
