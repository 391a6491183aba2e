#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "flatspec/experiment.hpp"
#include "flatspec/oracle.hpp"
#include "flatspec/plots.hpp"
#include "flatspec/rng.hpp"

using namespace flatspec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("flatspec_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentPlan tiny_plan(const fs::path& out) {
  ExperimentPlan p;
  p.name = "tiny";
  p.model = ModelSpec{4, {5}, 3, Activation::relu, {true}, LossKind::cross_entropy};
  p.dataset.d_x = 4;
  p.dataset.d_y = 3;
  p.dataset.n_per_class = 20;
  p.dataset.separation = 2.0;
  p.dataset.seed = 1;
  p.dataset.n_train = 40;
  p.dataset.n_validation = 20;
  Variant a, b, c;
  a.config.name = "b-sgd";
  a.config.epochs = 4;
  a.config.batch_size = 8;
  a.config.lr = 0.05;
  a.lr_grid = {0.01, 0.05};
  b.config = a.config;
  b.config.name = "a-gadam";
  b.config.optimizer = OptimizerKind::gadam;
  b.config.avg_start = 2;
  b.config.decoupled_decay = 0.1;
  b.config.lr = 1e-2;
  b.lr_grid.clear();
  c.config = a.config;
  c.config.name = "c-diverges";
  c.config.lr = 1e6;
  c.lr_grid.clear();
  p.variants = {a, b, c};
  p.spectrum.m = 10;
  p.spectrum.seeds = 2;
  p.spectrum.bn_modes = {BnMode::train, BnMode::eval};
  p.spectrum.batch_size = 8;
  p.spectrum.operators = {CurvatureKind::hessian, CurvatureKind::ggn};
  p.spectrum.track_every = 2;
  p.output_dir = out;
  return p;
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("json round trips") {
  const ModelSpec spec{7, {4, 3}, 2, Activation::tanh, {true, false}, LossKind::cross_entropy};
  CHECK(Json(Json(spec).get<ModelSpec>()) == Json(spec));
  Json shorthand{{"input_dim", 3}, {"hidden_widths", {2, 2}}, {"output_dim", 2}, {"batch_norm", true}};
  CHECK(shorthand.get<ModelSpec>().batch_norm == std::vector<bool>{true, true});
  Json bad = Json(spec);
  bad["loss"] = "mse";
  CHECK_THROWS_AS(bad.get<ModelSpec>(), ModelError);

  TrainConfig c;
  c.name = "x";
  c.optimizer = OptimizerKind::adamw;
  c.lr = 0.1 + 0.2;
  c.decoupled_decay = 1.0 / 3.0;
  c.seed = 0xffffffffffffffffULL;
  const TrainConfig c2 = Json(c).get<TrainConfig>();
  CHECK(c2.lr == c.lr);
  CHECK(c2.decoupled_decay == c.decoupled_decay);
  CHECK(c2.seed == c.seed);
  CHECK(c2.optimizer == OptimizerKind::adamw);

  Rng rng(3);
  Mat a(30, 30);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  const RitzSpectrum s = spectral_density(dense_operator(a), 12, 3, Probe::gaussian, 99);
  const std::string text = dump(Json(s));
  const RitzSpectrum back = Json::parse(text).get<RitzSpectrum>();
  CHECK(back.nodes == s.nodes);
  CHECK(back.weights == s.weights);
  CHECK(back.seeds == s.seeds);
  CHECK(back.per_seed[1].tridiag.offdiag == s.per_seed[1].tridiag.offdiag);
  CHECK(dump(Json(back)) == text);
  const Json sj = Json::parse(text);
  for (const char* k : {"P", "m", "seeds", "nodes", "weights", "probe", "base_seed", "per_seed"}) CHECK(sj.contains(k));

  SharpnessContext ctx;
  ctx.test_acc = 0.5;
  const SharpnessReport r = sharpness_report(s, RankBoundInput{2, 2, {3}, 30}, ctx);
  const SharpnessReport r2 = Json(r).get<SharpnessReport>();
  CHECK(r2.lambda_max == r.lambda_max);
  CHECK(r2.degeneracy_ratio == r.degeneracy_ratio);
  CHECK(r2.context.test_acc == 0.5);
  CHECK(!r2.context.train_loss);

  EpochRecord e{3, 0.1, 0.5, 0.9, std::nan(""), 0.0, 2.0};
  const Json ej = e;
  CHECK(ej.at("test_loss").is_null());
  CHECK(std::isnan(ej.get<EpochRecord>().test_loss));

  const ParamVector p = init_params(spec, 5);
  BatchNormState bn = BatchNormState::fresh(spec);
  bn.running_mean[0][1] = 0.25;
  const Checkpoint ck = Json(Checkpoint{spec, p, bn, c}).get<Checkpoint>();
  CHECK(ck.params.flat == p.flat);
  CHECK(ck.bn.running_mean[0][1] == 0.25);
  CHECK(ck.bn.running_mean[1].empty());
  Json broken = Checkpoint{spec, p, bn, c};
  broken["params"].erase(0);
  CHECK_THROWS_AS(broken.get<Checkpoint>(), ModelError);
}

TEST_CASE("plan validation") {
  TempDir tmp("plan");
  const ExperimentPlan good = tiny_plan(tmp.path / "out");
  good.validate();

  auto expect_bad = [](ExperimentPlan p, const char* needle) {
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains(needle), PlanError);
  };
  ExperimentPlan p = good;
  p.variants[1].config.name = p.variants[0].config.name;
  expect_bad(p, "duplicate");
  p = good;
  p.variants[0].config.name = "../escape";
  expect_bad(p, "unsafe");
  p = good;
  p.dataset.kind = "mnist";
  p.dataset.images = tmp.path / "nope.idx";
  p.dataset.labels = tmp.path / "nope.idx";
  expect_bad(p, "does not exist");
  p = good;
  p.model.input_dim = 5;
  expect_bad(p, "features");
  p = good;
  p.variants.clear();
  expect_bad(p, "no variants");
  p = good;
  p.spectrum.m = 0;
  expect_bad(p, "spectrum.m");
  p = good;
  p.variants[0].lr_grid = {0.1, -1.0};
  expect_bad(p, "lr_grid");
  p = good;
  p.dataset.n_validation = 0;
  expect_bad(p, "split");

  Json j = good;
  const ExperimentPlan back = j.get<ExperimentPlan>();
  CHECK(Json(back) == j);
  j["variants"][0]["learning_rate"] = 0.1;
  CHECK_THROWS_WITH_AS(j.get<ExperimentPlan>(), doctest::Contains("learning_rate"), PlanError);

  std::ofstream(tmp.path / "plan.json") << Json(good).dump();
  Json rel = good;
  rel["output_dir"] = "relative_out";
  std::ofstream(tmp.path / "rel.json") << rel.dump();
  CHECK(load_plan(tmp.path / "rel.json").output_dir == tmp.path / "relative_out");
  std::ofstream(tmp.path / "broken.json") << "{ not json";
  CHECK_THROWS_AS(load_plan(tmp.path / "broken.json"), PlanError);
}

TEST_CASE("run_plan artifacts, failure isolation and determinism") {
  TempDir tmp("run");
  const ExperimentPlan plan = tiny_plan(tmp.path / "out");
  RunOptions opts;
  opts.quiet = true;
  const PlanResult res = run_plan(plan, opts);

  REQUIRE(res.artifacts.size() == 2);
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0].variant == "c-diverges");
  CHECK(res.failures[0].error.find("diverged") != std::string::npos);
  CHECK(res.exit_code() == 1);
  CHECK(res.artifacts[0].variant == "a-gadam");
  CHECK(res.artifacts[1].variant == "b-sgd");

  for (const auto& a : res.artifacts) {
    for (const auto& p : {a.config_path, a.checkpoint_path, a.history_path, a.report_path, a.metadata_path}) CHECK(fs::exists(p));
    CHECK(a.spectra.size() == 4);
    const Json rep = read_json_file(a.report_path);
    for (const auto& s : rep.at("spectra")) {
      const fs::path sp = a.dir / s.at("spectrum").at("file").get<std::string>();
      CHECK(fs::exists(sp));
      CHECK(file_hash(sp) == s.at("spectrum").at("fnv1a64").get<std::string>());
    }
    CHECK(fs::exists(a.dir / "degeneracy.csv"));
    CHECK(slurp(a.dir / "degeneracy.csv").rfind("epoch,ratio,node_value\n2,", 0) == 0);
    for (const auto& e : fs::directory_iterator(a.dir)) CHECK(e.path().string().find(".tmp.") == std::string::npos);
  }
  const Json tuning = read_json_file(res.artifacts[1].report_path).at("tuning");
  CHECK(tuning.size() == 2);
  CHECK(read_json_file(res.artifacts[0].report_path).at("averaged_count") == 3);

  const Json cmp = read_json_file(res.comparison_json);
  CHECK(cmp.at("rows").size() == 8);
  CHECK(cmp.at("rows")[0].at("variant") == "a-gadam");
  CHECK(cmp.at("failures")[0].at("variant") == "c-diverges");
  const std::string csv = slurp(res.comparison_csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  std::map<fs::path, std::string> first;
  for (const auto& e : fs::recursive_directory_iterator(plan.output_dir))
    if (e.is_regular_file() && e.path().filename() != "artifact.json") first[e.path()] = slurp(e.path());
  opts.exec = Exec::serial;
  run_plan(plan, opts);
  std::size_t same = 0;
  for (const auto& [path, text] : first) same += slurp(path) == text;
  CHECK(same == first.size());

  opts.only = {"b-sgd"};
  const PlanResult one = run_plan(plan, opts);
  CHECK(one.artifacts.size() == 1);
  CHECK(one.exit_code() == 0);
  opts.only = {"zzz"};
  CHECK_THROWS_AS(run_plan(plan, opts), PlanError);
}

TEST_CASE("mnist plan from idx fixtures") {
  TempDir tmp("mnistplan");
  IdxImages img{60, 4, 4, {}};
  Rng rng(1);
  std::vector<std::uint8_t> labels(60);
  for (std::size_t i = 0; i < 60; ++i) {
    labels[i] = static_cast<std::uint8_t>(i % 10);
    for (int k = 0; k < 16; ++k)
      img.pixels.push_back(static_cast<std::uint8_t>(std::min(255.0, 20.0 * labels[i] + 30.0 * rng.uniform())));
  }
  write_idx_images(tmp.path / "img", img);
  write_idx_labels(tmp.path / "lab", labels);
  ExperimentPlan p = default_plan("l2-sharpness", tmp.path / "out", std::pair{tmp.path / "img", tmp.path / "lab"});
  CHECK(p.dataset.kind == "mnist");
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("features"), PlanError);
  p.model.input_dim = 16;
  p.dataset.split_fraction = 0.0;
  p.dataset.n_train = 40;
  p.dataset.n_validation = 20;
  p.dataset.standardize = true;
  for (auto& v : p.variants) v.config.epochs = 3;
  p.spectrum.m = 8;
  RunOptions opts;
  opts.quiet = true;
  const PlanResult r = run_plan(p, opts);
  CHECK(r.exit_code() == 0);
  CHECK(r.artifacts.size() == 3);
}

TEST_CASE("default plans validate on synthetic data") {
  for (const auto& n : default_plan_names()) default_plan(n, "unused").validate();
  CHECK_THROWS_AS(default_plan("nope", "x"), PlanError);
  const auto bn = default_plan("bn-mode", "x");
  CHECK(bn.spectrum.bn_modes.size() == 2);
  CHECK(bn.variants.size() == 1);
  const auto l2 = default_plan("l2-sharpness", "x");
  CHECK(l2.variants.size() == 3);
  CHECK(l2.variants[2].config.l2 == 5e-4);
  CHECK(l2.model.hidden_widths.empty());
}

TEST_CASE("plot data") {
  const RitzSpectrum s = spectral_density(identity_operator(20), 5, 1);
  CHECK(spectrum_csv(s) == "node,weight\n1,1\n");
  const std::string svg = spectrum_svg(s, "identity");
  std::size_t stems = 0;
  for (std::size_t at = 0; (at = svg.find("stroke=\"steelblue\"", at)) != std::string::npos; ++at) ++stems;
  CHECK(stems == 1);
  CHECK(svg.rfind("<svg", 0) == 0);

  std::vector<EpochRecord> h{{1, 0.1, 1.0, 0.5, 1.1, 0.4, 3.0}, {2, 0.1, 0.8, 0.6, 0.9, 0.75, 3.5}};
  CHECK(history_plot_csv(h) == "epoch,test_error,weight_norm\n1,0.59999999999999998,3\n2,0.25,3.5\n");
  const auto parsed = parse_history_csv(history_csv(h));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].test_acc == 0.75);
  CHECK(parsed[0].weight_norm == 3.0);
  CHECK_THROWS(parse_history_csv("a,b\n"));
  const std::string hs = history_svg(h, "h");
  CHECK(std::count(hs.begin(), hs.end(), 'p') > 0);
  CHECK(hs.find("polyline") != std::string::npos);

  CHECK(degeneracy_csv({{5, 0.9, -1e-7}}) == "epoch,ratio,node_value\n5,0.90000000000000002,-9.9999999999999995e-08\n");
}

TEST_CASE("atomic write") {
  TempDir tmp("atomic");
  write_atomic(tmp.path / "sub" / "f.txt", "one");
  write_atomic(tmp.path / "sub" / "f.txt", "two");
  CHECK(slurp(tmp.path / "sub" / "f.txt") == "two");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path / "sub")) ++n;
  CHECK(n == 1);
}

TEST_CASE("oracle suite passes") {
  const OracleReport r = oracle_suite();
  CHECK(r.results.size() >= 12);
  for (const auto& o : r.results) {
    INFO(o.name << " measured " << o.measured << " tol " << o.tolerance);
    CHECK(o.pass);
  }
  const Json j = r;
  CHECK(j.at("pass") == true);
}
