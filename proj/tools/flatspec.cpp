#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "flatspec/curvature.hpp"
#include "flatspec/experiment.hpp"
#include "flatspec/oracle.hpp"
#include "flatspec/plots.hpp"

using namespace flatspec;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kFailed = 1, kInvalid = 2;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T>
T load_as(const fs::path& p, const char* what) {
  try {
    return read_json_file(p).get<T>();
  } catch (const std::exception& e) {
    throw PlanError(std::string(what) + ": " + e.what());
  }
}

fs::path resolve_from(const fs::path& base, const fs::path& p) {
  return p.empty() || p.is_absolute() ? p : base.parent_path() / p;
}

DatasetSource load_dataset_source(const fs::path& p) {
  auto d = load_as<DatasetSource>(p, "dataset");
  d.images = resolve_from(p, d.images);
  d.labels = resolve_from(p, d.labels);
  return d;
}

struct TrainArgs {
  fs::path model, config, dataset, out;
  bool serial = false;
};

int cmd_train(const TrainArgs& a) {
  const auto spec = load_as<ModelSpec>(a.model, "model");
  const auto cfg = load_as<TrainConfig>(a.config, "config");
  const auto src = load_dataset_source(a.dataset);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw PlanError(e.what());
  }
  const Split data = load_split(src);
  const Exec exec = a.serial ? Exec::serial : Exec::parallel;
  const TrainResult r = train(spec, cfg, data.train, &data.validation, {}, std::nullopt, exec);
  fs::create_directories(a.out);
  write_atomic(a.out / "history.csv", history_csv(r.history));
  if (r.diverged) {
    std::fprintf(stderr, "training failed: %s\n", r.failure.c_str());
    return kFailed;
  }
  write_atomic(a.out / "checkpoint.json", dump(Json(Checkpoint{spec, r.solution(), r.solution_bn(), cfg})));
  const Evaluation tr = evaluate(spec, r.solution(), r.solution_bn(), data.train, BnMode::eval, exec);
  const Evaluation va = evaluate(spec, r.solution(), r.solution_bn(), data.validation, BnMode::eval, exec);
  const Json summary{{"train", {{"loss", tr.loss}, {"accuracy", tr.accuracy}}},
                     {"validation", {{"loss", va.loss}, {"accuracy", va.accuracy}}},
                     {"weight_norm", norm2(r.solution().flat)},
                     {"averaged_count", r.averaged_count},
                     {"epochs", r.history.size()}};
  write_atomic(a.out / "summary.json", dump(summary));
  std::cout << dump(summary);
  return kOk;
}

struct SpectrumArgs {
  fs::path checkpoint, dataset, out, report;
  std::string op = "hessian", bn_mode = "eval", probe = "rademacher";
  std::size_t m = 80, seeds = 1, batch_size = 0;
  std::uint64_t base_seed = 0;
  bool l2_in_curvature = false, merge = false, no_merge = false, serial = false;
};

int cmd_spectrum(const SpectrumArgs& a) {
  const auto ck = load_as<Checkpoint>(a.checkpoint, "checkpoint");
  const Split data = load_split(load_dataset_source(a.dataset));
  const Exec exec = a.serial ? Exec::serial : Exec::parallel;
  const CurvatureKind kind = curvature_kind_from_string(a.op);
  const BnMode mode = bn_mode_from_string(a.bn_mode);
  const CurvatureContext ctx =
      make_context(ck.spec, ck.params, ck.bn, mode, data.train, ck.config.l2, a.batch_size, a.l2_in_curvature, exec);
  const LinearOperator op = kind == CurvatureKind::hessian ? hessian_operator(ctx) : ggn_operator(ctx);
  const RitzSpectrum s = spectral_density(op, a.m, a.seeds, probe_from_string(a.probe), a.base_seed, exec);
  const std::string text = dump(Json(s));
  write_atomic(a.out, text);

  SharpnessContext sc;
  sc.kind = kind;
  sc.bn_mode = mode;
  sc.l2 = ck.config.l2;
  sc.l2_in_curvature = a.l2_in_curvature;
  sc.dataset_id = data.train.id;
  sc.samples = data.train.size();
  sc.batch_size = a.batch_size;
  const Evaluation tr = evaluate(ck.spec, ck.params, ck.bn, data.train, BnMode::eval, exec);
  const Evaluation va = evaluate(ck.spec, ck.params, ck.bn, data.validation, BnMode::eval, exec);
  sc.train_loss = tr.loss;
  sc.train_acc = tr.accuracy;
  sc.test_loss = va.loss;
  sc.test_acc = va.accuracy;
  const RankBoundInput rb = RankBoundInput::from_spec(ck.spec);
  const SharpnessReport rep = a.merge      ? sharpness_report(s, rb, sc, true)
                              : a.no_merge ? sharpness_report(s, rb, sc, false)
                                           : sharpness_report(s, rb, sc);
  const Json j{{"spectrum", {{"file", a.out.filename().string()}, {"fnv1a64", hash_hex(fnv1a64(text))}}},
               {"report", rep}};
  const fs::path report = a.report.empty() ? fs::path(a.out.string() + ".report.json") : a.report;
  write_atomic(report, dump(j));
  std::cout << dump(j);
  return kOk;
}

struct PlanArgs {
  fs::path file, out, mnist_images, mnist_labels;
  std::string default_name;
  std::vector<std::string> only;
  bool print = false, serial = false, quiet = false;
};

int cmd_plan(const PlanArgs& a) {
  ExperimentPlan plan;
  if (!a.default_name.empty()) {
    if (!a.file.empty()) throw PlanError("give either a plan file or --default, not both");
    if (a.mnist_images.empty() != a.mnist_labels.empty())
      throw PlanError("--mnist-images and --mnist-labels go together");
    std::optional<std::pair<fs::path, fs::path>> mnist;
    if (!a.mnist_images.empty()) mnist = std::pair{a.mnist_images, a.mnist_labels};
    plan = default_plan(a.default_name, a.out.empty() ? fs::path("runs") / a.default_name : a.out, mnist);
    plan.validate();
  } else {
    if (a.file.empty()) throw PlanError("a plan file or --default NAME is required");
    plan = load_plan(a.file);
    if (!a.out.empty()) plan.output_dir = a.out;
  }
  if (a.print) {
    std::cout << dump(Json(plan));
    return kOk;
  }
  RunOptions opts;
  opts.exec = a.serial ? Exec::serial : Exec::parallel;
  opts.only = a.only;
  opts.quiet = a.quiet;
  const PlanResult res = run_plan(plan, opts);
  std::cout << slurp(res.comparison_csv);
  for (const auto& f : res.failures) std::fprintf(stderr, "variant %s failed: %s\n", f.variant.c_str(), f.error.c_str());
  return res.exit_code();
}

struct OracleArgs {
  fs::path out;
  bool serial = false;
};

int cmd_oracle(const OracleArgs& a) {
  const OracleReport rep = oracle_suite(a.serial ? Exec::serial : Exec::parallel);
  const std::string text = dump(Json(rep));
  if (!a.out.empty()) write_atomic(a.out, text);
  std::cout << text;
  return rep.all_pass() ? kOk : kFailed;
}

struct PlotArgs {
  fs::path spectrum, history, csv, svg;
  std::string title;
};

int cmd_plot(const PlotArgs& a) {
  if (a.spectrum.empty() == a.history.empty()) throw PlanError("give exactly one of --spectrum or --history");
  std::string csv, svg;
  const std::string title = a.title.empty() ? (a.spectrum.empty() ? a.history : a.spectrum).stem().string() : a.title;
  if (!a.spectrum.empty()) {
    const auto s = load_as<RitzSpectrum>(a.spectrum, "spectrum");
    csv = spectrum_csv(s);
    svg = spectrum_svg(s, title);
  } else {
    const auto h = parse_history_csv(slurp(a.history));
    csv = history_plot_csv(h);
    svg = history_svg(h, title);
  }
  if (a.csv.empty()) std::cout << csv;
  else write_atomic(a.csv, csv);
  if (!a.svg.empty()) write_atomic(a.svg, svg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvature spectra of trained classifiers"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one config and write a checkpoint");
  tr->add_option("--model", ta.model, "model spec JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--config", ta.config, "train config JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--dataset", ta.dataset, "dataset source JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->add_flag("--serial", ta.serial, "use the serial kernels");

  SpectrumArgs sa;
  auto* sp = app.add_subcommand("spectrum", "Lanczos spectrum of a checkpoint");
  sp->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  sp->add_option("--dataset", sa.dataset, "dataset source JSON (training split is used)")
      ->required()
      ->check(CLI::ExistingFile);
  sp->add_option("--out", sa.out, "spectrum JSON")->required();
  sp->add_option("--report", sa.report, "report JSON (default <out>.report.json)");
  sp->add_option("--operator", sa.op)->check(CLI::IsMember({"hessian", "ggn"}));
  sp->add_option("--bn-mode", sa.bn_mode)->check(CLI::IsMember({"train", "eval"}));
  sp->add_option("--probe", sa.probe)->check(CLI::IsMember({"rademacher", "gaussian"}));
  sp->add_option("--m", sa.m)->check(CLI::PositiveNumber);
  sp->add_option("--seeds", sa.seeds)->check(CLI::PositiveNumber);
  sp->add_option("--base-seed", sa.base_seed);
  sp->add_option("--batch-size", sa.batch_size, "curvature batch size, 0 for one batch");
  sp->add_flag("--l2-in-curvature", sa.l2_in_curvature);
  auto* mg = sp->add_flag("--merge", sa.merge, "merge the two nodes nearest zero");
  sp->add_flag("--no-merge", sa.no_merge)->excludes(mg);
  sp->add_flag("--serial", sa.serial);

  PlanArgs pa;
  auto* pl = app.add_subcommand("plan", "Run an experiment plan");
  pl->add_option("file", pa.file, "plan JSON");
  pl->add_option("--default", pa.default_name, "built-in desk plan")
      ->check(CLI::IsMember(default_plan_names()));
  pl->add_option("--out", pa.out, "output directory override");
  pl->add_option("--mnist-images", pa.mnist_images)->check(CLI::ExistingFile);
  pl->add_option("--mnist-labels", pa.mnist_labels)->check(CLI::ExistingFile);
  pl->add_option("--only", pa.only, "run only these variants");
  pl->add_flag("--print", pa.print, "print the resolved plan and exit");
  pl->add_flag("--serial", pa.serial);
  pl->add_flag("--quiet", pa.quiet);

  OracleArgs oa;
  auto* orc = app.add_subcommand("oracle", "Run the numerical self-checks");
  orc->add_option("--out", oa.out, "write the JSON report here too");
  orc->add_flag("--serial", oa.serial);

  PlotArgs qa;
  auto* pt = app.add_subcommand("plot", "Plot data from a spectrum JSON or history CSV");
  pt->add_option("--spectrum", qa.spectrum)->check(CLI::ExistingFile);
  pt->add_option("--history", qa.history)->check(CLI::ExistingFile);
  pt->add_option("--csv", qa.csv, "CSV output (stdout if omitted)");
  pt->add_option("--svg", qa.svg, "SVG output");
  pt->add_option("--title", qa.title);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*tr) return cmd_train(ta);
    if (*sp) return cmd_spectrum(sa);
    if (*pl) return cmd_plan(pa);
    if (*orc) return cmd_oracle(oa);
    if (*pt) return cmd_plot(qa);
  } catch (const PlanError& e) {
    std::fprintf(stderr, "invalid plan: %s\n", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kOk;
}
