#include "flatspec/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "flatspec/curvature.hpp"
#include "flatspec/format.hpp"
#include "flatspec/plots.hpp"

namespace flatspec {

namespace fs = std::filesystem;

// ---- dataset ----

Split load_split(const DatasetSource& src) {
  Dataset all;
  if (src.kind == "mnist") {
    all = load_mnist_idx(src.images, src.labels);
    if (src.subset > 0) all = random_subset(all, src.subset, src.subset_seed);
  } else if (src.kind == "blobs") {
    all = synth_blobs(src.d_x, src.d_y, src.n_per_class, src.separation, src.seed);
  } else {
    throw PlanError("unknown dataset kind '" + src.kind + "'");
  }
  Split s = src.split_fraction > 0.0 ? mnist_style_split(all, src.split_fraction, src.split_seed)
                                     : train_validation_split(all, src.n_train, src.n_validation, src.split_seed);
  if (src.standardize) {
    const Standardizer st = Standardizer::fit(s.train);
    s.train = st.apply(s.train);
    s.validation = st.apply(s.validation);
  }
  return s;
}

// ---- validation ----

namespace {

bool safe_name(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.';
  });
}

// rows * cols from an IDX image header, without reading pixel data.
std::size_t idx_feature_count(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  unsigned char h[16];
  if (!in.read(reinterpret_cast<char*>(h), 16)) throw PlanError("cannot read IDX header of '" + p.string() + "'");
  auto be = [&](int at) {
    return (std::size_t{h[at]} << 24) | (std::size_t{h[at + 1]} << 16) | (std::size_t{h[at + 2]} << 8) |
           std::size_t{h[at + 3]};
  };
  if (be(0) != kIdxImagesMagic) throw PlanError("'" + p.string() + "' is not an IDX image file");
  return be(8) * be(12);
}

}  // namespace

void ExperimentPlan::validate() const {
  if (!safe_name(name)) throw PlanError("plan name must be non-empty and use [A-Za-z0-9._-]");
  try {
    model.validate();
  } catch (const std::exception& e) {
    throw PlanError(std::string("model: ") + e.what());
  }
  const auto& d = dataset;
  std::size_t d_x = 0, d_y = 0;
  if (d.kind == "mnist") {
    for (const auto& p : {d.images, d.labels})
      if (p.empty() || !fs::is_regular_file(p)) throw PlanError("dataset file '" + p.string() + "' does not exist");
    d_x = idx_feature_count(d.images);
    d_y = 10;
  } else if (d.kind == "blobs") {
    if (d.d_x == 0 || d.d_y == 0 || d.n_per_class == 0) throw PlanError("blobs: dimensions must be positive");
    d_x = d.d_x;
    d_y = d.d_y;
  } else {
    throw PlanError("dataset kind must be 'blobs' or 'mnist', got '" + d.kind + "'");
  }
  if (d_x != model.input_dim)
    throw PlanError("dataset has " + std::to_string(d_x) + " features but the model expects " +
                    std::to_string(model.input_dim));
  if (d_y != model.output_dim)
    throw PlanError("dataset has " + std::to_string(d_y) + " classes but the model outputs " +
                    std::to_string(model.output_dim));
  if (d.split_fraction > 0.0) {
    if (d.split_fraction > 1.0) throw PlanError("split_fraction must be in (0, 1]");
  } else if (d.n_train == 0 || d.n_validation == 0) {
    throw PlanError("dataset needs split_fraction or positive n_train and n_validation");
  }

  if (variants.empty()) throw PlanError("plan has no variants");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (!safe_name(v.config.name)) throw PlanError("variant name '" + v.config.name + "' is empty or unsafe");
    if (!names.insert(v.config.name).second) throw PlanError("duplicate variant name '" + v.config.name + "'");
    try {
      v.config.validate();
    } catch (const std::exception& e) {
      throw PlanError("variant '" + v.config.name + "': " + e.what());
    }
    for (double lr : v.lr_grid)
      if (!(lr > 0.0 && std::isfinite(lr))) throw PlanError("variant '" + v.config.name + "': bad lr in lr_grid");
  }

  const auto& s = spectrum;
  if (s.m == 0) throw PlanError("spectrum.m must be positive");
  if (s.seeds == 0) throw PlanError("spectrum.seeds must be positive");
  if (s.operators.empty() || s.bn_modes.empty()) throw PlanError("spectrum needs at least one operator and bn_mode");
  if (output_dir.empty()) throw PlanError("output_dir is required");
}

// ---- JSON ----

void to_json(Json& j, const DatasetSource& d) {
  j = Json{{"kind", d.kind},
           {"split_fraction", d.split_fraction},
           {"n_train", d.n_train},
           {"n_validation", d.n_validation},
           {"split_seed", d.split_seed},
           {"standardize", d.standardize}};
  if (d.kind == "mnist") {
    j["images"] = d.images.string();
    j["labels"] = d.labels.string();
    j["subset"] = d.subset;
    j["subset_seed"] = d.subset_seed;
  } else {
    j["d_x"] = d.d_x;
    j["d_y"] = d.d_y;
    j["n_per_class"] = d.n_per_class;
    j["separation"] = d.separation;
    j["seed"] = d.seed;
  }
}

namespace {

template <class T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw PlanError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw PlanError("unknown key '" + k + "' in " + where);
}

}  // namespace

void from_json(const Json& j, DatasetSource& d) {
  check_keys(j,
             {"kind", "images", "labels", "standardize", "subset", "subset_seed", "d_x", "d_y", "n_per_class",
              "separation", "seed", "split_fraction", "n_train", "n_validation", "split_seed"},
             "dataset");
  d = DatasetSource{};
  maybe(j, "kind", d.kind);
  if (j.contains("images")) d.images = j.at("images").get<std::string>();
  if (j.contains("labels")) d.labels = j.at("labels").get<std::string>();
  maybe(j, "standardize", d.standardize);
  maybe(j, "subset", d.subset);
  maybe(j, "subset_seed", d.subset_seed);
  maybe(j, "d_x", d.d_x);
  maybe(j, "d_y", d.d_y);
  maybe(j, "n_per_class", d.n_per_class);
  maybe(j, "separation", d.separation);
  maybe(j, "seed", d.seed);
  maybe(j, "split_fraction", d.split_fraction);
  maybe(j, "n_train", d.n_train);
  maybe(j, "n_validation", d.n_validation);
  maybe(j, "split_seed", d.split_seed);
}

void to_json(Json& j, const SpectrumSettings& s) {
  Json ops = Json::array(), modes = Json::array();
  for (auto k : s.operators) ops.push_back(to_string(k));
  for (auto m : s.bn_modes) modes.push_back(to_string(m));
  j = Json{{"m", s.m},
           {"seeds", s.seeds},
           {"probe", to_string(s.probe)},
           {"base_seed", s.base_seed},
           {"operators", ops},
           {"bn_modes", modes},
           {"batch_size", s.batch_size},
           {"l2_in_curvature", s.l2_in_curvature},
           {"merge", s.merge ? Json(*s.merge) : Json(nullptr)},
           {"track_every", s.track_every}};
}

void from_json(const Json& j, SpectrumSettings& s) {
  check_keys(j,
             {"m", "seeds", "probe", "base_seed", "operators", "operator", "bn_modes", "bn_mode", "batch_size",
              "l2_in_curvature", "merge", "track_every"},
             "spectrum");
  s = SpectrumSettings{};
  maybe(j, "m", s.m);
  maybe(j, "seeds", s.seeds);
  if (j.contains("probe")) s.probe = probe_from_string(j.at("probe").get<std::string>());
  maybe(j, "base_seed", s.base_seed);
  auto strings = [&](const char* plural, const char* single) {
    std::vector<std::string> out;
    if (j.contains(plural)) out = j.at(plural).get<std::vector<std::string>>();
    if (j.contains(single)) out.push_back(j.at(single).get<std::string>());
    return out;
  };
  if (auto ops = strings("operators", "operator"); !ops.empty()) {
    s.operators.clear();
    for (const auto& o : ops) s.operators.push_back(curvature_kind_from_string(o));
  }
  if (auto modes = strings("bn_modes", "bn_mode"); !modes.empty()) {
    s.bn_modes.clear();
    for (const auto& m : modes) s.bn_modes.push_back(bn_mode_from_string(m));
  }
  maybe(j, "batch_size", s.batch_size);
  maybe(j, "l2_in_curvature", s.l2_in_curvature);
  if (j.contains("merge") && !j.at("merge").is_null()) s.merge = j.at("merge").get<bool>();
  maybe(j, "track_every", s.track_every);
}

void to_json(Json& j, const Variant& v) {
  j = v.config;
  j["lr_grid"] = v.lr_grid;
}

void from_json(const Json& j, Variant& v) {
  Json c = j;
  v.lr_grid.clear();
  if (c.contains("lr_grid")) {
    v.lr_grid = c.at("lr_grid").get<std::vector<double>>();
    c.erase("lr_grid");
  }
  check_keys(c,
             {"name", "optimizer", "lr", "momentum", "beta1", "beta2", "eps", "l2", "decoupled_decay", "epochs",
              "avg_start", "batch_size", "final_lr_fraction", "seed", "avg_ramp_consistent"},
             "variant");
  v.config = c.get<TrainConfig>();
  if (!v.lr_grid.empty() && !c.contains("lr")) v.config.lr = v.lr_grid.front();
}

void to_json(Json& j, const ExperimentPlan& p) {
  j = Json{{"name", p.name},
           {"model", p.model},
           {"dataset", p.dataset},
           {"variants", p.variants},
           {"spectrum", p.spectrum},
           {"output_dir", p.output_dir.string()}};
}

void from_json(const Json& j, ExperimentPlan& p) {
  check_keys(j, {"name", "model", "dataset", "variants", "spectrum", "output_dir"}, "plan");
  p = ExperimentPlan{};
  maybe(j, "name", p.name);
  if (!j.contains("model")) throw PlanError("plan has no model");
  p.model = j.at("model").get<ModelSpec>();
  if (j.contains("dataset")) p.dataset = j.at("dataset").get<DatasetSource>();
  if (j.contains("variants")) p.variants = j.at("variants").get<std::vector<Variant>>();
  if (j.contains("spectrum")) p.spectrum = j.at("spectrum").get<SpectrumSettings>();
  if (j.contains("output_dir")) p.output_dir = j.at("output_dir").get<std::string>();
}

ExperimentPlan load_plan(const fs::path& path) {
  ExperimentPlan p;
  try {
    p = read_json_file(path).get<ExperimentPlan>();
  } catch (const PlanError&) {
    throw;
  } catch (const std::exception& e) {
    throw PlanError("plan '" + path.string() + "': " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](fs::path& q) {
    if (!q.empty() && q.is_relative()) q = base / q;
  };
  resolve(p.dataset.images);
  resolve(p.dataset.labels);
  resolve(p.output_dir);
  p.validate();
  return p;
}

// ---- files ----

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_hex(fnv1a64(ss.str()));
}

// ---- running ----

namespace {

struct Selected {
  TrainResult result;
  TrainConfig config;
  Json tuning = Json::array();
};

Json eval_json(const Evaluation& e) { return Json{{"loss", e.loss}, {"accuracy", e.accuracy}}; }

Selected tune_and_train(const ModelSpec& spec, const Variant& v, const Split& data, Exec exec) {
  const std::vector<double> grid = v.lr_grid.empty() ? std::vector<double>{v.config.lr} : v.lr_grid;
  Selected best;
  double best_acc = -1.0;
  bool have = false;
  for (double lr : grid) {
    TrainConfig c = v.config;
    c.lr = lr;
    TrainResult r = train(spec, c, data.train, &data.validation, {}, std::nullopt, exec);
    Json row{{"lr", lr}, {"diverged", r.diverged}};
    if (r.diverged) {
      row["failure"] = r.failure;
    } else {
      const Evaluation ev = evaluate(spec, r.solution(), r.solution_bn(), data.validation, BnMode::eval, exec);
      row["validation_accuracy"] = ev.accuracy;
      row["validation_loss"] = ev.loss;
      if (ev.accuracy > best_acc) {
        best_acc = ev.accuracy;
        best.result = std::move(r);
        best.config = c;
        have = true;
      }
    }
    best.tuning.push_back(row);
  }
  if (!have) throw TrainError("every learning rate in the grid diverged");
  return best;
}

std::string spectrum_stem(CurvatureKind k, BnMode m) { return "spectrum_" + to_string(k) + "_" + to_string(m); }

RunArtifact run_variant(const ExperimentPlan& plan, const Variant& v, const Split& data, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec& spec = plan.model;
  const SpectrumSettings& ss = plan.spectrum;
  RunArtifact art;
  art.variant = v.config.name;
  art.dir = plan.output_dir / v.config.name;
  fs::create_directories(art.dir);

  Selected sel = tune_and_train(spec, v, data, opts.exec);
  art.config = sel.config;

  auto spectrum_at = [&](const ParamVector& p, const BatchNormState& bn, CurvatureKind kind, BnMode mode) {
    const CurvatureContext ctx =
        make_context(spec, p, bn, mode, data.train, sel.config.l2, ss.batch_size, ss.l2_in_curvature, opts.exec);
    const LinearOperator op = kind == CurvatureKind::hessian ? hessian_operator(ctx) : ggn_operator(ctx);
    return spectral_density(op, ss.m, ss.seeds, ss.probe, ss.base_seed, opts.exec);
  };

  std::vector<DegeneracyPoint> degeneracy;
  if (ss.track_every > 0) {
    const CurvatureKind kind = ss.operators.front();
    const BnMode mode = ss.bn_modes.front();
    const bool merge = ss.merge.value_or(default_merge(kind));
    const EpochCallback cb = [&](const EpochRecord& rec, const ParamVector& p, const BatchNormState& bn) {
      if (rec.epoch % ss.track_every != 0) return;
      const Degeneracy dg = degeneracy_ratio(spectrum_at(p, bn, kind, mode), merge);
      degeneracy.push_back({rec.epoch, dg.ratio, dg.node_value});
    };
    // Same config and seed, so this reproduces the selected run exactly.
    train(spec, sel.config, data.train, &data.validation, cb, std::nullopt, opts.exec);
  }

  const TrainResult& r = sel.result;
  const ParamVector& sol = r.solution();
  const BatchNormState& sol_bn = r.solution_bn();
  art.train = evaluate(spec, sol, sol_bn, data.train, BnMode::eval, opts.exec);
  art.validation = evaluate(spec, sol, sol_bn, data.validation, BnMode::eval, opts.exec);
  art.weight_norm = norm2(sol.flat);

  art.checkpoint_path = art.dir / "checkpoint.json";
  write_atomic(art.checkpoint_path, dump(Json(Checkpoint{spec, sol, sol_bn, sel.config})));
  art.history_path = art.dir / "history.csv";
  write_atomic(art.history_path, history_csv(r.history));
  write_atomic(art.dir / "history_plot.csv", history_plot_csv(r.history));
  write_atomic(art.dir / "history.svg", history_svg(r.history, plan.name + " / " + v.config.name));
  if (ss.track_every > 0) write_atomic(art.dir / "degeneracy.csv", degeneracy_csv(degeneracy));

  const RankBoundInput rb = RankBoundInput::from_spec(spec);
  Json reports = Json::array();
  for (CurvatureKind kind : ss.operators)
    for (BnMode mode : ss.bn_modes) {
      const RitzSpectrum s = spectrum_at(sol, sol_bn, kind, mode);
      SharpnessContext sc;
      sc.kind = kind;
      sc.bn_mode = mode;
      sc.l2 = sel.config.l2;
      sc.l2_in_curvature = ss.l2_in_curvature;
      sc.dataset_id = data.train.id;
      sc.samples = data.train.size();
      sc.batch_size = ss.batch_size;
      sc.epoch = static_cast<std::int64_t>(r.history.size());
      sc.train_loss = art.train.loss;
      sc.train_acc = art.train.accuracy;
      sc.test_loss = art.validation.loss;
      sc.test_acc = art.validation.accuracy;
      SpectrumArtifact sa{kind, mode, {}, {}, ss.merge ? sharpness_report(s, rb, sc, *ss.merge) : sharpness_report(s, rb, sc)};
      const std::string stem = spectrum_stem(kind, mode);
      sa.spectrum_path = art.dir / (stem + ".json");
      const std::string text = dump(Json(s));
      write_atomic(sa.spectrum_path, text);
      sa.spectrum_hash = hash_hex(fnv1a64(text));
      write_atomic(art.dir / (stem + ".csv"), spectrum_csv(s));
      write_atomic(art.dir / (stem + ".svg"),
                   spectrum_svg(s, v.config.name + " " + to_string(kind) + " (" + to_string(mode) + " mode)"));
      reports.push_back(Json{{"kind", to_string(kind)},
                             {"bn_mode", to_string(mode)},
                             {"spectrum", {{"file", sa.spectrum_path.filename().string()}, {"fnv1a64", sa.spectrum_hash}}},
                             {"report", sa.report}});
      art.spectra.push_back(std::move(sa));
    }

  art.config_path = art.dir / "config.json";
  write_atomic(art.config_path, dump(Json{{"plan", plan.name},
                                          {"model", spec},
                                          {"dataset", plan.dataset},
                                          {"variant", v},
                                          {"spectrum", ss}}));

  Json rep{{"plan", plan.name},
           {"variant", v.config.name},
           {"config", sel.config},
           {"tuning", sel.tuning},
           {"train", eval_json(art.train)},
           {"validation", eval_json(art.validation)},
           {"weight_norm", art.weight_norm},
           {"P", sol.flat.size()},
           {"epochs_run", r.history.size()},
           {"averaged_count", r.averaged_count},
           {"history", "history.csv"},
           {"checkpoint", "checkpoint.json"},
           {"spectra", reports}};
  if (r.averaged_record) rep["averaged_record"] = *r.averaged_record;
  art.report_path = art.dir / "report.json";
  write_atomic(art.report_path, dump(rep));

  art.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  art.metadata_path = art.dir / "artifact.json";
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  Json paths{{"config", art.config_path.string()},
             {"checkpoint", art.checkpoint_path.string()},
             {"history", art.history_path.string()},
             {"report", art.report_path.string()}};
  Json sp = Json::array();
  for (const auto& s : art.spectra) sp.push_back(s.spectrum_path.string());
  paths["spectra"] = sp;
  write_atomic(art.metadata_path,
               dump(Json{{"variant", art.variant}, {"wall_seconds", art.wall_seconds}, {"finished_utc", stamp}, {"paths", paths}}));
  return art;
}

const char* kComparisonHeader =
    "variant,optimizer,lr,l2,decoupled_decay,kind,bn_mode,train_loss,train_acc,val_loss,val_acc,weight_norm,"
    "lambda_max,lambda_min,trace,frobenius,mean_eigenvalue,degeneracy_ratio,rank_bound,degeneracy_floor,P";

}  // namespace

PlanResult run_plan(const ExperimentPlan& plan, const RunOptions& opts) {
  plan.validate();
  for (const auto& o : opts.only)
    if (std::none_of(plan.variants.begin(), plan.variants.end(), [&](const Variant& v) { return v.config.name == o; }))
      throw PlanError("no variant named '" + o + "'");
  Split data;
  try {
    data = load_split(plan.dataset);
  } catch (const std::exception& e) {
    throw PlanError(std::string("dataset: ") + e.what());
  }
  fs::create_directories(plan.output_dir);

  std::vector<const Variant*> order;
  for (const auto& v : plan.variants)
    if (opts.only.empty() || std::count(opts.only.begin(), opts.only.end(), v.config.name)) order.push_back(&v);
  std::sort(order.begin(), order.end(),
            [](const Variant* a, const Variant* b) { return a->config.name < b->config.name; });

  PlanResult res;
  for (const Variant* v : order) {
    if (!opts.quiet) std::fprintf(stderr, "[%s] %s\n", plan.name.c_str(), v->config.name.c_str());
    try {
      res.artifacts.push_back(run_variant(plan, *v, data, opts));
    } catch (const std::exception& e) {
      res.failures.push_back({v->config.name, e.what()});
      if (!opts.quiet) std::fprintf(stderr, "[%s] %s failed: %s\n", plan.name.c_str(), v->config.name.c_str(), e.what());
    }
  }

  Json rows = Json::array();
  std::string csv = std::string(kComparisonHeader) + "\n";
  for (const auto& a : res.artifacts)
    for (const auto& s : a.spectra) {
      const auto& r = s.report;
      rows.push_back(Json{{"variant", a.variant},
                          {"optimizer", to_string(a.config.optimizer)},
                          {"lr", a.config.lr},
                          {"l2", a.config.l2},
                          {"decoupled_decay", a.config.decoupled_decay},
                          {"kind", to_string(s.kind)},
                          {"bn_mode", to_string(s.bn_mode)},
                          {"train", eval_json(a.train)},
                          {"validation", eval_json(a.validation)},
                          {"weight_norm", a.weight_norm},
                          {"spectrum_fnv1a64", s.spectrum_hash},
                          {"report", r}});
      const double vals[] = {a.config.lr,       a.config.l2,      a.config.decoupled_decay};
      csv += a.variant + "," + to_string(a.config.optimizer);
      for (double x : vals) csv += "," + fmt17(x);
      csv += "," + to_string(s.kind) + "," + to_string(s.bn_mode);
      for (double x : {a.train.loss, a.train.accuracy, a.validation.loss, a.validation.accuracy, a.weight_norm,
                       r.lambda_max, r.lambda_min, r.trace, r.frobenius, r.mean_eigenvalue, r.degeneracy_ratio})
        csv += "," + fmt17(x);
      csv += "," + std::to_string(r.rank_bound) + "," + fmt17(r.degeneracy_floor) + "," + std::to_string(r.P) + "\n";
    }
  Json failures = Json::array();
  for (const auto& f : res.failures) failures.push_back(Json{{"variant", f.variant}, {"error", f.error}});
  res.comparison_json = plan.output_dir / "comparison.json";
  res.comparison_csv = plan.output_dir / "comparison.csv";
  write_atomic(res.comparison_json, dump(Json{{"plan", plan.name}, {"rows", rows}, {"failures", failures}}));
  write_atomic(res.comparison_csv, csv);
  return res;
}

// ---- desk plans ----

std::vector<std::string> default_plan_names() { return {"l2-sharpness", "l2-sharpness-mlp", "bn-mode", "gadam-sgd"}; }

namespace {

DatasetSource desk_data(const std::optional<std::pair<fs::path, fs::path>>& mnist) {
  DatasetSource d;
  if (mnist) {
    d.kind = "mnist";
    d.images = mnist->first;
    d.labels = mnist->second;
    d.split_fraction = 0.1;
    d.split_seed = 2;
  } else {
    d.kind = "blobs";
    d.d_x = 100;
    d.d_y = 10;
    d.n_per_class = 530;
    d.separation = 3.0;
    d.seed = 1;
    d.n_train = 300;
    d.n_validation = 5000;
    d.split_seed = 2;
  }
  return d;
}

Variant sgd_variant(const std::string& name, double lr, double l2, std::size_t epochs, std::size_t batch) {
  Variant v;
  v.config.name = name;
  v.config.optimizer = OptimizerKind::sgd;
  v.config.lr = lr;
  v.config.l2 = l2;
  v.config.epochs = epochs;
  v.config.batch_size = batch;
  v.config.seed = 3;
  return v;
}

}  // namespace

ExperimentPlan default_plan(const std::string& name, const fs::path& output_dir,
                            const std::optional<std::pair<fs::path, fs::path>>& mnist) {
  ExperimentPlan p;
  p.name = name;
  p.output_dir = output_dir;
  p.dataset = desk_data(mnist);
  const std::size_t d_x = mnist ? 784 : 100;
  const std::size_t batch = mnist ? 128 : 32;
  const double lr = mnist ? 0.03 : 0.5;
  if (name == "l2-sharpness") {
    p.model = ModelSpec{d_x, {}, 10, Activation::relu, {}, LossKind::cross_entropy};
    for (auto [tag, l2] : {std::pair{"l2-0", 0.0}, {"l2-0.0001", 1e-4}, {"l2-0.0005", 5e-4}})
      p.variants.push_back(sgd_variant(tag, lr, l2, 50, batch));
    p.spectrum.m = 100;
    p.spectrum.seeds = 3;
  } else if (name == "l2-sharpness-mlp") {
    p.model = ModelSpec{d_x, {mnist ? 100u : 32u}, 10, Activation::relu, {}, LossKind::cross_entropy};
    for (auto [tag, l2] : {std::pair{"l2-0", 0.0}, {"l2-0.0001", 1e-4}, {"l2-0.0005", 5e-4}})
      p.variants.push_back(sgd_variant(tag, mnist ? 0.03 : 0.1, l2, 50, batch));
    p.spectrum.m = 100;
    p.spectrum.seeds = 3;
  } else if (name == "bn-mode") {
    p.model = ModelSpec{d_x, {32}, 10, Activation::relu, {true}, LossKind::cross_entropy};
    p.variants.push_back(sgd_variant("sgd-bn", 0.1, 5e-4, 50, batch));
    p.spectrum.m = 80;
    p.spectrum.bn_modes = {BnMode::train, BnMode::eval};
    p.spectrum.batch_size = batch;
  } else if (name == "gadam-sgd") {
    p.model = ModelSpec{d_x, {32}, 10, Activation::relu, {}, LossKind::cross_entropy};
    Variant s = sgd_variant("sgd", 0.1, 5e-4, 50, batch);
    s.lr_grid = {0.01, 0.03, 0.1};
    Variant g = sgd_variant("gadam", 1e-3, 0.0, 50, batch);
    g.config.optimizer = OptimizerKind::gadam;
    g.config.decoupled_decay = 0.25;
    g.config.avg_start = 25;
    g.lr_grid = {1e-3, 3e-3, 1e-2};
    p.variants = {s, g};
    p.spectrum.m = 60;
  } else {
    throw PlanError("unknown default plan '" + name + "'");
  }
  return p;
}

}  // namespace flatspec
