#include "flatspec/serialize.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace flatspec {

namespace {

Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double get_num(const Json& j, const char* key) {
  const Json& v = j.at(key);
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

Json nums(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

Vec get_nums(const Json& j, const char* key) {
  Vec out;
  for (const auto& v : j.at(key)) out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  return out;
}

Json opt(const std::optional<double>& x) { return x ? num(*x) : Json(nullptr); }

std::optional<double> get_opt(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

template <class T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void maybe_num(const Json& j, const char* key, double& out) {
  if (j.contains(key)) out = get_num(j, key);
}

}  // namespace

void to_json(Json& j, const ModelSpec& s) {
  j = Json{{"input_dim", s.input_dim},
           {"hidden_widths", s.hidden_widths},
           {"output_dim", s.output_dim},
           {"activation", to_string(s.activation)},
           {"batch_norm", s.batch_norm},
           {"loss", "cross_entropy"}};
}

void from_json(const Json& j, ModelSpec& s) {
  s = ModelSpec{};
  j.at("input_dim").get_to(s.input_dim);
  maybe(j, "hidden_widths", s.hidden_widths);
  j.at("output_dim").get_to(s.output_dim);
  if (j.contains("activation")) s.activation = activation_from_string(j.at("activation").get<std::string>());
  if (j.contains("batch_norm")) {
    const Json& bn = j.at("batch_norm");
    if (bn.is_boolean())
      s.batch_norm.assign(s.hidden_widths.size(), bn.get<bool>());
    else
      s.batch_norm = bn.get<std::vector<bool>>();
  }
  if (j.contains("loss") && j.at("loss").get<std::string>() != "cross_entropy")
    throw ModelError("unsupported loss '" + j.at("loss").get<std::string>() + "'");
  s.validate();
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"name", c.name},
           {"optimizer", to_string(c.optimizer)},
           {"lr", num(c.lr)},
           {"momentum", num(c.momentum)},
           {"beta1", num(c.beta1)},
           {"beta2", num(c.beta2)},
           {"eps", num(c.eps)},
           {"l2", num(c.l2)},
           {"decoupled_decay", num(c.decoupled_decay)},
           {"epochs", c.epochs},
           {"avg_start", c.avg_start},
           {"batch_size", c.batch_size},
           {"final_lr_fraction", num(c.final_lr_fraction)},
           {"seed", c.seed},
           {"avg_ramp_consistent", c.avg_ramp_consistent}};
}

void from_json(const Json& j, TrainConfig& c) {
  c = TrainConfig{};
  maybe(j, "name", c.name);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  maybe_num(j, "lr", c.lr);
  maybe_num(j, "momentum", c.momentum);
  maybe_num(j, "beta1", c.beta1);
  maybe_num(j, "beta2", c.beta2);
  maybe_num(j, "eps", c.eps);
  maybe_num(j, "l2", c.l2);
  maybe_num(j, "decoupled_decay", c.decoupled_decay);
  maybe(j, "epochs", c.epochs);
  maybe(j, "avg_start", c.avg_start);
  maybe(j, "batch_size", c.batch_size);
  maybe_num(j, "final_lr_fraction", c.final_lr_fraction);
  maybe(j, "seed", c.seed);
  maybe(j, "avg_ramp_consistent", c.avg_ramp_consistent);
}

void to_json(Json& j, const LanczosResult& r) {
  j = Json{{"seed", r.seed},
           {"m_requested", r.m_requested},
           {"m_effective", r.m_effective},
           {"breakdown", r.breakdown},
           {"ortho_residual", num(r.ortho_residual)},
           {"norm_estimate", num(r.norm_estimate)},
           {"alpha", nums(r.tridiag.diag)},
           {"beta", nums(r.tridiag.offdiag)},
           {"nodes", nums(r.nodes)},
           {"weights", nums(r.weights)}};
}

void from_json(const Json& j, LanczosResult& r) {
  r = LanczosResult{};
  j.at("seed").get_to(r.seed);
  j.at("m_requested").get_to(r.m_requested);
  j.at("m_effective").get_to(r.m_effective);
  j.at("breakdown").get_to(r.breakdown);
  r.ortho_residual = get_num(j, "ortho_residual");
  r.norm_estimate = get_num(j, "norm_estimate");
  r.tridiag.diag = get_nums(j, "alpha");
  r.tridiag.offdiag = get_nums(j, "beta");
  r.nodes = get_nums(j, "nodes");
  r.weights = get_nums(j, "weights");
}

void to_json(Json& j, const RitzSpectrum& s) {
  j = Json{{"P", s.dim},
           {"m", s.m},
           {"probe", to_string(s.probe)},
           {"base_seed", s.base_seed},
           {"seeds", s.seeds},
           {"nodes", nums(s.nodes)},
           {"weights", nums(s.weights)},
           {"per_seed", s.per_seed}};
}

void from_json(const Json& j, RitzSpectrum& s) {
  s = RitzSpectrum{};
  j.at("P").get_to(s.dim);
  j.at("m").get_to(s.m);
  s.probe = probe_from_string(j.at("probe").get<std::string>());
  j.at("base_seed").get_to(s.base_seed);
  j.at("seeds").get_to(s.seeds);
  s.nodes = get_nums(j, "nodes");
  s.weights = get_nums(j, "weights");
  j.at("per_seed").get_to(s.per_seed);
  if (s.seeds.size() != s.per_seed.size()) throw SlqError("spectrum JSON: seeds and per_seed differ in length");
  if (s.nodes.size() != s.weights.size()) throw SlqError("spectrum JSON: nodes and weights differ in length");
}

void to_json(Json& j, const SharpnessContext& c) {
  j = Json{{"kind", to_string(c.kind)},
           {"bn_mode", to_string(c.bn_mode)},
           {"l2", num(c.l2)},
           {"l2_in_curvature", c.l2_in_curvature},
           {"dataset_id", c.dataset_id},
           {"samples", c.samples},
           {"batch_size", c.batch_size},
           {"epoch", c.epoch},
           {"train_loss", opt(c.train_loss)},
           {"train_acc", opt(c.train_acc)},
           {"test_loss", opt(c.test_loss)},
           {"test_acc", opt(c.test_acc)}};
}

void from_json(const Json& j, SharpnessContext& c) {
  c = SharpnessContext{};
  c.kind = curvature_kind_from_string(j.at("kind").get<std::string>());
  c.bn_mode = bn_mode_from_string(j.at("bn_mode").get<std::string>());
  c.l2 = get_num(j, "l2");
  j.at("l2_in_curvature").get_to(c.l2_in_curvature);
  j.at("dataset_id").get_to(c.dataset_id);
  j.at("samples").get_to(c.samples);
  j.at("batch_size").get_to(c.batch_size);
  j.at("epoch").get_to(c.epoch);
  c.train_loss = get_opt(j, "train_loss");
  c.train_acc = get_opt(j, "train_acc");
  c.test_loss = get_opt(j, "test_loss");
  c.test_acc = get_opt(j, "test_acc");
}

void to_json(Json& j, const SharpnessReport& r) {
  j = Json{{"lambda_max", num(r.lambda_max)},
           {"lambda_min", num(r.lambda_min)},
           {"trace", num(r.trace)},
           {"trace_std_error", num(r.trace_std_error)},
           {"frobenius", num(r.frobenius)},
           {"mean_eigenvalue", num(r.mean_eigenvalue)},
           {"degeneracy_ratio", num(r.degeneracy_ratio)},
           {"degeneracy_node_value", num(r.degeneracy_node_value)},
           {"merged", r.merged},
           {"trace_caveat", r.trace_caveat},
           {"rank_bound", r.rank_bound},
           {"degeneracy_floor", num(r.degeneracy_floor)},
           {"P", r.P},
           {"m", r.m},
           {"num_seeds", r.num_seeds},
           {"context", r.context}};
}

void from_json(const Json& j, SharpnessReport& r) {
  r = SharpnessReport{};
  r.lambda_max = get_num(j, "lambda_max");
  r.lambda_min = get_num(j, "lambda_min");
  r.trace = get_num(j, "trace");
  r.trace_std_error = get_num(j, "trace_std_error");
  r.frobenius = get_num(j, "frobenius");
  r.mean_eigenvalue = get_num(j, "mean_eigenvalue");
  r.degeneracy_ratio = get_num(j, "degeneracy_ratio");
  r.degeneracy_node_value = get_num(j, "degeneracy_node_value");
  j.at("merged").get_to(r.merged);
  j.at("trace_caveat").get_to(r.trace_caveat);
  j.at("rank_bound").get_to(r.rank_bound);
  r.degeneracy_floor = get_num(j, "degeneracy_floor");
  j.at("P").get_to(r.P);
  j.at("m").get_to(r.m);
  j.at("num_seeds").get_to(r.num_seeds);
  j.at("context").get_to(r.context);
}

void to_json(Json& j, const EpochRecord& r) {
  j = Json{{"epoch", r.epoch},
           {"lr", num(r.lr)},
           {"train_loss", num(r.train_loss)},
           {"train_acc", num(r.train_acc)},
           {"test_loss", num(r.test_loss)},
           {"test_acc", num(r.test_acc)},
           {"weight_norm", num(r.weight_norm)}};
}

void from_json(const Json& j, EpochRecord& r) {
  j.at("epoch").get_to(r.epoch);
  r.lr = get_num(j, "lr");
  r.train_loss = get_num(j, "train_loss");
  r.train_acc = get_num(j, "train_acc");
  r.test_loss = get_num(j, "test_loss");
  r.test_acc = get_num(j, "test_acc");
  r.weight_norm = get_num(j, "weight_norm");
}

void to_json(Json& j, const BatchNormState& b) {
  Json mean = Json::array(), var = Json::array();
  for (const auto& m : b.running_mean) mean.push_back(nums(m));
  for (const auto& v : b.running_var) var.push_back(nums(v));
  j = Json{{"running_mean", mean}, {"running_var", var}, {"momentum", b.momentum}};
}

void from_json(const Json& j, BatchNormState& b) {
  b = BatchNormState{};
  for (const auto& m : j.at("running_mean")) b.running_mean.push_back(m.get<Vec>());
  for (const auto& v : j.at("running_var")) b.running_var.push_back(v.get<Vec>());
  j.at("momentum").get_to(b.momentum);
}

void to_json(Json& j, const Checkpoint& c) {
  j = Json{{"model", c.spec}, {"params", nums(c.params.flat)}, {"bn", c.bn}, {"config", c.config}};
}

void from_json(const Json& j, Checkpoint& c) {
  c.spec = j.at("model").get<ModelSpec>();
  c.params.layout = ParamLayout(c.spec);
  c.params.flat = get_nums(j, "params");
  if (c.params.flat.size() != c.params.layout.size())
    throw ModelError("checkpoint holds " + std::to_string(c.params.flat.size()) + " parameters but the model has " +
                     std::to_string(c.params.layout.size()));
  c.bn = j.at("bn").get<BatchNormState>();
  if (c.bn.running_mean.size() != c.spec.hidden_widths.size() || c.bn.running_var.size() != c.spec.hidden_widths.size())
    throw ModelError("checkpoint BN state does not match the model");
  c.config = j.contains("config") ? j.at("config").get<TrainConfig>() : TrainConfig{};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("'" + path.string() + "': " + e.what());
  }
}

}  // namespace flatspec
