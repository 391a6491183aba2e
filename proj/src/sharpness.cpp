#include "flatspec/sharpness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flatspec/format.hpp"

namespace flatspec {

RankBoundInput RankBoundInput::from_spec(const ModelSpec& spec) {
  return {spec.input_dim, spec.output_dim, spec.neuron_counts(), ParamLayout(spec).size()};
}

RankBound rank_bound(const RankBoundInput& in) {
  if (in.d_x == 0 || in.d_y == 0 || in.P == 0) throw std::invalid_argument("rank_bound: counts must be positive");
  std::uint64_t neurons = in.d_x;
  for (std::size_t n : in.neuron_counts) {
    if (n == 0) throw std::invalid_argument("rank_bound: neuron counts must be positive");
    neurons += n;
  }
  RankBound r;
  r.bound = 4 * static_cast<std::uint64_t>(in.d_y) * neurons;
  r.degeneracy_floor = std::max(0.0, 1.0 - static_cast<double>(r.bound) / static_cast<double>(in.P));
  return r;
}

Degeneracy degeneracy_ratio(std::span<const double> nodes, std::span<const double> weights, bool merge) {
  if (nodes.empty() || nodes.size() != weights.size())
    throw std::invalid_argument("degeneracy_ratio: need a nonempty spectrum with one weight per node");
  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = std::abs(nodes[a]), fb = std::abs(nodes[b]);
    if (fa != fb) return fa < fb;
    return nodes[a] < nodes[b];
  });
  Degeneracy d;
  const std::size_t first = order[0];
  d.ratio = weights[first];
  d.node_value = nodes[first];
  if (merge && order.size() > 1) {
    const std::size_t second = order[1];
    const double total = weights[first] + weights[second];
    d.merged = true;
    d.node_value = total > 0.0 ? (nodes[first] * weights[first] + nodes[second] * weights[second]) / total
                               : 0.5 * (nodes[first] + nodes[second]);
    d.ratio = total;
  }
  d.ratio = std::clamp(d.ratio, 0.0, 1.0);
  return d;
}

Degeneracy degeneracy_ratio(const RitzSpectrum& s, bool merge) {
  if (s.per_seed.empty()) return degeneracy_ratio(s.nodes, s.weights, merge);
  Degeneracy d;
  for (const auto& run : s.per_seed) {
    const Degeneracy one = degeneracy_ratio(run.nodes, run.weights, merge);
    d.ratio += one.ratio;
    d.node_value += one.node_value;
    d.merged = d.merged || one.merged;
  }
  const double n = static_cast<double>(s.per_seed.size());
  d.ratio /= n;
  d.node_value /= n;
  return d;
}

std::string to_string(CurvatureKind k) { return k == CurvatureKind::hessian ? "hessian" : "ggn"; }

CurvatureKind curvature_kind_from_string(const std::string& s) {
  if (s == "hessian") return CurvatureKind::hessian;
  if (s == "ggn") return CurvatureKind::ggn;
  throw std::invalid_argument("unknown curvature operator '" + s + "'");
}

SharpnessReport sharpness_report(const RitzSpectrum& s, const RankBoundInput& bound, const SharpnessContext& ctx) {
  return sharpness_report(s, bound, ctx, default_merge(ctx.kind));
}

SharpnessReport sharpness_report(const RitzSpectrum& s, const RankBoundInput& bound, const SharpnessContext& ctx,
                                 bool merge) {
  if (bound.P != s.dim)
    throw std::invalid_argument("sharpness_report: spectrum dimension " + std::to_string(s.dim) +
                                " does not match parameter count " + std::to_string(bound.P));
  const MomentEstimates m = moment_estimates(s);
  const RankBound rb = rank_bound(bound);
  const Degeneracy d = degeneracy_ratio(s, merge);
  SharpnessReport r;
  r.lambda_max = m.lambda_max;
  r.lambda_min = m.lambda_min;
  r.trace = m.trace;
  r.trace_std_error = m.trace_std_error;
  r.frobenius = std::sqrt(std::max(0.0, m.frob_sq));
  r.mean_eigenvalue = m.trace / static_cast<double>(s.dim);
  r.degeneracy_ratio = d.ratio;
  r.degeneracy_node_value = d.node_value;
  r.merged = d.merged;
  r.trace_caveat = m.lambda_min < -1e-6 * std::abs(m.lambda_max);
  r.rank_bound = rb.bound;
  r.degeneracy_floor = rb.degeneracy_floor;
  r.P = s.dim;
  r.m = s.m;
  r.num_seeds = s.num_seeds();
  r.context = ctx;
  return r;
}

std::string sharpness_csv_header() {
  return "epoch,operator,bn_mode,l2,lambda_max,lambda_min,trace,frobenius,mean_eigenvalue,degeneracy_ratio,"
         "degeneracy_node_value,merged,trace_caveat,rank_bound,degeneracy_floor,P,train_loss,train_acc,test_loss,"
         "test_acc";
}

std::string sharpness_csv_row(const SharpnessReport& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); };
  const auto& c = r.context;
  return std::to_string(c.epoch) + "," + to_string(c.kind) + "," + to_string(c.bn_mode) + "," + fmt17(c.l2) + "," +
         fmt17(r.lambda_max) + "," + fmt17(r.lambda_min) + "," + fmt17(r.trace) + "," + fmt17(r.frobenius) + "," +
         fmt17(r.mean_eigenvalue) + "," + fmt17(r.degeneracy_ratio) + "," + fmt17(r.degeneracy_node_value) + "," +
         (r.merged ? "1" : "0") + "," + (r.trace_caveat ? "1" : "0") + "," + std::to_string(r.rank_bound) + "," +
         fmt17(r.degeneracy_floor) + "," + std::to_string(r.P) + "," + opt(c.train_loss) + "," + opt(c.train_acc) +
         "," + opt(c.test_loss) + "," + opt(c.test_acc);
}

}  // namespace flatspec
