#include "flatspec/model.hpp"

#include <algorithm>
#include <cmath>

#include "flatspec/rng.hpp"

namespace flatspec {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ModelError("unknown activation '" + s + "'");
}

std::string to_string(BnMode m) { return m == BnMode::train ? "train" : "eval"; }

BnMode bn_mode_from_string(const std::string& s) {
  if (s == "train") return BnMode::train;
  if (s == "eval") return BnMode::eval;
  throw ModelError("unknown batch-norm mode '" + s + "'");
}

std::string to_string(ParamRole r) {
  switch (r) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    case ParamRole::bn_gamma: return "bn_gamma";
    case ParamRole::bn_beta: return "bn_beta";
  }
  return "?";
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw ModelError("ModelSpec: input_dim must be >= 1");
  if (output_dim < 1) throw ModelError("ModelSpec: output_dim must be >= 1");
  for (std::size_t l = 0; l < hidden_widths.size(); ++l)
    if (hidden_widths[l] < 1) throw ModelError("ModelSpec: hidden layer " + std::to_string(l) + " has zero width");
  if (!batch_norm.empty() && batch_norm.size() != hidden_widths.size())
    throw ModelError("ModelSpec: batch_norm needs one flag per hidden layer");
}

bool ModelSpec::any_bn() const {
  return std::any_of(batch_norm.begin(), batch_norm.end(), [](bool b) { return b; });
}

std::vector<std::size_t> ModelSpec::neuron_counts() const {
  std::vector<std::size_t> n = hidden_widths;
  n.push_back(output_dim);
  return n;
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
  spec.validate();
  auto add = [&](std::size_t layer, ParamRole role, std::size_t rows, std::size_t cols) {
    blocks_.push_back({layer, role, rows, cols, total_});
    total_ += rows * cols;
  };
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    add(l, ParamRole::weight, in, out);
    add(l, ParamRole::bias, 1, out);
    if (spec.has_bn(l)) {
      add(l, ParamRole::bn_gamma, 1, out);
      add(l, ParamRole::bn_beta, 1, out);
    }
  }
}

const ParamBlock& ParamLayout::block(std::size_t layer, ParamRole role) const {
  for (const auto& b : blocks_)
    if (b.layer == layer && b.role == role) return b;
  throw ModelError("ParamLayout: layer " + std::to_string(layer) + " has no " + to_string(role) + " block");
}

std::vector<LayerWeights> unflatten(const ModelSpec& spec, const ParamVector& p) {
  if (p.flat.size() != p.layout.size()) throw ModelError("unflatten: parameter length does not match layout");
  std::vector<LayerWeights> layers(spec.num_layers());
  for (const auto& b : p.layout.blocks()) {
    auto first = p.flat.begin() + static_cast<std::ptrdiff_t>(b.offset);
    Vec chunk(first, first + static_cast<std::ptrdiff_t>(b.size()));
    auto& lw = layers[b.layer];
    switch (b.role) {
      case ParamRole::weight: lw.weight = Mat(b.rows, b.cols, std::move(chunk)); break;
      case ParamRole::bias: lw.bias = std::move(chunk); break;
      case ParamRole::bn_gamma: lw.gamma = std::move(chunk); break;
      case ParamRole::bn_beta: lw.beta = std::move(chunk); break;
    }
  }
  return layers;
}

ParamVector flatten(const ModelSpec& spec, const std::vector<LayerWeights>& layers) {
  ParamVector p{Vec{}, ParamLayout(spec)};
  if (layers.size() != spec.num_layers()) throw ModelError("flatten: wrong number of layers");
  p.flat.assign(p.layout.size(), 0.0);
  for (const auto& b : p.layout.blocks()) {
    const auto& lw = layers[b.layer];
    const Vec* src = nullptr;
    switch (b.role) {
      case ParamRole::weight: src = &lw.weight.data(); break;
      case ParamRole::bias: src = &lw.bias; break;
      case ParamRole::bn_gamma: src = &lw.gamma; break;
      case ParamRole::bn_beta: src = &lw.beta; break;
    }
    if (src->size() != b.size())
      throw ModelError("flatten: layer " + std::to_string(b.layer) + " " + to_string(b.role) + " has wrong size");
    std::copy(src->begin(), src->end(), p.flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return p;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p{Vec{}, ParamLayout(spec)};
  p.flat.assign(p.layout.size(), 0.0);
  Rng rng(seed);
  for (const auto& b : p.layout.blocks()) {
    auto first = p.flat.begin() + static_cast<std::ptrdiff_t>(b.offset);
    switch (b.role) {
      case ParamRole::weight: {
        const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
        for (std::size_t i = 0; i < b.size(); ++i) first[static_cast<std::ptrdiff_t>(i)] = rng.uniform(-limit, limit);
        break;
      }
      case ParamRole::bn_gamma: std::fill(first, first + static_cast<std::ptrdiff_t>(b.size()), 1.0); break;
      case ParamRole::bias:
      case ParamRole::bn_beta: break;
    }
  }
  return p;
}

BatchNormState BatchNormState::fresh(const ModelSpec& spec) {
  BatchNormState s;
  s.running_mean.resize(spec.hidden_widths.size());
  s.running_var.resize(spec.hidden_widths.size());
  for (std::size_t l = 0; l < spec.hidden_widths.size(); ++l) {
    if (!spec.has_bn(l)) continue;
    s.running_mean[l].assign(spec.hidden_widths[l], 0.0);
    s.running_var[l].assign(spec.hidden_widths[l], 1.0);
  }
  return s;
}

void Dataset::validate() const {
  if (labels.empty()) throw ModelError("Dataset: no samples");
  if (inputs.rows() != labels.size()) throw ModelError("Dataset: inputs/labels row count mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw ModelError("Dataset: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " out of range");
}

Mat gather_rows(const Mat& m, std::span<const std::size_t> rows) {
  Mat out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d;
  d.inputs = gather_rows(inputs, rows);
  d.labels.reserve(rows.size());
  for (auto r : rows) d.labels.push_back(labels[r]);
  d.num_classes = num_classes;
  d.id = id;
  return d;
}

}  // namespace flatspec
