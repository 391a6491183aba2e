#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatspec/linalg.hpp"

namespace flatspec {

enum class Activation { identity, relu, tanh };
enum class LossKind { cross_entropy };
enum class BnMode { train, eval };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(BnMode m);
BnMode bn_mode_from_string(const std::string& s);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Feed-forward classifier. Each hidden layer is affine -> [batch norm] -> activation;
// the output layer is affine and feeds softmax cross-entropy.
struct ModelSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 2;
  Activation activation = Activation::relu;
  std::vector<bool> batch_norm;  // one flag per hidden layer; empty means none
  LossKind loss = LossKind::cross_entropy;

  void validate() const;
  std::size_t num_layers() const { return hidden_widths.size() + 1; }
  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_widths[l - 1]; }
  std::size_t layer_out(std::size_t l) const {
    return l < hidden_widths.size() ? hidden_widths[l] : output_dim;
  }
  bool has_bn(std::size_t l) const { return l < batch_norm.size() && batch_norm[l]; }
  bool any_bn() const;
  // Neurons counted by the rank bound: every hidden width plus the output layer.
  std::vector<std::size_t> neuron_counts() const;
};

enum class ParamRole { weight, bias, bn_gamma, bn_beta };
std::string to_string(ParamRole r);

struct ParamBlock {
  std::size_t layer;
  ParamRole role;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;
  std::size_t size() const { return rows * cols; }
};

// Partition of the flat parameter vector. Layer l stores its weight as an
// (in x out) row-major block so that Z = X W + b.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const ModelSpec& spec);

  std::size_t size() const { return total_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::size_t layer, ParamRole role) const;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

struct ParamVector {
  Vec flat;
  ParamLayout layout;
};

// Structured per-layer copy of the parameters.
struct LayerWeights {
  Mat weight;  // in x out
  Vec bias;
  Vec gamma;   // empty without batch norm
  Vec beta;
};

std::vector<LayerWeights> unflatten(const ModelSpec& spec, const ParamVector& p);
ParamVector flatten(const ModelSpec& spec, const std::vector<LayerWeights>& layers);

// Glorot-uniform weights, zero biases, unit gamma, zero beta.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct BatchNormState {
  std::vector<Vec> running_mean;  // per hidden layer; empty for layers without BN
  std::vector<Vec> running_var;
  double momentum = 0.1;

  static BatchNormState fresh(const ModelSpec& spec);
};

inline constexpr double kBnEpsilon = 1e-5;

struct Dataset {
  Mat inputs;              // N x d_x
  std::vector<int> labels; // N entries in [0, num_classes)
  std::size_t num_classes = 2;
  std::string id;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols(); }
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

// Gathers the given rows of `m`.
Mat gather_rows(const Mat& m, std::span<const std::size_t> rows);

}  // namespace flatspec
