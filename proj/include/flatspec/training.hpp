#pragma once

// Optimizers, learning-rate schedules and the mini-batch training loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatspec/kernels.hpp"
#include "flatspec/model.hpp"

namespace flatspec {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { sgd, adam, adamw, gadam };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  std::string name;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.01;           // alpha_0
  double momentum = 0.9;      // rho, SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;            // mu, added to the gradient as mu * w
  double decoupled_decay = 0.0;  // lambda, adamw / gadam
  std::size_t epochs = 10;    // T
  std::size_t avg_start = 0;  // T_avg, 1-based epoch from which iterates are averaged (gadam)
  std::size_t batch_size = 128;
  double final_lr_fraction = 0.01;  // r
  std::uint64_t seed = 0;
  // Averaging schedule ramp: false evaluates (t/T - 0.5) as printed, true uses t/T_avg throughout.
  bool avg_ramp_consistent = false;

  bool averaging() const { return optimizer == OptimizerKind::gadam; }
  void validate() const;
};

// alpha_0 for t/T <= 0.5, linear to alpha_0 r at t/T = 0.9, then alpha_0 r.
double lr_schedule(double t, double T, double alpha0, double r);
double lr_schedule(double t, const TrainConfig& cfg);

// Iterate-averaging variant with alpha_avg = alpha_0 / 2. Branches test t/T_avg;
// the ramp uses t/T unless `consistent` is set.
double lr_schedule_avg(double t, double T, double T_avg, double alpha0, bool consistent = false);
double lr_schedule_avg(double t, const TrainConfig& cfg);

struct OptimizerState {
  Vec z;  // SGD momentum buffer, or Adam first moment
  Vec v;  // Adam second moment
  std::uint64_t step = 0;

  explicit OptimizerState(std::size_t p = 0) : z(p, 0.0), v(p, 0.0) {}
};

// z <- rho z + g; w <- w - alpha z.
void sgd_step(std::span<double> w, OptimizerState& s, std::span<const double> grad, double alpha, double rho);

// Bias-corrected Adam.
void adam_step(std::span<double> w, OptimizerState& s, std::span<const double> grad, double alpha, double beta1,
               double beta2, double eps);

// Adam plus w <- w - alpha lambda w, applied outside the adaptive scaling.
void adamw_step(std::span<double> w, OptimizerState& s, std::span<const double> grad, double alpha, double beta1,
                double beta2, double eps, double lambda);

// Incremental arithmetic mean of parameter iterates.
struct AveragedState {
  Vec mean;
  std::size_t count = 0;

  void add(std::span<const double> w);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;  // NaN without a test set
  double test_acc = 0.0;
  double weight_norm = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean cross-entropy (without the L2 term) and accuracy.
Evaluation evaluate(const ModelSpec& spec, const ParamVector& p, const BatchNormState& bn, const Dataset& data,
                    BnMode mode = BnMode::eval, Exec exec = Exec::parallel);

struct TrainResult {
  ParamVector params;
  BatchNormState bn;
  std::vector<EpochRecord> history;
  bool diverged = false;
  std::string failure;
  // Gadam only.
  std::optional<ParamVector> averaged;
  std::optional<BatchNormState> averaged_bn;
  std::size_t averaged_count = 0;
  std::optional<EpochRecord> averaged_record;

  // The point to analyse: averaged weights when present, else the final iterate.
  const ParamVector& solution() const { return averaged ? *averaged : params; }
  const BatchNormState& solution_bn() const { return averaged_bn ? *averaged_bn : bn; }
};

using EpochCallback = std::function<void(const EpochRecord&, const ParamVector&, const BatchNormState&)>;

inline constexpr double kDivergenceLoss = 1e6;

// Mini-batch training with a per-epoch reshuffle. Default initialization is
// init_params(spec, derive_seed(cfg.seed, 0)); pass `init` to start elsewhere.
TrainResult train(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset* test_data = nullptr, const EpochCallback& on_epoch = {},
                  const std::optional<ParamVector>& init = std::nullopt, Exec exec = Exec::parallel);

// Adamw steps with the averaging schedule, end-of-epoch iterate averaging from
// epoch T_avg, then a BN statistics pass for the averaged weights.
TrainResult gadam_run(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& train_data,
                      const Dataset* test_data = nullptr, const EpochCallback& on_epoch = {},
                      Exec exec = Exec::parallel);

// Running statistics for `p` set to the exact average of per-batch statistics
// over one ordered pass (momentum 1/k at the k-th batch).
BatchNormState recompute_bn_stats(const ModelSpec& spec, const ParamVector& p, const Dataset& data,
                                  std::size_t batch_size, Exec exec = Exec::parallel);

std::string history_csv(const std::vector<EpochRecord>& h);

}  // namespace flatspec
