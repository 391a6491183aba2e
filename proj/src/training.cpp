#include "flatspec/training.hpp"

#include <cmath>
#include <limits>

#include "flatspec/format.hpp"
#include "flatspec/mlp.hpp"
#include "flatspec/rng.hpp"

namespace flatspec {

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamw: return "adamw";
    case OptimizerKind::gadam: return "gadam";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "gadam") return OptimizerKind::gadam;
  throw TrainError("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  const std::string who = "TrainConfig" + (name.empty() ? std::string() : " '" + name + "'");
  if (!(lr > 0.0)) throw TrainError(who + ": lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw TrainError(who + ": momentum must be in [0, 1)");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw TrainError(who + ": beta1 and beta2 must be in (0, 1)");
  if (!(eps > 0.0)) throw TrainError(who + ": eps must be > 0");
  if (!(l2 >= 0.0) || !(decoupled_decay >= 0.0)) throw TrainError(who + ": decay coefficients must be >= 0");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
    throw TrainError(who + ": final_lr_fraction must be in (0, 1]");
  if (epochs < 1) throw TrainError(who + ": epochs must be >= 1");
  if (batch_size < 1) throw TrainError(who + ": batch_size must be >= 1");
  if (averaging() && !(avg_start >= 1 && avg_start < epochs))
    throw TrainError(who + ": averaging needs 1 <= avg_start < epochs");
}

double lr_schedule(double t, double T, double alpha0, double r) {
  const double u = t / T;
  if (u <= 0.5) return alpha0;
  if (u <= 0.9) return alpha0 * (1.0 - (1.0 - r) * (u - 0.5) / 0.4);
  return alpha0 * r;
}

double lr_schedule(double t, const TrainConfig& cfg) {
  return lr_schedule(t, static_cast<double>(cfg.epochs), cfg.lr, cfg.final_lr_fraction);
}

double lr_schedule_avg(double t, double T, double T_avg, double alpha0, bool consistent) {
  const double alpha_avg = 0.5 * alpha0;
  const double u = t / T_avg;
  if (u <= 0.5) return alpha0;
  if (u <= 0.9) {
    const double ramp = consistent ? u : t / T;
    return alpha0 * (1.0 - (1.0 - alpha_avg / alpha0) * (ramp - 0.5) / 0.4);
  }
  return alpha_avg;
}

double lr_schedule_avg(double t, const TrainConfig& cfg) {
  return lr_schedule_avg(t, static_cast<double>(cfg.epochs), static_cast<double>(cfg.avg_start), cfg.lr,
                         cfg.avg_ramp_consistent);
}

namespace {

void check_sizes(std::span<double> w, OptimizerState& s, std::span<const double> grad) {
  if (grad.size() != w.size()) throw TrainError("optimizer step: gradient length does not match parameters");
  if (s.z.size() != w.size()) s.z.assign(w.size(), 0.0);
  if (s.v.size() != w.size()) s.v.assign(w.size(), 0.0);
}

}  // namespace

void sgd_step(std::span<double> w, OptimizerState& s, std::span<const double> grad, double alpha, double rho) {
  check_sizes(w, s, grad);
  ++s.step;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.z[i] = rho * s.z[i] + grad[i];
    w[i] -= alpha * s.z[i];
  }
}

void adamw_step(std::span<double> w, OptimizerState& s, std::span<const double> grad, double alpha, double beta1,
                double beta2, double eps, double lambda) {
  check_sizes(w, s, grad);
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.z[i] = beta1 * s.z[i] + (1.0 - beta1) * grad[i];
    s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = s.z[i] / c1, vhat = s.v[i] / c2;
    double update = mhat / (std::sqrt(vhat) + eps);
    if (lambda != 0.0) update += lambda * w[i];
    w[i] -= alpha * update;
  }
}

void adam_step(std::span<double> w, OptimizerState& s, std::span<const double> grad, double alpha, double beta1,
               double beta2, double eps) {
  adamw_step(w, s, grad, alpha, beta1, beta2, eps, 0.0);
}

void AveragedState::add(std::span<const double> w) {
  if (count == 0) mean.assign(w.size(), 0.0);
  if (w.size() != mean.size()) throw TrainError("AveragedState: iterate length changed");
  ++count;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < w.size(); ++i) mean[i] += (w[i] - mean[i]) * inv;
}

Evaluation evaluate(const ModelSpec& spec, const ParamVector& p, const BatchNormState& bn, const Dataset& data,
                    BnMode mode, Exec exec) {
  const Mat logits = forward(spec, p, bn, data.inputs, mode, exec);
  const auto sm = softmax_cross_entropy(logits, data.labels);
  return {sm.loss, accuracy(logits, data.labels)};
}

BatchNormState recompute_bn_stats(const ModelSpec& spec, const ParamVector& p, const Dataset& data,
                                  std::size_t batch_size, Exec exec) {
  BatchNormState bn = BatchNormState::fresh(spec);
  if (!spec.any_bn()) return bn;
  const std::size_t n = data.size(), bs = std::max<std::size_t>(1, std::min(batch_size, n));
  std::size_t k = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += bs) {
    rows.clear();
    for (std::size_t r = start; r < std::min(n, start + bs); ++r) rows.push_back(r);
    const Mat x = gather_rows(data.inputs, rows);
    const auto cache = mlp_forward<double>(spec, p.layout, std::span<const double>(p.flat), bn, x, BnMode::train, exec);
    ++k;
    update_running_stats(bn, cache, 1.0 / static_cast<double>(k));
  }
  return bn;
}

namespace {

double l2_norm(const Vec& w) { return norm2(w); }

EpochRecord epoch_record(const ModelSpec& spec, const ParamVector& p, const BatchNormState& bn, const Dataset& train,
                         const Dataset* test, std::size_t epoch, double lr, Exec exec) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = lr;
  const Evaluation tr = evaluate(spec, p, bn, train, BnMode::eval, exec);
  rec.train_loss = tr.loss;
  rec.train_acc = tr.accuracy;
  if (test) {
    const Evaluation te = evaluate(spec, p, bn, *test, BnMode::eval, exec);
    rec.test_loss = te.loss;
    rec.test_acc = te.accuracy;
  } else {
    rec.test_loss = rec.test_acc = std::numeric_limits<double>::quiet_NaN();
  }
  rec.weight_norm = l2_norm(p.flat);
  return rec;
}

}  // namespace

TrainResult train(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& train_data, const Dataset* test_data,
                  const EpochCallback& on_epoch, const std::optional<ParamVector>& init, Exec exec) {
  spec.validate();
  cfg.validate();
  train_data.validate();
  if (train_data.dim() != spec.input_dim)
    throw TrainError("train: dataset has " + std::to_string(train_data.dim()) + " features, model expects " +
                     std::to_string(spec.input_dim));
  TrainResult res;
  res.params = init ? *init : init_params(spec, derive_seed(cfg.seed, 0));
  if (res.params.flat.size() != ParamLayout(spec).size()) throw TrainError("train: initial parameters do not fit spec");
  res.bn = BatchNormState::fresh(spec);
  const std::size_t p = res.params.flat.size();
  const std::size_t n = train_data.size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  OptimizerState opt(p);
  AveragedState avg;
  Vec grad(p);
  std::vector<std::size_t> rows;
  std::vector<int> labels;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double t = static_cast<double>(e);
    const double lr = cfg.averaging() ? lr_schedule_avg(t, cfg) : lr_schedule(t, cfg);
    Rng shuffle(derive_seed(cfg.seed, 1000 + e));
    const auto order = permutation(shuffle, n);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
      labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = train_data.labels[rows[i]];
      const Mat x = gather_rows(train_data.inputs, rows);
      std::fill(grad.begin(), grad.end(), 0.0);
      ForwardCache<double> cache;
      const double scale = 1.0 / static_cast<double>(rows.size());
      const double loss = scale * batch_loss_and_grad<double>(spec, res.params.layout, res.params.flat, res.bn, x,
                                                               labels, BnMode::train, scale, grad, exec, &cache);
      if (!std::isfinite(loss) || loss > kDivergenceLoss || !all_finite(grad)) {
        res.diverged = true;
        res.failure = "diverged in epoch " + std::to_string(e + 1) + " (batch loss " + fmt17(loss) + ")";
        return res;
      }
      if (spec.any_bn()) update_running_stats(res.bn, cache, res.bn.momentum);
      if (cfg.l2 > 0.0)
        for (std::size_t i = 0; i < p; ++i) grad[i] += cfg.l2 * res.params.flat[i];
      switch (cfg.optimizer) {
        case OptimizerKind::sgd: sgd_step(res.params.flat, opt, grad, lr, cfg.momentum); break;
        case OptimizerKind::adam: adam_step(res.params.flat, opt, grad, lr, cfg.beta1, cfg.beta2, cfg.eps); break;
        case OptimizerKind::adamw:
        case OptimizerKind::gadam:
          adamw_step(res.params.flat, opt, grad, lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.decoupled_decay);
          break;
      }
    }
    if (!all_finite(res.params.flat)) {
      res.diverged = true;
      res.failure = "non-finite parameters after epoch " + std::to_string(e + 1);
      return res;
    }
    if (cfg.averaging() && e + 1 >= cfg.avg_start) avg.add(res.params.flat);
    res.history.push_back(epoch_record(spec, res.params, res.bn, train_data, test_data, e + 1, lr, exec));
    if (on_epoch) on_epoch(res.history.back(), res.params, res.bn);
  }

  if (cfg.averaging()) {
    ParamVector a{avg.mean, res.params.layout};
    res.averaged_bn = recompute_bn_stats(spec, a, train_data, bs, exec);
    res.averaged_count = avg.count;
    res.averaged_record = epoch_record(spec, a, *res.averaged_bn, train_data, test_data, cfg.epochs,
                                       res.history.back().lr, exec);
    res.averaged = std::move(a);
  }
  return res;
}

TrainResult gadam_run(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& train_data,
                      const Dataset* test_data, const EpochCallback& on_epoch, Exec exec) {
  if (cfg.optimizer != OptimizerKind::gadam) throw TrainError("gadam_run: config optimizer must be gadam");
  return train(spec, cfg, train_data, test_data, on_epoch, std::nullopt, exec);
}

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,lr,train_loss,train_acc,test_loss,test_acc,weight_norm\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + "," + fmt17(r.lr) + "," + fmt17(r.train_loss) + "," + fmt17(r.train_acc) + "," +
           fmt17(r.test_loss) + "," + fmt17(r.test_acc) + "," + fmt17(r.weight_norm) + "\n";
  return out;
}

}  // namespace flatspec
