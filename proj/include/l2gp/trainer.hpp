#ifndef L2GP_TRAINER_HPP_
#define L2GP_TRAINER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "l2gp/adapt.hpp"
#include "l2gp/autodiff.hpp"
#include "l2gp/data.hpp"
#include "l2gp/error.hpp"
#include "l2gp/metrics.hpp"
#include "l2gp/model.hpp"
#include "l2gp/nn_ops.hpp"
#include "l2gp/optimizer.hpp"

namespace l2gp {

/**
 * Training procedures.
 *
 * kAblationA: both heads, cross-entropy only.
 * kAblationB: L2GP with the unperturbed prediction of the avoidance loss
 *             detached.
 * kAblationC: trained exactly as L2GP; evaluated with head 2.
 * kAblationD: one head carries both the cross-entropy and the avoidance
 *             loss.
 */
enum class Variant { kErm, kL2gp, kAblationA, kAblationB, kAblationC, kAblationD };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kErm: return "ERM";
    case Variant::kL2gp: return "L2GP";
    case Variant::kAblationA: return "A";
    case Variant::kAblationB: return "B";
    case Variant::kAblationC: return "C";
    case Variant::kAblationD: return "D";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::kErm, Variant::kL2gp, Variant::kAblationA, Variant::kAblationB, Variant::kAblationC,
                    Variant::kAblationD}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (expected ERM, L2GP, A, B, C or D)");
}

/// The procedure actually run to train `v`.
inline Variant training_variant(Variant v) { return v == Variant::kAblationC ? Variant::kL2gp : v; }
inline int evaluation_head(Variant v) { return v == Variant::kAblationC ? 2 : 1; }
inline bool uses_two_batches(Variant v) { return v != Variant::kErm; }
inline bool uses_second_head(Variant v) { return v != Variant::kErm && v != Variant::kAblationD; }

struct TrainConfig {
  Variant variant = Variant::kL2gp;
  double alpha = 1.0;
  double lr_plus = 1.0;
  bool extend_graph = false;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  int epochs = 30;
  int lr_drop_epoch = 24;
  double weight_decay = 1e-5;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const {
    auto finite_nonneg = [](double v, const char* name) {
      if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string("train.") + name + " must be finite and >= 0");
    };
    finite_nonneg(alpha, "alpha");
    finite_nonneg(lr_plus, "lr_plus");
    finite_nonneg(lr, "lr");
    finite_nonneg(weight_decay, "weight_decay");
    finite_nonneg(momentum, "momentum");
    if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (epochs > 0 && (lr_drop_epoch < 0 || lr_drop_epoch >= epochs)) {
      throw ConfigError("train.lr_drop_epoch must be in [0, epochs)");
    }
  }

  SgdConfig sgd() const { return {lr, momentum, weight_decay, true}; }
};

/// Learning rate in effect during `epoch`: lr, divided by 10 from lr_drop_epoch on.
inline double scheduled_lr(const TrainConfig& cfg, int epoch) {
  return epoch >= cfg.lr_drop_epoch ? cfg.lr / 10.0 : cfg.lr;
}

struct StepReport {
  double l_c1 = 0.0;
  double l_c2 = 0.0;
  double l_sa = 0.0;
  double l_total = 0.0;
  double grad_norm_w = 0.0;
  double grad_norm_h1 = 0.0;
  double grad_norm_h2 = 0.0;
};

inline std::string to_string(const StepReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "L_c1=" << r.l_c1 << " L_c2=" << r.l_c2 << " L_sa=" << r.l_sa << " L_total=" << r.l_total
     << " |gW|=" << r.grad_norm_w << " |gH1|=" << r.grad_norm_h1 << " |gH2|=" << r.grad_norm_h2;
  return os.str();
}

/// Parameters updated by the optimizer for a variant, in W, H1, H2 order.
inline std::vector<Var> trainable(const DualHeadModel& m, Variant v) {
  std::vector<Var> out(m.W.vars().begin(), m.W.vars().end());
  out.insert(out.end(), m.H1.vars().begin(), m.H1.vars().end());
  if (uses_second_head(training_variant(v))) out.insert(out.end(), m.H2.vars().begin(), m.H2.vars().end());
  return out;
}

/// The graph of one two-batch objective; the scalars are L_c1, L_c2, L_sa, L_total.
struct L2gpObjective {
  Var l_c1;
  Var l_c2;
  Var l_sa;
  Var l_total;
};

/**
 * Builds the two-batch objective on the model's current weights.
 *
 * The first-batch forward uses batch statistics and, when `running` is
 * given, updates it; the two second-batch forwards use batch statistics and
 * update nothing. When `fixed_direction` is non-empty it replaces the
 * perturbation direction (used to check the first-order gradient, in which
 * the direction is a constant).
 */
inline L2gpObjective l2gp_objective(const DualHeadModel& model, const Batch& b1, const Batch& b2,
                                    const TrainConfig& cfg, std::vector<BnStatistics>* running,
                                    std::span<const Tensor> fixed_direction = {}) {
  const Variant v = training_variant(cfg.variant);
  if (v == Variant::kErm) throw ContractError("l2gp_objective: ERM uses a single batch");
  if (b1.x.rows() != b2.x.rows()) throw ContractError("l2gp_objective: batches must have equal size");
  const bool single = v == Variant::kAblationD;

  const BnContext primary = running ? BnContext::train(*running) : BnContext::train_frozen();
  Var f1 = features(model, b1.x, model.W, primary);
  L2gpObjective obj;
  obj.l_c1 = softmax_cross_entropy(predict(model, 1, f1), b1.y);
  obj.l_c2 = single ? obj.l_c1 : softmax_cross_entropy(predict(model, 2, f1), b1.y);

  if (v == Variant::kAblationA) {
    obj.l_sa = constant(Tensor::scalar(0.0));
    obj.l_total = scale(add(obj.l_c1, obj.l_c2), 0.5);
    return obj;
  }

  std::vector<Var> direction;
  if (!fixed_direction.empty()) {
    for (const Tensor& t : fixed_direction) direction.push_back(constant(t));
  } else {
    direction = backward(obj.l_c2, model.W.vars(), {cfg.extend_graph});
  }
  const ParamSet w_plus = perturb(model.W, direction, cfg.lr_plus, cfg.extend_graph);

  const int head = single ? 1 : 2;
  Var plain = predict(model, head, features(model, b2.x, model.W, BnContext::train_frozen()));
  if (v == Variant::kAblationB) plain = detach(plain);
  Var perturbed = predict(model, head, features(model, b2.x, w_plus, BnContext::train_frozen()));
  obj.l_sa = l1_batch_distance(plain, perturbed);

  const Var ce = single ? obj.l_c1 : scale(add(obj.l_c1, obj.l_c2), 0.5);
  obj.l_total = add(ce, scale(obj.l_sa, cfg.alpha));
  return obj;
}

namespace detail {

inline double group_norm(std::span<const Var> grads, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end && i < grads.size(); ++i)
    for (double v : grads[i].value().data()) s += v * v;
  return std::sqrt(s);
}

inline void apply_update(DualHeadModel& model, Variant v, const Var& loss, const TrainConfig& cfg,
                         OptimizerState& opt, StepReport& report) {
  const std::vector<Var> params = trainable(model, v);
  const std::vector<Var> grads = backward(loss, params);
  const std::size_t nw = model.W.size(), nh = model.H1.size();
  report.grad_norm_w = group_norm(grads, 0, nw);
  report.grad_norm_h1 = group_norm(grads, nw, nw + nh);
  report.grad_norm_h2 = group_norm(grads, nw + nh, nw + 2 * nh);
  std::vector<Tensor> g;
  g.reserve(grads.size());
  for (const auto& gv : grads) g.push_back(gv.value());
  if (opt.buffers.empty()) opt = OptimizerState::zeros(params, opt.lr);
  sgd_update(params, g, cfg.sgd(), opt);
}

inline void require_finite(const StepReport& r) {
  if (!std::isfinite(r.l_c1) || !std::isfinite(r.l_c2) || !std::isfinite(r.l_sa) || !std::isfinite(r.l_total)) {
    throw DivergenceError("non-finite loss: " + to_string(r));
  }
}

}  // namespace detail

/// One iteration of a two-batch variant: a single optimizer update on L_total.
inline StepReport l2gp_step(DualHeadModel& model, const Batch& b1, const Batch& b2, const TrainConfig& cfg,
                            OptimizerState& opt) {
  StepReport r;
  try {
    const L2gpObjective obj = l2gp_objective(model, b1, b2, cfg, &model.bn);
    r.l_c1 = obj.l_c1.value().item();
    r.l_c2 = obj.l_c2.value().item();
    r.l_sa = obj.l_sa.value().item();
    r.l_total = obj.l_total.value().item();
    detail::require_finite(r);
    detail::apply_update(model, cfg.variant, obj.l_total, cfg, opt, r);
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("numeric failure in step: ") + e.what() + "; partial report: " + to_string(r));
  }
  return r;
}

/// One cross-entropy update of f and head 1.
inline StepReport erm_step(DualHeadModel& model, const Batch& batch, const TrainConfig& cfg, OptimizerState& opt) {
  StepReport r;
  try {
    Var f = features(model, batch.x, model.W, BnContext::train(model.bn));
    Var loss = softmax_cross_entropy(predict(model, 1, f), batch.y);
    r.l_c1 = r.l_total = loss.value().item();
    detail::require_finite(r);
    detail::apply_update(model, Variant::kErm, loss, cfg, opt, r);
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("numeric failure in step: ") + e.what());
  }
  return r;
}

struct EpochMetrics {
  int epoch = 0;
  double l_c1 = 0.0;
  double l_c2 = 0.0;
  double l_sa = 0.0;
  double l_total = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
  double mad = 0.0;
  std::vector<double> mad_per_layer;
};

struct TrainResult {
  DualHeadModel final_model;
  DualHeadModel best_model;
  int best_epoch = -1;
  double best_val_accuracy = -1.0;
  std::vector<EpochMetrics> history;
};

/// Raised when a run diverges; carries everything logged before the failure.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, std::vector<EpochMetrics> history, int epoch)
      : DivergenceError(what), history(std::move(history)), epoch(epoch) {}
  std::vector<EpochMetrics> history;
  int epoch;
};

/**
 * Full training run with best-validation model selection.
 *
 * Validation accuracy is head 1 under the running statistics; ties keep the
 * earlier epoch. Zero epochs return the initialized model.
 */
inline TrainResult train(const TrainConfig& cfg, const ModelSpec& spec, const Dataset& train_set,
                         const Dataset& val_set) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training split is empty");
  if (val_set.size() == 0) throw ConfigError("validation split is empty");
  if (train_set.dim() != spec.input_dim || val_set.dim() != spec.input_dim) {
    throw ConfigError("dataset dimension does not match model.input_dim");
  }

  const Variant v = training_variant(cfg.variant);
  const std::size_t per_step = uses_two_batches(v) ? 2 : 1;
  const BatchSampler sampler(train_set.size(), cfg.batch_size, derive_seed(cfg.seed, 99), per_step);

  TrainResult result{build_model(spec), DualHeadModel{}, -1, -1.0, {}};
  DualHeadModel& model = result.final_model;
  result.best_model = model.clone();
  OptimizerState opt;
  opt.lr = cfg.lr;
  std::deque<StepReport> recent;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.lr = scheduled_lr(cfg, epoch);
    EpochMetrics em;
    em.epoch = epoch;
    em.lr = opt.lr;
    const auto steps = sampler.epoch(static_cast<std::size_t>(epoch));
    for (const auto& step : steps) {
      StepReport r;
      try {
        if (per_step == 1) {
          r = erm_step(model, make_batch(train_set, step[0]), cfg, opt);
        } else {
          r = l2gp_step(model, make_batch(train_set, step[0]), make_batch(train_set, step[1]), cfg, opt);
        }
      } catch (const DivergenceError& e) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ": " << e.what() << "\nrecent steps:";
        for (const auto& prev : recent) os << "\n  " << to_string(prev);
        throw TrainingDiverged(os.str(), result.history, epoch);
      }
      recent.push_back(r);
      if (recent.size() > 16) recent.pop_front();
      em.l_c1 += r.l_c1;
      em.l_c2 += r.l_c2;
      em.l_sa += r.l_sa;
      em.l_total += r.l_total;
    }
    if (!steps.empty()) {
      const double n = static_cast<double>(steps.size());
      em.l_c1 /= n;
      em.l_c2 /= n;
      em.l_sa /= n;
      em.l_total /= n;
    }
    em.val_accuracy = evaluate(model, val_set, EvalMode::kSourceStats, 1);
    const MadReport mad = mad_model(model, epoch);
    em.mad = mad.total;
    em.mad_per_layer = mad.per_layer;
    result.history.push_back(em);
    if (em.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = em.val_accuracy;
      result.best_epoch = epoch;
      result.best_model = model.clone();
    }
  }
  return result;
}

}  // namespace l2gp

#endif  // L2GP_TRAINER_HPP_
