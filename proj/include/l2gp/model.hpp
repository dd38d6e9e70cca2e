#ifndef L2GP_MODEL_HPP_
#define L2GP_MODEL_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "l2gp/autodiff.hpp"
#include "l2gp/error.hpp"
#include "l2gp/nn_ops.hpp"
#include "l2gp/random.hpp"
#include "l2gp/tensor.hpp"

namespace l2gp {

/// Ordered, named collection of trainable tensors.
class ParamSet {
 public:
  void add(std::string name, Var var) {
    names_.push_back(std::move(name));
    vars_.push_back(std::move(var));
  }

  std::size_t size() const noexcept { return vars_.size(); }
  const Var& operator[](std::size_t i) const { return vars_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::span<const Var> vars() const noexcept { return vars_; }

  const Var& at(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return vars_[i];
    }
    throw ContractError("no parameter named '" + name + "'");
  }

  /// Total number of scalars.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& v : vars_) n += v.value().size();
    return n;
  }

  std::vector<Tensor> values() const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(v.value());
    return out;
  }

  /// Fresh leaves holding copies of the current values.
  ParamSet clone() const {
    ParamSet out;
    for (std::size_t i = 0; i < vars_.size(); ++i) out.add(names_[i], parameter(vars_[i].value()));
    return out;
  }

  bool same_structure(const ParamSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (other.names_[i] != names_[i] || other.vars_[i].shape() != vars_[i].shape()) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Var> vars_;
};

struct ModelSpec {
  std::size_t input_dim = 10;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t n_classes = 2;
  bool input_bn = true;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

  void validate() const {
    if (input_dim == 0) throw ConfigError("model.input_dim must be positive");
    if (n_classes == 0) throw ConfigError("model.n_classes must be positive");
    for (std::size_t w : hidden) {
      if (w == 0) throw ConfigError("model.hidden widths must be positive");
    }
  }

  std::size_t feature_dim() const { return hidden.empty() ? input_dim : hidden.back(); }
};

/**
 * Features extractor f with two linear classifier heads.
 *
 * f = [input BN] -> (Linear -> BN -> ReLU) per hidden width. W holds every
 * trainable tensor of f including the BN affine parameters; the running
 * statistics live in `bn` and are never part of W.
 */
struct DualHeadModel {
  ModelSpec spec;
  ParamSet W;
  ParamSet H1;
  ParamSet H2;
  std::vector<BnStatistics> bn;
  BnSettings bn_settings;

  /// Deep copy with fresh leaves.
  DualHeadModel clone() const {
    DualHeadModel m{spec, W.clone(), H1.clone(), H2.clone(), bn, bn_settings};
    return m;
  }

  const ParamSet& head(int id) const {
    if (id == 1) return H1;
    if (id == 2) return H2;
    throw ContractError("head id must be 1 or 2, got " + std::to_string(id));
  }

  /// Names of the linear weight matrices of f, in forward order.
  std::vector<std::string> linear_weight_names() const {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) out.push_back("fc" + std::to_string(l) + ".weight");
    return out;
  }
};

namespace detail {

inline Tensor uniform_tensor(Tensor::Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

inline void add_linear(ParamSet& set, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  set.add(prefix + ".weight", parameter(uniform_tensor({in, out}, bound, rng)));
  set.add(prefix + ".bias", parameter(uniform_tensor({1, out}, bound, rng)));
}

inline void add_bn(ParamSet& set, const std::string& prefix, std::size_t c) {
  set.add(prefix + ".gamma", parameter(Tensor({1, c}, 1.0)));
  set.add(prefix + ".beta", parameter(Tensor({1, c}, 0.0)));
}

}  // namespace detail

/// Seeded construction with fan-in uniform initialization.
inline DualHeadModel build_model(const ModelSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  DualHeadModel m;
  m.spec = spec;
  if (spec.input_bn) {
    detail::add_bn(m.W, "bn_in", spec.input_dim);
    m.bn.push_back(BnStatistics::identity(spec.input_dim));
  }
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::string idx = std::to_string(l);
    detail::add_linear(m.W, "fc" + idx, in, spec.hidden[l], rng);
    detail::add_bn(m.W, "bn" + idx, spec.hidden[l]);
    m.bn.push_back(BnStatistics::identity(spec.hidden[l]));
    in = spec.hidden[l];
  }
  detail::add_linear(m.H1, "head1", in, spec.n_classes, rng);
  detail::add_linear(m.H2, "head2", in, spec.n_classes, rng);
  return m;
}

/// How the BN layers of f behave during one forward pass.
struct BnContext {
  BnMode mode = BnMode::kEvalSource;
  /// Statistics to read or update, one per BN layer. Null means the model's
  /// own running statistics (read-only modes only).
  std::vector<BnStatistics>* stats = nullptr;
  /// Momentum of the statistic updates; negative means the model's setting.
  double momentum = -1.0;

  static BnContext train(std::vector<BnStatistics>& running) { return {BnMode::kTrain, &running}; }
  static BnContext train_frozen() { return {BnMode::kTrainFrozen, nullptr}; }
  static BnContext eval_source() { return {BnMode::kEvalSource, nullptr}; }
};

/**
 * Forward pass of f using `weights` in place of model.W.
 *
 * The output is graph-connected to whatever `weights` were computed from,
 * so a perturbed W+ carries gradients back to W. Never touches model.W,
 * H1 or H2; BN statistics change only in the updating modes, and only the
 * ones passed through `ctx`.
 */
inline Var features(const DualHeadModel& model, const Var& x, const ParamSet& weights, BnContext ctx) {
  if (!weights.same_structure(model.W)) {
    throw DimensionError("features: weight set does not match the model's features extractor");
  }
  if (x.value().rank() != 2 || x.value().cols() != model.spec.input_dim) {
    throw DimensionError("features: input must be N x " + std::to_string(model.spec.input_dim));
  }
  const bool updates = ctx.mode == BnMode::kTrain || ctx.mode == BnMode::kEvalAdaptive;
  if (updates && ctx.stats == nullptr) throw ContractError("features: updating BN mode without statistics");
  std::vector<BnStatistics>* stats =
      ctx.stats ? ctx.stats : const_cast<std::vector<BnStatistics>*>(&model.bn);
  if (stats->size() != model.bn.size()) throw ContractError("features: wrong number of BN statistics");

  BnSettings settings = model.bn_settings;
  if (ctx.momentum >= 0.0) settings.momentum = ctx.momentum;
  std::size_t p = 0;
  std::size_t layer = 0;
  auto next = [&]() -> const Var& { return weights[p++]; };
  auto bn = [&](const Var& h) {
    const Var& gamma = next();
    const Var& beta = next();
    BnStatistics* s = ctx.mode == BnMode::kTrainFrozen ? nullptr : &(*stats)[layer];
    ++layer;
    return batch_norm(h, gamma, beta, s, ctx.mode, settings);
  };

  Var h = x;
  if (model.spec.input_bn) h = bn(h);
  for (std::size_t l = 0; l < model.spec.hidden.size(); ++l) {
    const Var& w = next();
    const Var& b = next();
    h = relu(bn(linear(h, w, b)));
  }
  return h;
}

inline Var features(const DualHeadModel& model, const Tensor& x, const ParamSet& weights, BnContext ctx) {
  return features(model, constant(x), weights, ctx);
}

/// Logits of head `head` (1 or 2) on already-extracted features.
inline Var predict(const DualHeadModel& model, int head, const Var& feats) {
  const ParamSet& h = model.head(head);
  if (feats.value().rank() != 2 || feats.value().cols() != h[0].value().rows()) {
    throw DimensionError("predict: features width does not match head input width");
  }
  return linear(feats, h[0], h[1]);
}

/**
 * W+ = W + lr_plus * g as recorded operations.
 *
 * With extend_graph false the direction is detached, so gradients of
 * anything computed from W+ reach W only through the identity path.
 */
inline ParamSet perturb(const ParamSet& W, std::span<const Var> g, double lr_plus, bool extend_graph) {
  if (g.size() != W.size()) {
    throw ContractError("perturb: gradient map has " + std::to_string(g.size()) + " entries for " +
                        std::to_string(W.size()) + " weights");
  }
  ParamSet out;
  for (std::size_t i = 0; i < W.size(); ++i) {
    if (!g[i].defined()) throw ContractError("perturb: missing gradient for " + W.name(i));
    if (g[i].shape() != W[i].shape()) throw ContractError("perturb: gradient shape mismatch for " + W.name(i));
    const Var dir = extend_graph ? g[i] : detach(g[i]);
    out.add(W.name(i), add(W[i], scale(dir, lr_plus)));
  }
  return out;
}

}  // namespace l2gp

#endif  // L2GP_MODEL_HPP_
