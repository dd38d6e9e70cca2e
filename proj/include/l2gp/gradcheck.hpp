#ifndef L2GP_GRADCHECK_HPP_
#define L2GP_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "l2gp/autodiff.hpp"
#include "l2gp/data.hpp"
#include "l2gp/model.hpp"
#include "l2gp/nn_ops.hpp"
#include "l2gp/random.hpp"
#include "l2gp/reference.hpp"
#include "l2gp/trainer.hpp"

namespace l2gp {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
}

/**
 * Compares backward() against central differences, coordinate by coordinate.
 *
 * `f` must rebuild its graph from the current leaf values on every call and
 * be deterministic. Leaves are restored exactly after each probe.
 */
inline GradCheckResult grad_check(const std::function<Var()>& f, std::span<const Var> params, double step = 1e-5) {
  const std::vector<Var> analytic = backward(f(), params);
  GradCheckResult res;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor base = params[p].value();
    for (std::size_t i = 0; i < base.size(); ++i) {
      Tensor probe = base;
      probe[i] = base[i] + step;
      params[p].assign(probe);
      const double up = f().value().item();
      probe[i] = base[i] - step;
      params[p].assign(probe);
      const double down = f().value().item();
      params[p].assign(base);
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].value()[i];
      const double err = relative_error(a, numeric);
      ++res.coordinates;
      if (err > res.max_rel_error || res.coordinates == 1) {
        res.max_rel_error = err;
        res.worst_param = p;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

using RefParams = reference::Params<long double>;

/**
 * Compares analytic gradients (ordered W, H1, H2) against central differences
 * of an extended-precision reference objective.
 */
inline GradCheckResult grad_check_reference(std::span<const Var> analytic, RefParams base,
                                            const std::function<long double(const RefParams&)>& f,
                                            long double step = 1e-5L) {
  std::vector<reference::Mat<long double>*> mats;
  for (auto* group : {&base.W, &base.H1, &base.H2}) {
    for (auto& m : *group) mats.push_back(&m);
  }
  if (mats.size() != analytic.size()) throw ContractError("grad_check_reference: parameter count mismatch");
  GradCheckResult res;
  for (std::size_t p = 0; p < mats.size(); ++p) {
    auto& v = mats[p]->v;
    if (v.size() != analytic[p].value().size()) throw DimensionError("grad_check_reference: shape mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const long double keep = v[i];
      v[i] = keep + step;
      const long double up = f(base);
      v[i] = keep - step;
      const long double down = f(base);
      v[i] = keep;
      const double numeric = static_cast<double>((up - down) / (2.0L * step));
      const double a = analytic[p].value()[i];
      const double err = relative_error(a, numeric);
      ++res.coordinates;
      if (err > res.max_rel_error || res.coordinates == 1) {
        res.max_rel_error = err;
        res.worst_param = p;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

struct GradCheckComponent {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t coordinates = 0;
  bool passed() const { return max_rel_error < threshold; }
};

namespace detail {

inline Tensor random_tensor(Tensor::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Random values bounded away from zero, so ReLU and |.| kinks are not probed.
inline Tensor away_from_zero(Tensor::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double mag = rng.uniform(0.1, 2.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

inline Batch random_batch(std::size_t n, std::size_t d, int classes, Rng& rng) {
  Batch b{random_tensor({n, d}, rng), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) b.y[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  return b;
}

}  // namespace detail

/// Small model used by the L2GP gradient checks (95 parameters).
inline ModelSpec gradcheck_model_spec(std::uint64_t seed) {
  ModelSpec s;
  s.input_dim = 4;
  s.hidden = {5, 4};
  s.n_classes = 2;
  s.input_bn = true;
  s.seed = seed;
  return s;
}

/**
 * Gradient checks of every differentiable operation, a BN network, and the
 * full two-batch objective in first-order and extend-graph modes.
 */
inline std::vector<GradCheckComponent> run_gradcheck_suite(std::uint64_t seed, double step = 1e-5) {
  constexpr double kFirstOrder = 1e-5;
  constexpr double kSecondOrder = 1e-4;
  std::vector<GradCheckComponent> out;
  Rng rng(seed);
  auto record = [&](std::string name, const GradCheckResult& r, double threshold) {
    out.push_back({std::move(name), r.max_rel_error, threshold, r.coordinates});
  };
  auto weighted_sum = [](const Var& y, const Tensor& w) { return sum_all(mul(y, constant(w))); };

  {
    Var a = parameter(detail::random_tensor({3, 4}, rng));
    Var b = parameter(detail::random_tensor({4, 2}, rng));
    Tensor w = detail::random_tensor({3, 2}, rng);
    std::vector<Var> ps{a, b};
    record("matmul", grad_check([&] { return weighted_sum(matmul(a, b), w); }, ps, step), kFirstOrder);
  }
  {
    Var x = parameter(detail::away_from_zero({4, 5}, rng));
    Tensor w = detail::random_tensor({4, 5}, rng);
    std::vector<Var> ps{x};
    record("relu", grad_check([&] { return weighted_sum(relu(x), w); }, ps, step), kFirstOrder);
  }
  {
    Var x = parameter(detail::random_tensor({3, 4}, rng));
    Tensor w = detail::random_tensor({3, 4}, rng);
    std::vector<Var> ps{x};
    record("elementwise", grad_check([&] {
             return weighted_sum(add(log(add_scalar(exp(x), 1.0)), pow_scalar(add_scalar(mul(x, x), 0.5), 1.5)), w);
           }, ps, step), kFirstOrder);
  }
  {
    Var x = parameter(detail::random_tensor({8, 3}, rng));
    Var gamma = parameter(detail::random_tensor({1, 3}, rng));
    Var beta = parameter(detail::random_tensor({1, 3}, rng));
    Tensor w = detail::random_tensor({8, 3}, rng);
    std::vector<Var> ps{x, gamma, beta};
    record("batch_norm", grad_check([&] {
             return weighted_sum(batch_norm(x, gamma, beta, nullptr, BnMode::kTrainFrozen), w);
           }, ps, step), kFirstOrder);
  }
  {
    Var z = parameter(detail::random_tensor({5, 3}, rng));
    std::vector<int> labels{0, 2, 1, 1, 0};
    std::vector<Var> ps{z};
    record("softmax_cross_entropy", grad_check([&] { return softmax_cross_entropy(z, labels); }, ps, step),
           kFirstOrder);
  }
  {
    Var a = parameter(detail::random_tensor({4, 3}, rng));
    Var b = parameter(detail::random_tensor({4, 3}, rng));
    std::vector<Var> ps{a, b};
    record("l1_batch_distance", grad_check([&] { return l1_batch_distance(a, b); }, ps, step), kFirstOrder);
  }

  // Network-level checks use the long-double reference as the difference oracle.
  const ModelSpec spec = gradcheck_model_spec(derive_seed(seed, 1));
  const long double ref_step = step;
  const long double eps = 1e-5L;
  {
    DualHeadModel m = build_model(spec);
    Batch b = detail::random_batch(8, spec.input_dim, 2, rng);
    std::vector<Var> ps = trainable(m, Variant::kL2gp);
    Var f = features(m, b.x, m.W, BnContext::train_frozen());
    const std::vector<Var> g =
        backward(add(softmax_cross_entropy(predict(m, 1, f), b.y), softmax_cross_entropy(predict(m, 2, f), b.y)), ps);
    const auto x = reference::from_tensor<long double>(b.x);
    record("bn_network_cross_entropy", grad_check_reference(g, reference::params_of<long double>(m),
             [&](const RefParams& p) {
               reference::FeatureCache<long double> cache;
               const auto feats = reference::features(spec, p.W, x, eps, cache);
               return reference::cross_entropy(reference::head(p.H1, feats), std::span<const int>(b.y)) +
                      reference::cross_entropy(reference::head(p.H2, feats), std::span<const int>(b.y));
             }, ref_step), kFirstOrder);
  }
  {
    // g = dL/dW as graph nodes, then h(g) = <c, g>; checks the second backward pass.
    DualHeadModel m = build_model(spec);
    Batch b = detail::random_batch(8, spec.input_dim, 2, rng);
    std::vector<Tensor> c;
    for (const auto& v : m.W.vars()) c.push_back(detail::random_tensor(v.shape(), rng));
    std::vector<Var> ps = trainable(m, Variant::kL2gp);
    Var f = features(m, b.x, m.W, BnContext::train_frozen());
    std::vector<Var> gw = backward(softmax_cross_entropy(predict(m, 2, f), b.y), m.W.vars(), {true});
    Var h = constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < gw.size(); ++i) h = add(h, sum_all(mul(gw[i], constant(c[i]))));
    const std::vector<Var> g = backward(h, ps);
    const auto x = reference::from_tensor<long double>(b.x);
    record("second_order_gradient", grad_check_reference(g, reference::params_of<long double>(m),
             [&](const RefParams& p) {
               const auto grads = reference::cross_entropy_grad_w(spec, p.W, p.H2, x, std::span<const int>(b.y), eps);
               long double total = 0;
               for (std::size_t i = 0; i < grads.size(); ++i)
                 for (std::size_t j = 0; j < grads[i].v.size(); ++j) total += grads[i].v[j] * c[i][j];
               return total;
             }, ref_step), kSecondOrder);
  }
  for (bool extend : {false, true}) {
    DualHeadModel m = build_model(spec);
    Batch b1 = detail::random_batch(8, spec.input_dim, 2, rng);
    Batch b2 = detail::random_batch(8, spec.input_dim, 2, rng);
    TrainConfig cfg;
    cfg.variant = Variant::kL2gp;
    cfg.extend_graph = extend;
    std::vector<Var> ps = trainable(m, Variant::kL2gp);
    std::vector<Tensor> fixed;
    std::vector<reference::Mat<long double>> fixed_ref;
    if (!extend) {
      // First order treats the perturbation direction as a constant.
      Var f = features(m, b1.x, m.W, BnContext::train_frozen());
      for (const auto& g : backward(softmax_cross_entropy(predict(m, 2, f), b1.y), m.W.vars())) {
        fixed.push_back(g.value());
        fixed_ref.push_back(reference::from_tensor<long double>(g.value()));
      }
    }
    const std::vector<Var> g = backward(l2gp_objective(m, b1, b2, cfg, nullptr, fixed).l_total, ps, {extend});
    record(extend ? "l2gp_objective_extend_graph" : "l2gp_objective_first_order",
           grad_check_reference(g, reference::params_of<long double>(m),
             [&](const RefParams& p) {
               return reference::l2gp_objective<long double>(spec, p, b1, b2, cfg.alpha, cfg.lr_plus, false, eps,
                                                             extend ? nullptr : &fixed_ref);
             }, ref_step), extend ? kSecondOrder : kFirstOrder);
  }
  return out;
}

}  // namespace l2gp

#endif  // L2GP_GRADCHECK_HPP_
