#ifndef L2GP_OPTIMIZER_HPP_
#define L2GP_OPTIMIZER_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "l2gp/autodiff.hpp"
#include "l2gp/error.hpp"
#include "l2gp/tensor.hpp"

namespace l2gp {

struct SgdConfig {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  bool nesterov = true;
};

/// Momentum buffers mirror the parameter list handed to sgd_update.
struct OptimizerState {
  std::vector<Tensor> buffers;
  double lr = 1e-3;

  static OptimizerState zeros(std::span<const Var> params, double lr) {
    OptimizerState s;
    s.lr = lr;
    for (const auto& p : params) s.buffers.emplace_back(p.shape(), 0.0);
    return s;
  }
};

/**
 * One SGD step at state.lr with L2 weight decay and (Nesterov) momentum:
 *
 *   g <- g + wd * theta
 *   b <- mu * b + g
 *   d <- g + mu * b   (nesterov)   or   d <- b
 *   theta <- theta - lr * d
 */
inline void sgd_update(std::span<const Var> params, std::span<const Tensor> grads, const SgdConfig& cfg,
                       OptimizerState& state) {
  if (grads.size() != params.size() || state.buffers.size() != params.size()) {
    throw ContractError("sgd_update: params, grads and buffers must align");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& theta = params[i].value();
    const Tensor& g = grads[i];
    Tensor& buf = state.buffers[i];
    if (!g.same_shape(theta) || !buf.same_shape(theta)) throw DimensionError("sgd_update: shape mismatch");
    Tensor next = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j] + cfg.weight_decay * theta[j];
      buf[j] = cfg.momentum * buf[j] + gj;
      const double step = cfg.nesterov ? gj + cfg.momentum * buf[j] : buf[j];
      next[j] = theta[j] - state.lr * step;
    }
    params[i].assign(std::move(next));
  }
}

}  // namespace l2gp

#endif  // L2GP_OPTIMIZER_HPP_
