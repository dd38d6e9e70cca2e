#ifndef L2GP_NN_OPS_HPP_
#define L2GP_NN_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "l2gp/autodiff.hpp"
#include "l2gp/error.hpp"
#include "l2gp/tensor.hpp"

namespace l2gp {

/// Per-feature statistics of one batch-normalization layer, each 1 x C.
struct BnStatistics {
  Tensor mean;
  Tensor var;

  static BnStatistics identity(std::size_t channels) {
    return {Tensor({1, channels}, 0.0), Tensor({1, channels}, 1.0)};
  }
  friend bool operator==(const BnStatistics&, const BnStatistics&) = default;
};

enum class BnMode {
  /// Batch statistics; the supplied statistics receive a momentum update.
  kTrain,
  /// Batch statistics; nothing is updated.
  kTrainFrozen,
  /// Normalize with the supplied statistics; nothing is updated.
  kEvalSource,
  /// Update the supplied (target) statistics with the batch, then normalize
  /// with the updated estimate.
  kEvalAdaptive,
};

struct BnSettings {
  double eps = 1e-5;
  double momentum = 0.1;
};

inline bool uses_batch_statistics(BnMode mode) {
  return mode == BnMode::kTrain || mode == BnMode::kTrainFrozen || mode == BnMode::kEvalAdaptive;
}

/// Biased (divide by N) column mean and variance of an N x C matrix.
inline BnStatistics column_moments(const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  BnStatistics s{Tensor({1, c}, 0.0), Tensor({1, c}, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) s.mean[j] += x[i * c + j];
  for (std::size_t j = 0; j < c; ++j) s.mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - s.mean[j];
      s.var[j] += d * d;
    }
  for (std::size_t j = 0; j < c; ++j) s.var[j] /= static_cast<double>(n);
  return s;
}

/// stats <- (1 - m) * stats + m * batch
inline void momentum_update(BnStatistics& stats, const BnStatistics& batch, double m) {
  for (std::size_t j = 0; j < stats.mean.size(); ++j) {
    stats.mean[j] = (1.0 - m) * stats.mean[j] + m * batch.mean[j];
    stats.var[j] = (1.0 - m) * stats.var[j] + m * batch.var[j];
  }
}

/**
 * y = gamma * (x - mu) / sqrt(var + eps) + beta over an N x C batch.
 *
 * In the batch-statistics modes the normalization is built from recorded
 * operations, so gradients (of any order) flow through mu and var.
 */
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BnStatistics* stats, BnMode mode,
                      const BnSettings& settings = {}) {
  detail::require_matrix(x, "batch_norm");
  const std::size_t n = x.value().rows(), c = x.value().cols();
  const Tensor::Shape row_shape{1, c};
  if (gamma.shape() != row_shape || beta.shape() != row_shape) {
    throw DimensionError("batch_norm: affine parameters must be " + Tensor::shape_string(row_shape));
  }
  if (uses_batch_statistics(mode) && n < 2) {
    throw BatchSizeError("batch_norm needs at least 2 samples in a batch-statistics mode, got " +
                         std::to_string(n));
  }
  const bool needs_stats = mode != BnMode::kTrainFrozen;
  if (needs_stats && stats == nullptr) throw ContractError("batch_norm: mode requires statistics");
  if (needs_stats && (stats->mean.shape() != row_shape || stats->var.shape() != row_shape)) {
    throw DimensionError("batch_norm: statistics must be " + Tensor::shape_string(row_shape));
  }

  Var xhat;
  if (mode == BnMode::kTrain || mode == BnMode::kTrainFrozen) {
    const double inv_n = 1.0 / static_cast<double>(n);
    Var mean = scale(sum_rows(x), inv_n);
    Var centered = sub(x, broadcast_rows(mean, n));
    Var var = scale(sum_rows(mul(centered, centered)), inv_n);
    Var inv_std = pow_scalar(add_scalar(var, settings.eps), -0.5);
    xhat = mul(centered, broadcast_rows(inv_std, n));
    if (mode == BnMode::kTrain) {
      momentum_update(*stats, BnStatistics{mean.value(), var.value()}, settings.momentum);
    }
  } else {
    if (mode == BnMode::kEvalAdaptive) {
      momentum_update(*stats, column_moments(x.value()), settings.momentum);
    }
    Tensor shift({1, c});
    Tensor inv_std({1, c});
    for (std::size_t j = 0; j < c; ++j) {
      shift[j] = stats->mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats->var[j] + settings.eps);
    }
    xhat = mul(sub(x, broadcast_rows(constant(std::move(shift)), n)),
               broadcast_rows(constant(std::move(inv_std)), n));
  }
  return add(mul(xhat, broadcast_rows(gamma, n)), broadcast_rows(beta, n));
}

/// x W + b with x: N x in, W: in x out, b: 1 x out.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  Var y = matmul(x, weight);
  if (bias.shape() != Tensor::Shape{1, y.value().cols()}) {
    throw DimensionError("linear: bias must be 1 x " + std::to_string(y.value().cols()));
  }
  return add(y, broadcast_rows(bias, y.value().rows()));
}

/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), k = z.cols();
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (n == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  Tensor onehot({n, k}, 0.0);
  Tensor row_max({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw IndexError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(k) + ")");
    }
    onehot[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
    row_max[i] = *std::max_element(&z[i * k], &z[i * k] + k);
  }
  // log-sum-exp is shift invariant, so the max may be held constant.
  Var shifted = sub(logits, broadcast_cols(constant(std::move(row_max)), k));
  Var lse = log(sum_cols(exp(shifted)));
  Var log_prob = sub(shifted, broadcast_cols(lse, k));
  return scale(sum_all(mul(log_prob, constant(std::move(onehot)))), -1.0 / static_cast<double>(n));
}

/// (1/N) sum_i ||a_i - b_i||_1 over the rows of two N x K matrices.
inline Var l1_batch_distance(const Var& a, const Var& b) {
  detail::require_matrix(a, "l1_batch_distance");
  detail::require_same_shape(a, b, "l1_batch_distance");
  const std::size_t n = a.value().rows();
  if (n == 0) throw DimensionError("l1_batch_distance: empty batch");
  return scale(sum_all(abs(sub(a, b))), 1.0 / static_cast<double>(n));
}

}  // namespace l2gp

#endif  // L2GP_NN_OPS_HPP_
