#ifndef L2GP_ADAPT_HPP_
#define L2GP_ADAPT_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "l2gp/autodiff.hpp"
#include "l2gp/data.hpp"
#include "l2gp/error.hpp"
#include "l2gp/metrics.hpp"
#include "l2gp/model.hpp"
#include "l2gp/random.hpp"

namespace l2gp {

/// Target-domain BN statistics estimated from the test stream.
struct TtbnState {
  std::vector<BnStatistics> target;
  double momentum = 0.1;
  std::size_t batches_seen = 0;

  friend bool operator==(const TtbnState&, const TtbnState&) = default;
};

/// Starts the target estimate at the source running statistics.
inline TtbnState ttbn_reset(const DualHeadModel& model, double momentum = 0.1) {
  return TtbnState{model.bn, momentum, 0};
}

/**
 * Test-time batch normalization on one batch.
 *
 * Layer by layer, the batch statistics update the target estimate, which
 * then normalizes that same batch. Model weights are never modified.
 */
inline Tensor adapt_and_predict(const DualHeadModel& model, TtbnState& state, const Tensor& batch, int head) {
  if (batch.rank() != 2 || batch.rows() < 2) throw BatchSizeError("test-time adaptation needs a batch of at least 2");
  model.head(head);
  NoGradGuard no_grad;
  Var f = features(model, constant(batch), model.W, {BnMode::kEvalAdaptive, &state.target, state.momentum});
  ++state.batches_seen;
  return predict(model, head, f).value();
}

/// Logits under the stored statistics of `state` without updating them.
inline Tensor predict_with_statistics(const DualHeadModel& model, const std::vector<BnStatistics>& stats,
                                      const Tensor& batch, int head) {
  NoGradGuard no_grad;
  auto copy = stats;
  Var f = features(model, constant(batch), model.W, {BnMode::kEvalSource, &copy});
  return predict(model, head, f).value();
}

enum class EvalMode { kSourceStats, kTtbn };

inline std::string to_string(EvalMode m) { return m == EvalMode::kSourceStats ? "source-stats" : "ttbn"; }

struct EvalOptions {
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Unscored adaptation batches streamed (cycling through the seeded order)
  /// before the scored pass.
  std::size_t warmup_batches = 0;
  double momentum = 0.1;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t batches_seen = 0;
};

/**
 * Accuracy of head `head` on a labeled set.
 *
 * kSourceStats normalizes with the training running statistics and is
 * order independent. kTtbn streams the set in a seeded order through one
 * TTBN state; a trailing single sample is predicted with the current
 * estimate without updating it.
 */
inline EvalResult evaluate_detailed(const DualHeadModel& model, const Dataset& ds, EvalMode mode, int head,
                                    const EvalOptions& opts = {}) {
  if (ds.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  model.head(head);
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  if (mode == EvalMode::kSourceStats) {
    std::size_t correct = 0;
    const std::size_t chunk = 1024;
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t end = std::min(n, start + chunk);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      Batch b = make_batch(ds, rows);
      correct += count_correct(predict_with_statistics(model, model.bn, b.x, head), b.y);
    }
    return {static_cast<double>(correct) / static_cast<double>(n), 0};
  }

  if (opts.batch_size < 2) throw ConfigError("evaluation batch size must be at least 2");
  Rng rng(derive_seed(opts.seed, 7));
  rng.shuffle(order);
  TtbnState state = ttbn_reset(model, opts.momentum);
  const std::size_t bs = std::min(opts.batch_size, n);

  if (opts.warmup_batches > 0 && n >= 2) {
    std::size_t pos = 0;
    std::vector<std::size_t> rows(bs);
    for (std::size_t w = 0; w < opts.warmup_batches; ++w) {
      for (auto& r : rows) {
        r = order[pos];
        pos = (pos + 1) % n;
      }
      adapt_and_predict(model, state, make_batch(ds, rows).x, head);
    }
  }

  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t end = std::min(n, start + bs);
    std::span<const std::size_t> rows(order.data() + start, end - start);
    Batch b = make_batch(ds, rows);
    const Tensor logits = rows.size() >= 2 ? adapt_and_predict(model, state, b.x, head)
                                           : predict_with_statistics(model, state.target, b.x, head);
    correct += count_correct(logits, b.y);
  }
  return {static_cast<double>(correct) / static_cast<double>(n), state.batches_seen};
}

inline double evaluate(const DualHeadModel& model, const Dataset& ds, EvalMode mode, int head,
                       const EvalOptions& opts = {}) {
  return evaluate_detailed(model, ds, mode, head, opts).accuracy;
}

}  // namespace l2gp

#endif  // L2GP_ADAPT_HPP_
