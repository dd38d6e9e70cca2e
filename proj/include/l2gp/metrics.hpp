#ifndef L2GP_METRICS_HPP_
#define L2GP_METRICS_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "l2gp/error.hpp"
#include "l2gp/model.hpp"
#include "l2gp/tensor.hpp"

namespace l2gp {

/// Index of the row maximum; ties go to the lowest index.
inline std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t k = logits.cols();
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (logits[row * k + j] > logits[row * k + best]) best = j;
  }
  return best;
}

/// Number of rows whose argmax equals the label.
inline std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw DimensionError("accuracy: logits rows and labels disagree");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int>(argmax_row(logits, i)) == labels[i]) ++correct;
  }
  return correct;
}

inline double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (labels.empty()) throw ConfigError("accuracy of an empty set");
  return static_cast<double>(count_correct(logits, labels)) / static_cast<double>(labels.size());
}

/**
 * Mean absolute difference between unit-normalized rows.
 *
 * Each row is one unit's incoming weight vector. Rows are scaled to unit L2
 * norm (all-zero rows stay zero), then (1/N^2) * sum_{i,j} ||r_i - r_j||_1
 * over all ordered pairs.
 */
inline double mad_layer(const Tensor& weights) {
  if (weights.rank() != 2 || weights.rows() == 0) throw DimensionError("mad_layer needs an N x fan_in matrix, N >= 1");
  const std::size_t n = weights.rows(), d = weights.cols();
  Tensor unit = weights;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += unit[i * d + j] * unit[i * d + j];
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < d; ++j) unit[i * d + j] /= norm;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += std::fabs(unit[i * d + j] - unit[k * d + j]);
      total += dist;
    }
  }
  return total / static_cast<double>(n * n);
}

struct MadReport {
  int epoch = -1;
  std::vector<std::string> layers;
  std::vector<double> per_layer;
  double total = 0.0;
};

/// MAD summed over the linear layers of the features extractor.
inline MadReport mad_model(const DualHeadModel& model, int epoch = -1) {
  MadReport r;
  r.epoch = epoch;
  for (const auto& name : model.linear_weight_names()) {
    // Stored as fan_in x units; MAD wants one row per unit.
    const Tensor& w = model.W.at(name).value();
    Tensor rows({w.cols(), w.rows()});
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) rows[j * w.rows() + i] = w[i * w.cols() + j];
    r.layers.push_back(name);
    r.per_layer.push_back(mad_layer(rows));
  }
  for (double v : r.per_layer) r.total += v;
  return r;
}

}  // namespace l2gp

#endif  // L2GP_METRICS_HPP_
