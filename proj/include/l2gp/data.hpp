#ifndef L2GP_DATA_HPP_
#define L2GP_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "l2gp/error.hpp"
#include "l2gp/random.hpp"
#include "l2gp/tensor.hpp"

namespace l2gp {

/**
 * Source-domain generator parameters.
 *
 * Two core dimensions carry an XOR pattern (not linearly separable); the
 * remaining core dimensions are noise. Every shortcut dimension is
 * (2y - 1) * margin plus noise, a linearly separable cue.
 */
struct ShortcutSpec {
  int n_classes = 2;
  std::size_t d_core = 8;
  std::size_t d_shortcut = 2;
  double shortcut_margin = 3.0;
  double core_noise = 0.5;
  std::size_t n_train = 8192;
  std::size_t n_val = 1024;
  std::size_t n_test = 2048;
  std::uint64_t seed = 1;

  std::size_t dim() const { return d_core + d_shortcut; }

  void validate() const {
    if (n_classes != 2) throw ConfigError("data.n_classes must be 2");
    if (d_core < 2) throw ConfigError("data.d_core must be at least 2 (the XOR pair)");
    if (d_shortcut < 1) throw ConfigError("data.d_shortcut must be positive");
    if (!(shortcut_margin > 0.0)) throw ConfigError("data.shortcut_margin must be > 0");
    if (!(core_noise >= 0.0)) throw ConfigError("data.core_noise must be >= 0");
    if (n_train == 0 || n_val == 0 || n_test == 0) throw ConfigError("data.n_train/n_val/n_test must be positive");
  }
};

/// Target-domain shift: shortcut decorrelation plus a per-feature affine map.
struct ShiftSpec {
  /// 1 keeps the source behaviour, 0 decorrelates, -1 inverts.
  double correlation = 1.0;
  /// Per-feature scale; drawn from U[0.5, 2] when absent.
  std::optional<std::vector<double>> scale;
  /// Per-feature offset; drawn from U[-1, 1] when absent.
  std::optional<std::vector<double>> offset;
  std::uint64_t seed = 2;

  static ShiftSpec identity(std::size_t dim) {
    ShiftSpec s;
    s.scale = std::vector<double>(dim, 1.0);
    s.offset = std::vector<double>(dim, 0.0);
    return s;
  }

  void validate(std::size_t dim) const {
    if (!(correlation >= -1.0 && correlation <= 1.0)) throw ConfigError("shift.correlation must be in [-1, 1]");
    if (scale) {
      if (scale->size() != dim) throw ConfigError("shift.scale must have one entry per feature");
      for (double s : *scale) {
        if (!(s > 0.0)) throw ConfigError("shift.scale entries must be > 0");
      }
    }
    if (offset && offset->size() != dim) throw ConfigError("shift.offset must have one entry per feature");
  }

  /// Scale and offset, drawing any that are absent from the shift seed.
  std::pair<std::vector<double>, std::vector<double>> resolve(std::size_t dim) const {
    Rng rng(derive_seed(seed, 10));
    std::vector<double> s(dim), o(dim);
    for (auto& v : s) v = rng.uniform(0.5, 2.0);
    for (auto& v : o) v = rng.uniform(-1.0, 1.0);
    return {scale.value_or(s), offset.value_or(o)};
  }
};

struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::string split;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }
};

struct Batch {
  Tensor x;
  std::vector<int> y;
};

struct SourceSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline Dataset sample(const ShortcutSpec& spec, std::size_t n, std::uint64_t seed, std::string split) {
  Rng rng(seed);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  rng.shuffle(labels);

  const std::size_t d = spec.dim();
  Tensor x({n, d});
  const double sigma = spec.core_noise;
  for (std::size_t i = 0; i < n; ++i) {
    const double sign_y = labels[i] == 1 ? 1.0 : -1.0;
    const double s1 = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double s2 = s1 * sign_y;
    double* row = &x[i * d];
    row[0] = s1 + sigma * rng.normal();
    row[1] = s2 + sigma * rng.normal();
    for (std::size_t j = 2; j < spec.d_core; ++j) row[j] = sigma * rng.normal();
    for (std::size_t j = 0; j < spec.d_shortcut; ++j) {
      row[spec.d_core + j] = sign_y * spec.shortcut_margin + sigma * rng.normal();
    }
  }
  return Dataset{std::move(x), std::move(labels), std::move(split), ""};
}

}  // namespace detail

/// Stable identifier of a generator configuration.
inline std::string spec_hash(const ShortcutSpec& spec) {
  std::ostringstream os;
  os << "shortcut;" << spec.n_classes << ';' << spec.d_core << ';' << spec.d_shortcut << ';'
     << detail::format_real(spec.shortcut_margin) << ';' << detail::format_real(spec.core_noise) << ';'
     << spec.n_train << ';' << spec.n_val << ';' << spec.n_test << ';' << spec.seed;
  return detail::hex64(detail::fnv1a(os.str()));
}

inline std::string spec_hash(const ShortcutSpec& spec, const ShiftSpec& shift) {
  const auto [s, o] = shift.resolve(spec.dim());
  std::ostringstream os;
  os << spec_hash(spec) << ";shift;" << detail::format_real(shift.correlation) << ';' << shift.seed;
  for (double v : s) os << ';' << detail::format_real(v);
  for (double v : o) os << ';' << detail::format_real(v);
  return detail::hex64(detail::fnv1a(os.str()));
}

/// Train, validation and source-test splits, deterministic in spec.seed.
inline SourceSplits gen_source(const ShortcutSpec& spec) {
  spec.validate();
  const std::string hash = spec_hash(spec);
  SourceSplits out{detail::sample(spec, spec.n_train, derive_seed(spec.seed, 1), "train"),
                   detail::sample(spec, spec.n_val, derive_seed(spec.seed, 2), "val"),
                   detail::sample(spec, spec.n_test, derive_seed(spec.seed, 3), "test-source")};
  out.train.provenance = out.val.provenance = out.test.provenance = hash;
  return out;
}

/**
 * Shifted test split. Draws the same base samples as the source-test split,
 * flips the shortcut block of each sample with probability
 * (1 - correlation) / 2, then applies x <- scale * x + offset per feature.
 */
inline Dataset gen_target(const ShortcutSpec& spec, const ShiftSpec& shift) {
  spec.validate();
  shift.validate(spec.dim());
  Dataset ds = detail::sample(spec, spec.n_test, derive_seed(spec.seed, 3), "test-target");
  ds.provenance = spec_hash(spec, shift);
  const auto [scale, offset] = shift.resolve(spec.dim());
  Rng flips(derive_seed(shift.seed, 11));
  const double p_flip = (1.0 - shift.correlation) / 2.0;
  const std::size_t d = spec.dim();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double* row = &ds.features[i * d];
    if (flips.bernoulli(p_flip)) {
      for (std::size_t j = spec.d_core; j < d; ++j) row[j] = -row[j];
    }
    for (std::size_t j = 0; j < d; ++j) row[j] = scale[j] * row[j] + offset[j];
  }
  return ds;
}

/// Writes `f0,...,f{d-1},label` rows at full double precision.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write dataset " + path.string());
  const std::size_t d = ds.dim();
  for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << detail::format_real(ds.features[i * d + j]) << ',';
    out << ds.labels[i] << '\n';
  }
}

inline Dataset load_dataset(const std::filesystem::path& path, std::string split = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read dataset " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", lineno);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.back() != "label") throw ParseError("header must end with 'label'", lineno);
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "f" + std::to_string(j)) throw ParseError("unexpected header column '" + header[j] + "'", lineno);
  }

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw ParseError("empty row", lineno);
    std::size_t field = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      char* end = nullptr;
      if (field < d) {
        const double v = std::strtod(cell.c_str(), &end);
        if (cell.empty() || end != cell.c_str() + cell.size()) throw ParseError("bad value '" + cell + "'", lineno);
        values.push_back(v);
      } else if (field == d) {
        const long v = std::strtol(cell.c_str(), &end, 10);
        if (cell.empty() || end != cell.c_str() + cell.size() || v < 0) {
          throw ParseError("bad label '" + cell + "'", lineno);
        }
        labels.push_back(static_cast<int>(v));
      }
      ++field;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (field != d + 1) {
      throw ParseError("expected " + std::to_string(d + 1) + " fields, got " + std::to_string(field), lineno);
    }
  }
  Tensor x({labels.size(), d}, std::move(values));
  if (!x.all_finite()) throw ParseError("non-finite feature value", lineno);
  return Dataset{std::move(x), std::move(labels), std::move(split), ""};
}

/// Copies the selected rows into a batch.
inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows) {
  const std::size_t d = ds.dim();
  Batch b{Tensor({rows.size(), d}), std::vector<int>(rows.size())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) b.x[i * d + j] = ds.features[rows[i] * d + j];
    b.y[i] = ds.labels[rows[i]];
  }
  return b;
}

/**
 * Seeded per-epoch shuffling into steps of one or two disjoint batches.
 *
 * The trailing partial batch is dropped so every batch has the same size.
 */
class BatchSampler {
 public:
  using Step = std::vector<std::vector<std::size_t>>;

  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t per_step)
      : n_(n), batch_size_(batch_size), seed_(seed), per_step_(per_step) {
    if (batch_size < 2) throw ConfigError("batch size must be at least 2");
    if (batch_size > n) {
      throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(n));
    }
    if (per_step != 1 && per_step != 2) throw ContractError("batches per step must be 1 or 2");
  }

  std::size_t steps_per_epoch() const { return n_ / (batch_size_ * per_step_); }

  std::vector<Step> epoch(std::size_t e) const {
    std::vector<std::size_t> order(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
    Rng rng(derive_seed(seed_, 1000 + e));
    rng.shuffle(order);
    std::vector<Step> steps(steps_per_epoch());
    std::size_t pos = 0;
    for (auto& step : steps) {
      for (std::size_t k = 0; k < per_step_; ++k) {
        step.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + batch_size_));
        pos += batch_size_;
      }
    }
    return steps;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t per_step_;
};

}  // namespace l2gp

#endif  // L2GP_DATA_HPP_
