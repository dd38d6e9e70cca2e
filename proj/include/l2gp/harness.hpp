#ifndef L2GP_HARNESS_HPP_
#define L2GP_HARNESS_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "l2gp/adapt.hpp"
#include "l2gp/checkpoint.hpp"
#include "l2gp/config.hpp"
#include "l2gp/data.hpp"
#include "l2gp/gradcheck.hpp"
#include "l2gp/trainer.hpp"

namespace l2gp {

namespace fs = std::filesystem;

/**
 * Runs f(0) .. f(n-1) on up to `jobs` threads. Results must be written to
 * per-index slots; the first failure by index is rethrown after all finish.
 */
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Datasets {
  SourceSplits source;
  Dataset target;
};

inline Datasets make_datasets(const ExperimentConfig& cfg) {
  return {gen_source(cfg.data), gen_target(cfg.data, cfg.shift)};
}

struct EvalRecord {
  std::string split;
  EvalMode mode = EvalMode::kSourceStats;
  int head = 1;
  double accuracy = 0.0;
  std::size_t batches_seen = 0;

  std::string key() const { return split + "." + to_string(mode) + ".h" + std::to_string(head); }
};

/// One trained (training-variant, seed) pair.
struct TrainedJob {
  Variant variant = Variant::kL2gp;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  int diverged_epoch = -1;
  std::vector<EpochMetrics> history;
  std::optional<TrainResult> result;
};

inline TrainedJob train_job(const ExperimentConfig& cfg, const Datasets& data, Variant v, std::uint64_t seed) {
  TrainedJob job;
  job.variant = v;
  job.seed = seed;
  try {
    TrainResult r = train(cfg.train_config(v, seed), cfg.model_spec(seed), data.source.train, data.source.val);
    job.history = r.history;
    job.result = std::move(r);
  } catch (const TrainingDiverged& e) {
    job.diverged = true;
    job.error = e.what();
    job.diverged_epoch = e.epoch;
    job.history = e.history;
  }
  return job;
}

/// Heads scored for a variant: C is the second head, single-head variants the first.
inline std::vector<int> evaluation_heads(Variant v, const ExperimentConfig& cfg) {
  if (v == Variant::kAblationC) return {2};
  if (!uses_second_head(v)) return {1};
  return cfg.eval.heads;
}

inline std::vector<EvalRecord> evaluate_job(const ExperimentConfig& cfg, const Datasets& data,
                                            const DualHeadModel& model, Variant v, std::uint64_t seed) {
  EvalOptions opts;
  opts.batch_size = cfg.eval.batch_size;
  opts.seed = seed;
  opts.warmup_batches = cfg.eval.warmup_batches;
  opts.momentum = cfg.eval.momentum;
  const std::pair<const char*, const Dataset*> splits[] = {
      {"val", &data.source.val}, {"test-source", &data.source.test}, {"test-target", &data.target}};
  std::vector<EvalRecord> out;
  for (const auto& [name, ds] : splits) {
    for (EvalMode mode : cfg.eval.modes) {
      for (int head : evaluation_heads(v, cfg)) {
        const EvalResult r = evaluate_detailed(model, *ds, mode, head, opts);
        out.push_back({name, mode, head, r.accuracy, r.batches_seen});
      }
    }
  }
  return out;
}

struct VariantSeedResult {
  Variant variant = Variant::kL2gp;
  const TrainedJob* job = nullptr;
  std::vector<EvalRecord> evals;

  bool diverged() const { return job->diverged; }
  std::optional<double> metric(const std::string& key) const {
    for (const auto& e : evals) {
      if (e.key() == key) return e.accuracy;
    }
    return std::nullopt;
  }
};

struct ExperimentResult {
  std::string config_hash;
  std::vector<TrainedJob> jobs;
  std::vector<VariantSeedResult> cells;  // variants x seeds, config order; points into jobs

  ExperimentResult() = default;
  ExperimentResult(ExperimentResult&&) = default;
  ExperimentResult& operator=(ExperimentResult&&) = default;
  ExperimentResult(const ExperimentResult&) = delete;
  ExperimentResult& operator=(const ExperimentResult&) = delete;

  bool any_diverged() const {
    for (const auto& j : jobs) {
      if (j.diverged) return true;
    }
    return false;
  }
  const VariantSeedResult& at(Variant v, std::uint64_t seed) const {
    for (const auto& c : cells) {
      if (c.variant == v && c.job->seed == seed) return c;
    }
    throw ContractError("no result for " + to_string(v) + " seed " + std::to_string(seed));
  }
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and sample standard deviation (0 for a single value).
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

/// "71.30 +/- 1.20" in percent.
inline std::string format_percent(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f +/- %.2f", 100.0 * m.mean, 100.0 * m.std);
  return buf;
}

/**
 * Trains every distinct training variant once per seed (C shares the L2GP
 * runs) and evaluates each requested variant on val, source-test and
 * target-test.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Datasets& data, std::size_t jobs = 1) {
  cfg.validate();
  ExperimentResult res;
  res.config_hash = config_hash(cfg);

  std::vector<Variant> trained;
  for (Variant v : cfg.variants) {
    const Variant t = training_variant(v);
    if (std::find(trained.begin(), trained.end(), t) == trained.end()) trained.push_back(t);
  }
  res.jobs.resize(trained.size() * cfg.seeds.size());
  parallel_for(res.jobs.size(), jobs, [&](std::size_t i) {
    res.jobs[i] = train_job(cfg, data, trained[i / cfg.seeds.size()], cfg.seeds[i % cfg.seeds.size()]);
  });

  auto job_for = [&](Variant v, std::size_t s) -> const TrainedJob& {
    const auto t = std::find(trained.begin(), trained.end(), training_variant(v)) - trained.begin();
    return res.jobs[static_cast<std::size_t>(t) * cfg.seeds.size() + s];
  };
  res.cells.resize(cfg.variants.size() * cfg.seeds.size());
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    const Variant v = cfg.variants[i / cfg.seeds.size()];
    res.cells[i].variant = v;
    res.cells[i].job = &job_for(v, i % cfg.seeds.size());
  }
  parallel_for(res.cells.size(), jobs, [&](std::size_t i) {
    auto& cell = res.cells[i];
    if (!cell.job->diverged) {
      cell.evals = evaluate_job(cfg, data, cell.job->result->best_model, cell.variant, cell.job->seed);
    }
  });
  return res;
}

namespace detail {

inline std::string csv_real(double v) { return format_real(v); }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string layer_name(std::size_t l) { return "fc" + std::to_string(l) + ".weight"; }

}  // namespace detail

inline constexpr const char* kMetricsHeader =
    "epoch,split,variant,seed,L_c1,L_c2,L_sa,L_total,accuracy,lr,MAD,mode,head,batches_seen\n";

/// Per-epoch training trace of one job; holds no variant name so shared runs compare bytewise.
inline std::string training_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << "epoch,L_c1,L_c2,L_sa,L_total,val_accuracy,lr,MAD\n";
  for (const auto& e : history) {
    using detail::csv_real;
    os << e.epoch << ',' << csv_real(e.l_c1) << ',' << csv_real(e.l_c2) << ',' << csv_real(e.l_sa) << ','
       << csv_real(e.l_total) << ',' << csv_real(e.val_accuracy) << ',' << csv_real(e.lr) << ',' << csv_real(e.mad)
       << '\n';
  }
  return os.str();
}

inline std::string metrics_csv(const ExperimentResult& res) {
  using detail::csv_real;
  std::ostringstream os;
  os << kMetricsHeader;
  for (const auto& cell : res.cells) {
    const TrainedJob& job = *cell.job;
    const std::string v = to_string(cell.variant);
    const std::string s = std::to_string(job.seed);
    for (const auto& e : job.history) {
      os << e.epoch << ",train," << v << ',' << s << ',' << csv_real(e.l_c1) << ',' << csv_real(e.l_c2) << ','
         << csv_real(e.l_sa) << ',' << csv_real(e.l_total) << ",," << csv_real(e.lr) << ',' << csv_real(e.mad)
         << ",,,\n";
      os << e.epoch << ",val," << v << ',' << s << ",,,,," << csv_real(e.val_accuracy) << ",,,source-stats,1,\n";
    }
    if (job.diverged) {
      os << job.diverged_epoch << ",diverged," << v << ',' << s << ",,,,,,,,,,\n";
      continue;
    }
    for (const auto& e : cell.evals) {
      os << job.result->best_epoch << ',' << e.split << ',' << v << ',' << s << ",,,,," << csv_real(e.accuracy)
         << ",,," << to_string(e.mode) << ',' << e.head << ',' << e.batches_seen << '\n';
    }
  }
  return os.str();
}

inline std::string mad_trace_csv(const ExperimentResult& res) {
  std::ostringstream os;
  os << "variant,seed,epoch,layer,value\n";
  for (const auto& job : res.jobs) {
    for (const auto& e : job.history) {
      for (std::size_t l = 0; l < e.mad_per_layer.size(); ++l) {
        os << to_string(job.variant) << ',' << job.seed << ',' << e.epoch << ',' << detail::layer_name(l) << ','
           << detail::csv_real(e.mad_per_layer[l]) << '\n';
      }
    }
  }
  return os.str();
}

/// Per-seed values plus mean and std over the seeds that did not diverge.
inline Json summary_json(const ExperimentConfig& cfg, const ExperimentResult& res, const std::string& command) {
  Json root;
  root["command"] = command;
  root["config_hash"] = res.config_hash;
  root["config"] = config_to_json(cfg);
  Json variants = Json::object();
  for (Variant v : cfg.variants) {
    Json entry;
    entry["training_variant"] = to_string(training_variant(v));
    entry["evaluation_head"] = evaluation_head(v);
    Json per_seed = Json::array();
    std::map<std::string, std::vector<double>> pooled;
    std::vector<std::string> key_order;
    std::vector<std::vector<double>> l_sa_by_epoch;
    std::size_t diverged = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const auto& cell = res.at(v, seed);
      Json s;
      s["seed"] = seed;
      s["diverged"] = cell.diverged();
      if (cell.diverged()) {
        ++diverged;
        s["diverged_epoch"] = cell.job->diverged_epoch;
        per_seed.push_back(s);
        continue;
      }
      const TrainResult& r = *cell.job->result;
      s["best_epoch"] = r.best_epoch;
      s["best_val_accuracy"] = r.best_val_accuracy;
      s["final_mad"] = r.history.empty() ? 0.0 : r.history.back().mad;
      Json metrics = Json::object();
      auto put = [&](const std::string& k, double x) {
        metrics[k] = x;
        if (!pooled.count(k)) key_order.push_back(k);
        pooled[k].push_back(x);
      };
      for (const auto& e : cell.evals) put(e.key(), e.accuracy);
      put("final_mad", s["final_mad"].get<double>());
      s["metrics"] = metrics;
      per_seed.push_back(s);
      for (std::size_t e = 0; e < r.history.size(); ++e) {
        if (l_sa_by_epoch.size() <= e) l_sa_by_epoch.emplace_back();
        l_sa_by_epoch[e].push_back(r.history[e].l_sa);
      }
    }
    entry["per_seed"] = per_seed;
    entry["diverged_seeds"] = diverged;
    Json mean = Json::object(), stdev = Json::object();
    for (const auto& k : key_order) {
      const MeanStd m = mean_std(pooled[k]);
      mean[k] = m.mean;
      stdev[k] = m.std;
    }
    entry["mean"] = mean;
    entry["std"] = stdev;
    Json trace = Json::array();
    for (const auto& xs : l_sa_by_epoch) trace.push_back(mean_std(xs).mean);
    entry["l_sa_trace"] = trace;
    variants[to_string(v)] = entry;
  }
  root["variants"] = variants;
  return root;
}

/// Writes metrics.csv, summary.json, mad_trace.csv, traces/ and checkpoints/.
inline void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& res, const fs::path& out,
                             const std::string& command) {
  fs::create_directories(out / "traces");
  fs::create_directories(out / "checkpoints");
  detail::write_text(out / "config.json", config_to_json(cfg).dump(2) + "\n");
  detail::write_text(out / "metrics.csv", metrics_csv(res));
  detail::write_text(out / "mad_trace.csv", mad_trace_csv(res));
  detail::write_text(out / "summary.json", summary_json(cfg, res, command).dump(2) + "\n");
  for (const auto& cell : res.cells) {
    const std::string stem = to_string(cell.variant) + "_seed" + std::to_string(cell.job->seed);
    detail::write_text(out / "traces" / (stem + ".csv"), training_csv(cell.job->history));
  }
  for (const auto& job : res.jobs) {
    if (job.diverged) continue;
    const std::string stem = to_string(job.variant) + "_seed" + std::to_string(job.seed);
    save_checkpoint(job.result->best_model, out / "checkpoints" / (stem + ".ckpt"));
  }
}

inline const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> v{Variant::kErm,       Variant::kAblationA, Variant::kAblationB,
                                      Variant::kAblationC, Variant::kAblationD, Variant::kL2gp};
  return v;
}

/// Six variant rows by {val, test} x {source-stats, ttbn}, each "mean +/- std" in percent.
inline std::string ablation_csv(const ExperimentConfig& cfg, const ExperimentResult& res) {
  std::ostringstream os;
  os << "variant,val_source_stats,val_ttbn,test_source_stats,test_ttbn\n";
  for (Variant v : ablation_variants()) {
    os << to_string(v);
    const std::string head = ".h" + std::to_string(evaluation_head(v));
    for (const char* key : {"val.source-stats", "val.ttbn", "test-target.source-stats", "test-target.ttbn"}) {
      std::vector<double> xs;
      for (std::uint64_t seed : cfg.seeds) {
        if (auto m = res.at(v, seed).metric(key + head)) xs.push_back(*m);
      }
      os << ',' << (xs.empty() ? std::string("diverged") : format_percent(mean_std(xs)));
    }
    os << '\n';
  }
  return os.str();
}

inline ExperimentConfig ablation_config(ExperimentConfig cfg) {
  cfg.variants = ablation_variants();
  cfg.eval.modes = {EvalMode::kSourceStats, EvalMode::kTtbn};
  return cfg;
}

inline ExperimentResult run_ablations(const ExperimentConfig& base, const Datasets& data, const fs::path& out,
                                      std::size_t jobs = 1) {
  const ExperimentConfig cfg = ablation_config(base);
  ExperimentResult res = run_experiment(cfg, data, jobs);
  write_experiment(cfg, res, out, "ablate");
  detail::write_text(out / "ablation.csv", ablation_csv(cfg, res));
  return res;
}

struct SweepCell {
  double lr_plus = 0.0;
  double alpha = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> target_ttbn;
  std::vector<double> target_source_stats;
  std::size_t diverged = 0;

  bool flagged() const { return diverged > 0; }
};

struct SweepResult {
  std::vector<SweepCell> cells;  // lr_plus major, alpha minor

  const SweepCell& at(double lr_plus, double alpha) const {
    for (const auto& c : cells) {
      if (c.lr_plus == lr_plus && c.alpha == alpha) return c;
    }
    throw ContractError("no sweep cell for the requested (lr_plus, alpha)");
  }
};

/// L2GP over the lr_plus x alpha grid; a cell with any diverged seed is flagged.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const Datasets& data, std::size_t jobs = 1) {
  cfg.validate();
  const auto& g = cfg.sweep;
  const std::size_t n_cells = g.lr_plus.size() * g.alpha.size();
  const std::size_t n_seeds = cfg.seeds.size();
  struct Slot {
    bool diverged = false;
    double ttbn = 0.0;
    double source = 0.0;
  };
  std::vector<Slot> slots(n_cells * n_seeds);
  parallel_for(slots.size(), jobs, [&](std::size_t i) {
    const std::size_t cell = i / n_seeds;
    ExperimentConfig c = cfg;
    c.train.lr_plus = g.lr_plus[cell / g.alpha.size()];
    c.train.alpha = g.alpha[cell % g.alpha.size()];
    const std::uint64_t seed = cfg.seeds[i % n_seeds];
    const TrainedJob job = train_job(c, data, Variant::kL2gp, seed);
    if (job.diverged) {
      slots[i].diverged = true;
      return;
    }
    EvalOptions opts;
    opts.batch_size = cfg.eval.batch_size;
    opts.seed = seed;
    opts.warmup_batches = cfg.eval.warmup_batches;
    opts.momentum = cfg.eval.momentum;
    const auto& model = job.result->best_model;
    slots[i].ttbn = evaluate(model, data.target, EvalMode::kTtbn, 1, opts);
    slots[i].source = evaluate(model, data.target, EvalMode::kSourceStats, 1, opts);
  });
  SweepResult res;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    SweepCell sc;
    sc.lr_plus = g.lr_plus[cell / g.alpha.size()];
    sc.alpha = g.alpha[cell % g.alpha.size()];
    sc.seeds = cfg.seeds;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const Slot& slot = slots[cell * n_seeds + s];
      if (slot.diverged) {
        ++sc.diverged;
        continue;
      }
      sc.target_ttbn.push_back(slot.ttbn);
      sc.target_source_stats.push_back(slot.source);
    }
    res.cells.push_back(std::move(sc));
  }
  return res;
}

/// Rows lr_plus, columns alpha; "diverged" or mean +/- std target accuracy (TTBN, head 1).
inline std::string grid_csv(const ExperimentConfig& cfg, const SweepResult& res) {
  std::ostringstream os;
  os << "lr_plus\\alpha";
  for (double a : cfg.sweep.alpha) os << ',' << detail::csv_real(a);
  os << '\n';
  for (double lp : cfg.sweep.lr_plus) {
    os << detail::csv_real(lp);
    for (double a : cfg.sweep.alpha) {
      const SweepCell& c = res.at(lp, a);
      os << ',' << (c.flagged() ? std::string("diverged") : format_percent(mean_std(c.target_ttbn)));
    }
    os << '\n';
  }
  return os.str();
}

inline std::string sweep_cells_csv(const SweepResult& res) {
  std::ostringstream os;
  os << "lr_plus,alpha,seeds,diverged_seeds,status,target_ttbn_mean,target_ttbn_std,target_source_stats_mean,"
        "target_source_stats_std\n";
  for (const auto& c : res.cells) {
    const MeanStd t = mean_std(c.target_ttbn), s = mean_std(c.target_source_stats);
    os << detail::csv_real(c.lr_plus) << ',' << detail::csv_real(c.alpha) << ',' << c.seeds.size() << ','
       << c.diverged << ',' << (c.flagged() ? "diverged" : "ok") << ',';
    if (t.n == 0) {
      os << ",,,\n";
    } else {
      os << detail::csv_real(t.mean) << ',' << detail::csv_real(t.std) << ',' << detail::csv_real(s.mean) << ','
         << detail::csv_real(s.std) << '\n';
    }
  }
  return os.str();
}

inline Json sweep_summary_json(const ExperimentConfig& cfg, const SweepResult& res) {
  Json root;
  root["command"] = "sweep";
  root["config_hash"] = config_hash(cfg);
  root["config"] = config_to_json(cfg);
  Json cells = Json::array();
  for (const auto& c : res.cells) {
    Json j;
    j["lr_plus"] = c.lr_plus;
    j["alpha"] = c.alpha;
    j["diverged_seeds"] = c.diverged;
    j["flagged"] = c.flagged();
    j["target_ttbn"] = c.target_ttbn;
    j["target_source_stats"] = c.target_source_stats;
    if (!c.target_ttbn.empty()) {
      const MeanStd m = mean_std(c.target_ttbn);
      j["target_ttbn_mean"] = m.mean;
      j["target_ttbn_std"] = m.std;
    }
    cells.push_back(j);
  }
  root["cells"] = cells;
  return root;
}

inline void write_sweep(const ExperimentConfig& cfg, const SweepResult& res, const fs::path& out) {
  fs::create_directories(out);
  detail::write_text(out / "config.json", config_to_json(cfg).dump(2) + "\n");
  detail::write_text(out / "grid.csv", grid_csv(cfg, res));
  detail::write_text(out / "cells.csv", sweep_cells_csv(res));
  detail::write_text(out / "summary.json", sweep_summary_json(cfg, res).dump(2) + "\n");
}

/// train.csv, val.csv, test_source.csv, test_target.csv and manifest.json.
inline void write_datasets(const ExperimentConfig& cfg, const Datasets& data, const fs::path& out) {
  fs::create_directories(out);
  const std::pair<const char*, const Dataset*> files[] = {{"train.csv", &data.source.train},
                                                         {"val.csv", &data.source.val},
                                                         {"test_source.csv", &data.source.test},
                                                         {"test_target.csv", &data.target}};
  Json manifest;
  manifest["source_hash"] = spec_hash(cfg.data);
  manifest["target_hash"] = spec_hash(cfg.data, cfg.shift);
  const Json full = config_to_json(cfg);
  manifest["data"] = full["data"];
  manifest["shift"] = full["shift"];
  const auto [scale, offset] = cfg.shift.resolve(cfg.data.dim());
  manifest["resolved_shift"] = {{"scale", scale}, {"offset", offset}};
  Json entries = Json::array();
  for (const auto& [name, ds] : files) {
    save_dataset(*ds, out / name);
    entries.push_back({{"file", name}, {"split", ds->split}, {"rows", ds->size()}, {"provenance", ds->provenance}});
  }
  manifest["files"] = entries;
  detail::write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

struct GradCheckReport {
  std::vector<std::pair<std::uint64_t, GradCheckComponent>> rows;
  bool passed() const {
    for (const auto& [_, c] : rows) {
      if (!c.passed()) return false;
    }
    return !rows.empty();
  }
};

/**
 * Runs the gradient-check suite per seed. `extend_graph` false skips the
 * second-order components; `fault_scale` != 1 corrupts the ReLU backward rule.
 */
inline GradCheckReport run_gradcheck(const std::vector<std::uint64_t>& seeds, bool extend_graph,
                                     double fault_scale = 1.0) {
  GradCheckReport rep;
  FaultInjectionGuard fault(fault_scale);
  for (std::uint64_t seed : seeds) {
    for (auto& c : run_gradcheck_suite(seed)) {
      if (!extend_graph && c.threshold > 1e-5) continue;
      rep.rows.emplace_back(seed, std::move(c));
    }
  }
  return rep;
}

inline std::string gradcheck_text(const GradCheckReport& rep) {
  std::ostringstream os;
  char buf[160];
  for (const auto& [seed, c] : rep.rows) {
    std::snprintf(buf, sizeof buf, "seed %llu  %-30s max_rel_error %.3e  threshold %.0e  %s\n",
                  static_cast<unsigned long long>(seed), c.name.c_str(), c.max_rel_error, c.threshold,
                  c.passed() ? "PASS" : "FAIL");
    os << buf;
  }
  os << (rep.passed() ? "gradcheck: all components passed\n" : "gradcheck: FAILED\n");
  return os.str();
}

inline Json gradcheck_json(const GradCheckReport& rep) {
  Json rows = Json::array();
  for (const auto& [seed, c] : rep.rows) {
    rows.push_back({{"seed", seed},
                    {"component", c.name},
                    {"max_rel_error", c.max_rel_error},
                    {"threshold", c.threshold},
                    {"coordinates", c.coordinates},
                    {"passed", c.passed()}});
  }
  return {{"passed", rep.passed()}, {"components", rows}};
}

}  // namespace l2gp

#endif  // L2GP_HARNESS_HPP_
