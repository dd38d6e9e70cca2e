// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "l2gp/l2gp.hpp"

namespace {

using namespace l2gp;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<int, bool>> g_results;

void criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s criterion %d (%s) [%.1f s]: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
              o.detail.c_str());
  std::fflush(stdout);
  g_results.emplace_back(id, o.pass);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string dir_contents(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + read_file(f) + "\n";
  return out;
}

// ---------------------------------------------------------------- 1

Outcome gradient_correctness() {
  const GradCheckReport rep = run_gradcheck({0, 1, 2}, true);
  double first = 0.0, second = 0.0;
  bool ok = !rep.rows.empty();
  for (const auto& [seed, c] : rep.rows) {
    const bool second_order = c.threshold > 1e-5;
    (second_order ? second : first) = std::max(second_order ? second : first, c.max_rel_error);
    ok = ok && c.max_rel_error < (second_order ? 1e-4 : 1e-5);
  }
  const std::size_t params = build_model(gradcheck_model_spec(0)).W.count() +
                             2 * build_model(gradcheck_model_spec(0)).H1.count();
  ok = ok && params <= 200;
  return {ok, fmt("first-order max %.2e", first) + fmt(", extend-graph max %.2e", second) + ", " +
                  std::to_string(params) + " parameters"};
}

// ---------------------------------------------------------------- 2, 3

struct StepRun {
  std::vector<std::vector<Tensor>> trajectory;
  std::vector<StepReport> reports;
};

StepRun run_steps(const SourceSplits& data, const ModelSpec& spec, TrainConfig cfg, int steps) {
  DualHeadModel m = build_model(spec);
  const BatchSampler sampler(data.train.size(), cfg.batch_size, derive_seed(cfg.seed, 99), 2);
  OptimizerState opt;
  opt.lr = cfg.lr;
  StepRun out;
  for (std::size_t e = 0; static_cast<int>(out.reports.size()) < steps; ++e) {
    for (const auto& step : sampler.epoch(e)) {
      if (static_cast<int>(out.reports.size()) == steps) break;
      out.reports.push_back(l2gp_step(m, make_batch(data.train, step[0]), make_batch(data.train, step[1]), cfg, opt));
      std::vector<Tensor> snap;
      for (const auto& v : trainable(m, Variant::kL2gp)) snap.push_back(v.value());
      for (const auto& s : m.bn) {
        snap.push_back(s.mean);
        snap.push_back(s.var);
      }
      out.trajectory.push_back(std::move(snap));
    }
  }
  return out;
}

Outcome collapse_identities(const SourceSplits& data, const ExperimentConfig& base) {
  const ModelSpec spec = base.model_spec(0);
  const TrainConfig a = base.train_config(Variant::kAblationA, 0);
  TrainConfig zero_step = base.train_config(Variant::kL2gp, 0);
  zero_step.lr_plus = 0.0;
  TrainConfig zero_alpha = base.train_config(Variant::kL2gp, 0);
  zero_alpha.alpha = 0.0;
  const StepRun ra = run_steps(data, spec, a, 100);
  const StepRun r0 = run_steps(data, spec, zero_step, 100);
  const StepRun rz = run_steps(data, spec, zero_alpha, 100);
  int diff_a = 0, diff_b = 0, nonzero_sa = 0;
  for (std::size_t s = 0; s < 100; ++s) {
    diff_a += !(ra.trajectory[s] == r0.trajectory[s]);
    diff_b += !(ra.trajectory[s] == rz.trajectory[s]);
    nonzero_sa += r0.reports[s].l_sa != 0.0;
  }
  const bool ok = diff_a == 0 && diff_b == 0 && nonzero_sa == 0 && ra.trajectory.size() == 100;
  return {ok, "steps differing: lr_plus=0 " + std::to_string(diff_a) + ", alpha=0 " + std::to_string(diff_b) +
                  "; nonzero L_sa " + std::to_string(nonzero_sa)};
}

Outcome loss_identity(const SourceSplits& data, const ExperimentConfig& base) {
  double worst = 0.0;
  std::size_t checked = 0;
  for (Variant v : {Variant::kL2gp, Variant::kAblationA, Variant::kAblationB, Variant::kAblationD}) {
    for (bool extend : {false, true}) {
      if (extend && v != Variant::kL2gp) continue;
      TrainConfig c = base.train_config(v, 1);
      c.extend_graph = extend;
      for (const auto& r : run_steps(data, base.model_spec(1), c, 100).reports) {
        worst = std::max(worst, std::fabs(r.l_total - (0.5 * (r.l_c1 + r.l_c2) + c.alpha * r.l_sa)));
        ++checked;
      }
    }
  }
  return {worst < 1e-12, fmt("max deviation %.3e", worst) + " over " + std::to_string(checked) + " steps"};
}

// ---------------------------------------------------------------- 4-7

struct MainRun {
  ExperimentConfig cfg;
  Datasets data;
  ExperimentResult res;
};

Outcome affine_recovery(const MainRun& run) {
  ShiftSpec shift = run.cfg.shift;
  shift.correlation = 1.0;
  const Dataset target = gen_target(run.cfg.data, shift);
  std::vector<double> src, ss, tt;
  std::size_t min_batches = SIZE_MAX;
  for (std::uint64_t seed : run.cfg.seeds) {
    const auto& job = *run.res.at(Variant::kL2gp, seed).job;
    if (job.diverged) return {false, "L2GP seed " + std::to_string(seed) + " diverged"};
    const DualHeadModel& m = job.result->best_model;
    EvalOptions o;
    o.batch_size = 64;
    o.seed = seed;
    o.warmup_batches = 30;
    src.push_back(evaluate(m, run.data.source.test, EvalMode::kSourceStats, 1, o));
    ss.push_back(evaluate(m, target, EvalMode::kSourceStats, 1, o));
    const EvalResult r = evaluate_detailed(m, target, EvalMode::kTtbn, 1, o);
    tt.push_back(r.accuracy);
    min_batches = std::min(min_batches, r.batches_seen);
  }
  const double s = mean_std(src).mean, d = mean_std(ss).mean, t = mean_std(tt).mean;
  const bool drop = s - d >= 0.10;
  const bool recover = std::fabs(s - t) <= 0.03 && min_batches >= 30;
  return {drop && recover, fmt("source-test %.2f%%", 100 * s) + fmt(", target source-stats %.2f%%", 100 * d) +
                               fmt(" (drop %.2f pts, need >= 10)", 100 * (s - d)) + fmt(", target TTBN %.2f%%", 100 * t) +
                               fmt(" (gap %.2f pts, need <= 3)", 100 * std::fabs(s - t)) + ", batches streamed >= " +
                               std::to_string(min_batches)};
}

std::vector<double> per_seed(const MainRun& run, Variant v, const std::string& key) {
  std::vector<double> xs;
  for (std::uint64_t seed : run.cfg.seeds) xs.push_back(run.res.at(v, seed).metric(key).value_or(std::nan("")));
  return xs;
}

Outcome method_ordering(const MainRun& run) {
  const auto l2gp = per_seed(run, Variant::kL2gp, "test-target.ttbn.h1");
  const auto erm = per_seed(run, Variant::kErm, "test-target.ttbn.h1");
  int wins = 0;
  for (std::size_t i = 0; i < l2gp.size(); ++i) wins += l2gp[i] > erm[i];
  const double ml = mean_std(l2gp).mean, me = mean_std(erm).mean;
  const bool ok = ml >= me + 0.02 && wins >= 4;
  return {ok, fmt("L2GP+TTBN %.2f%%", 100 * ml) + fmt(" vs ERM+TTBN %.2f%%", 100 * me) +
                  fmt(" (diff %.2f pts, need >= 2)", 100 * (ml - me)) + ", paired wins " + std::to_string(wins) +
                  "/5 (need >= 4)"};
}

Outcome diversity(const MainRun& run) {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : run.cfg.seeds) {
    const auto& a = *run.res.at(Variant::kL2gp, seed).job;
    const auto& b = *run.res.at(Variant::kErm, seed).job;
    if (a.diverged || b.diverged) return {false, "diverged run"};
    const double ml = a.history.back().mad, me = b.history.back().mad;
    wins += ml > me;
    detail += (detail.empty() ? "" : ", ") + fmt("%.4f", ml) + fmt(" vs %.4f", me);
  }
  return {wins >= 4, "final MAD L2GP vs ERM per seed: " + detail + "; L2GP higher on " + std::to_string(wins) +
                         "/5 (need >= 4)"};
}

Outcome ablation_structure(const MainRun& run, std::size_t jobs) {
  const double me = mean_std(per_seed(run, Variant::kErm, "test-target.ttbn.h1")).mean;
  const double ml = mean_std(per_seed(run, Variant::kL2gp, "test-target.ttbn.h1")).mean;
  const double ma = mean_std(per_seed(run, Variant::kAblationA, "test-target.ttbn.h1")).mean;
  const bool between = std::min(me, ml) < ma && ma < std::max(me, ml);

  // C trained in a run of its own must reproduce the L2GP training trace bytewise.
  ExperimentConfig c = run.cfg;
  c.variants = {Variant::kAblationC};
  const ExperimentResult rc = run_experiment(c, run.data, jobs);
  bool same_csv = true, head_only = true;
  for (std::uint64_t seed : run.cfg.seeds) {
    same_csv = same_csv && training_csv(rc.at(Variant::kAblationC, seed).job->history) ==
                               training_csv(run.res.at(Variant::kL2gp, seed).job->history);
    const auto& cell = rc.at(Variant::kAblationC, seed);
    for (const auto& e : cell.evals) head_only = head_only && e.head == 2;
    // Same model, second head.
    const DualHeadModel& m = run.res.at(Variant::kL2gp, seed).job->result->best_model;
    EvalOptions o;
    o.batch_size = run.cfg.eval.batch_size;
    o.seed = seed;
    o.warmup_batches = run.cfg.eval.warmup_batches;
    head_only = head_only && cell.metric("test-target.ttbn.h2") ==
                                 evaluate(m, run.data.target, EvalMode::kTtbn, 2, o);
  }
  return {between && same_csv && head_only,
          fmt("ERM %.2f%%", 100 * me) + fmt(", A %.2f%%", 100 * ma) + fmt(", L2GP %.2f%%", 100 * ml) +
              (between ? " (A strictly between)" : " (A not strictly between)") +
              (same_csv ? "; C training CSVs identical" : "; C training CSVs differ") +
              (head_only ? ", C scored on head 2 of the L2GP model" : ", C head mismatch")};
}

// ---------------------------------------------------------------- 8

Outcome sweep_harness(const ExperimentConfig& base, const Datasets& data, std::size_t jobs) {
  ExperimentConfig cfg = base;
  cfg.seeds = {0};
  cfg.train.epochs = 5;
  cfg.train.lr_drop_epoch = 4;
  cfg.sweep = SweepGrid{};
  const SweepResult res = run_sweep(cfg, data, jobs);
  bool complete = res.cells.size() == 36;
  std::size_t flagged = 0;
  for (const auto& c : res.cells) {
    if (c.flagged()) {
      ++flagged;
      continue;
    }
    complete = complete && c.target_ttbn.size() == 1 && std::isfinite(c.target_ttbn[0]);
  }
  const SweepCell& corner = res.at(100.0, 100.0);
  const double acc = corner.flagged() ? std::nan("") : mean_std(corner.target_ttbn).mean;
  const bool corner_ok = corner.flagged() || acc <= 0.55;
  std::cout << grid_csv(cfg, res);
  return {complete && corner_ok, std::to_string(res.cells.size()) + " cells, " + std::to_string(flagged) +
                                     " diverged; corner (100, 100) " +
                                     (corner.flagged() ? std::string("diverged") : fmt("%.2f%%", 100 * acc)) +
                                     " (need diverged or <= 55%)"};
}

// ---------------------------------------------------------------- 9

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.variants = {Variant::kErm, Variant::kL2gp, Variant::kAblationC};
  c.data.n_train = 512;
  c.data.n_val = 128;
  c.data.n_test = 256;
  c.hidden = {16};
  c.train.epochs = 3;
  c.train.lr_drop_epoch = 2;
  c.train.lr = 0.05;
  c.train.batch_size = 32;
  c.seeds = {0, 1};
  c.sweep.lr_plus = {0.1, 100};
  c.sweep.alpha = {1, 100};
  return c;
}

Outcome determinism(std::size_t jobs) {
  const fs::path root = fs::temp_directory_path() / "l2gp_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const ExperimentConfig cfg = small_config();
  std::ofstream(root / "cfg.json") << config_to_json(cfg).dump(2);
  std::vector<std::string> mismatched;
  std::size_t compared = 0;
#ifdef L2GP_CLI_PATH
  const std::string cli = L2GP_CLI_PATH;
  for (const std::string cmd : {"run", "ablate", "sweep", "gen-data", "gradcheck"}) {
    for (const char* rep : {"a", "b"}) {
      const fs::path out = root / (cmd + "_" + rep);
      // The second rerun uses a different job count; outputs must not depend on it.
      const std::string j = std::string(rep) == "a" ? "1" : std::to_string(std::max<std::size_t>(2, jobs));
      const std::string line = cli + " " + cmd + " --config " + (root / "cfg.json").string() + " --out " +
                               out.string() + " --seeds 0,1 --jobs " + j + " > /dev/null 2>&1";
      const int status = std::system(line.c_str());
      if (WEXITSTATUS(status) != 0) mismatched.push_back(cmd + " exited " + std::to_string(WEXITSTATUS(status)));
    }
    ++compared;
    if (dir_contents(root / (cmd + "_a")) != dir_contents(root / (cmd + "_b"))) mismatched.push_back(cmd);
  }
#else
  (void)jobs;
#endif
  // Library path as well.
  const Datasets data = make_datasets(cfg);
  for (const char* rep : {"lib_a", "lib_b"}) write_experiment(cfg, run_experiment(cfg, data, jobs), root / rep, "run");
  ++compared;
  for (const char* f : {"metrics.csv", "summary.json"}) {
    if (read_file(root / "lib_a" / f) != read_file(root / "lib_b" / f)) mismatched.push_back(std::string("lib ") + f);
  }
  std::string detail = std::to_string(compared) + " commands rerun";
  if (mismatched.empty()) return {true, detail + ", all outputs byte-identical"};
  for (const auto& m : mismatched) detail += "; mismatch: " + m;
  return {false, detail};
}

// ---------------------------------------------------------------- 10

Outcome mad_units() {
  const double ortho = mad_layer(Tensor::matrix({{1, 0}, {0, 1}}));
  const double same = mad_layer(Tensor::matrix({{0.3, -1.2, 2.0}, {0.3, -1.2, 2.0}, {0.3, -1.2, 2.0}}));
  Rng rng(5);
  Tensor w({8, 6});
  for (double& v : w.data()) v = rng.normal();
  Tensor scaled = w;
  for (std::size_t i = 0; i < 8; ++i) {
    const double k = std::exp(rng.uniform(-3.0, 3.0));
    for (std::size_t j = 0; j < 6; ++j) scaled.at(i, j) *= k;
  }
  const double dev = std::fabs(mad_layer(scaled) - mad_layer(w));
  return {ortho == 1.0 && same == 0.0 && dev < 1e-12,
          fmt("{e1, e2} -> %.17g", ortho) + fmt(", identical rows -> %.17g", same) + fmt(", rescale deviation %.2e", dev)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::size_t jobs = 1;
  app.add_option("--jobs", jobs, "parallel jobs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  // Benchmark: default generator, model and recipe; decorrelated shortcut plus affine shift at test.
  ExperimentConfig base;
  base.shift.correlation = 0.0;
  base.seeds = {0, 1, 2, 3, 4};
  base.eval.modes = {EvalMode::kSourceStats, EvalMode::kTtbn};
  base.eval.heads = {1};
  base.eval.warmup_batches = 30;
  const SourceSplits source = gen_source(base.data);

  criterion(1, "gradient correctness", gradient_correctness);
  criterion(2, "collapse identities", [&] { return collapse_identities(source, base); });
  criterion(3, "loss identity", [&] { return loss_identity(source, base); });

  MainRun run{base, make_datasets(base), {}};
  {
    const auto t0 = std::chrono::steady_clock::now();
    run.cfg.variants = {Variant::kErm, Variant::kAblationA, Variant::kL2gp};
    run.res = run_experiment(run.cfg, run.data, jobs);
    std::printf("trained ERM, A, L2GP x 5 seeds in %.1f s\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  criterion(4, "TTBN affine-shift recovery", [&] { return affine_recovery(run); });
  criterion(5, "method ordering", [&] { return method_ordering(run); });
  criterion(6, "diversity", [&] { return diversity(run); });
  criterion(7, "ablation structure", [&] { return ablation_structure(run, jobs); });
  criterion(8, "sweep harness", [&] { return sweep_harness(base, run.data, jobs); });
  criterion(9, "determinism", [&] { return determinism(jobs); });
  criterion(10, "MAD units", mad_units);

  std::sort(g_results.begin(), g_results.end());
  int failed = 0;
  for (const auto& [id, ok] : g_results) failed += !ok;
  std::printf("%d of %zu criteria passed\n", static_cast<int>(g_results.size()) - failed, g_results.size());
  return failed == 0 ? 0 : 1;
}
