// Command-line driver: run, ablate, sweep, gradcheck, gen-data.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "l2gp/l2gp.hpp"

namespace {

using namespace l2gp;

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      if (item.empty() || item[0] == '-') throw std::invalid_argument(item);
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
    if (used != item.size()) throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--seeds: empty list");
  return out;
}

struct Common {
  std::string config;
  std::string out;
  std::string seeds;
  std::size_t jobs = 1;
  std::optional<bool> extend_graph;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (!c.seeds.empty()) cfg.seeds = parse_seeds(c.seeds);
  if (c.extend_graph) cfg.train.extend_graph = *c.extend_graph;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool needs_out) {
  app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  auto* out = app->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  app->add_option("--seeds", c.seeds, "comma-separated seeds, overrides the config");
  app->add_option("--jobs", c.jobs, "parallel jobs")->check(CLI::PositiveNumber);
  app->add_option("--extend-graph", c.extend_graph, "second-order L2GP objective (BOOL)");
}

int report_divergence(const ExperimentResult& res) {
  if (!res.any_diverged()) return 0;
  for (const auto& job : res.jobs) {
    if (job.diverged) std::cerr << to_string(job.variant) << " seed " << job.seed << ": " << job.error << '\n';
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"L2GP training and evaluation harness"};
  app.require_subcommand(1);

  Common run_opts, ablate_opts, sweep_opts, grad_opts, data_opts;
  auto* run = app.add_subcommand("run", "train and evaluate the configured variants");
  add_common(run, run_opts, true);
  auto* ablate = app.add_subcommand("ablate", "ERM, A, B, C, D and L2GP on shared data and seeds");
  add_common(ablate, ablate_opts, true);
  auto* sweep = app.add_subcommand("sweep", "lr_plus x alpha grid of L2GP target accuracy");
  add_common(sweep, sweep_opts, true);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  add_common(grad, grad_opts, false);
  bool inject_fault = false;
  grad->add_flag("--inject-fault", inject_fault, "corrupt the ReLU backward rule; the check must fail");
  auto* gen = app.add_subcommand("gen-data", "write the synthetic source and target splits");
  add_common(gen, data_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const ExperimentConfig cfg = resolve(run_opts);
      const Datasets data = make_datasets(cfg);
      const ExperimentResult res = run_experiment(cfg, data, run_opts.jobs);
      write_experiment(cfg, res, run_opts.out, "run");
      std::cout << "wrote " << run_opts.out << " (config " << res.config_hash << ")\n";
      return report_divergence(res);
    }
    if (*ablate) {
      const ExperimentConfig cfg = resolve(ablate_opts);
      const Datasets data = make_datasets(cfg);
      const ExperimentResult res = run_ablations(cfg, data, ablate_opts.out, ablate_opts.jobs);
      std::cout << ablation_csv(ablation_config(cfg), res);
      return report_divergence(res);
    }
    if (*sweep) {
      const ExperimentConfig cfg = resolve(sweep_opts);
      const Datasets data = make_datasets(cfg);
      const SweepResult res = run_sweep(cfg, data, sweep_opts.jobs);
      write_sweep(cfg, res, sweep_opts.out);
      std::cout << grid_csv(cfg, res);
      return 0;
    }
    if (*grad) {
      const std::vector<std::uint64_t> seeds =
          grad_opts.seeds.empty() ? std::vector<std::uint64_t>{0} : parse_seeds(grad_opts.seeds);
      const GradCheckReport rep = run_gradcheck(seeds, grad_opts.extend_graph.value_or(true), inject_fault ? 0.5 : 1.0);
      std::cout << gradcheck_text(rep);
      if (!grad_opts.out.empty()) {
        std::filesystem::create_directories(grad_opts.out);
        std::ofstream(std::filesystem::path(grad_opts.out) / "gradcheck.json") << gradcheck_json(rep).dump(2) << '\n';
      }
      return rep.passed() ? 0 : 1;
    }
    if (*gen) {
      const ExperimentConfig cfg = resolve(data_opts);
      write_datasets(cfg, make_datasets(cfg), data_opts.out);
      std::cout << "wrote " << data_opts.out << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
