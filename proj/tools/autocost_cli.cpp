// autocost command-line front end: train, evolve, sweep, heatmap, plot, report.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "autocost/csv.hpp"
#include "autocost/errors.hpp"
#include "autocost/evolution.hpp"
#include "autocost/harness.hpp"
#include "autocost/plot.hpp"

namespace fs = std::filesystem;
using namespace autocost;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "key = value config file");
  if (needs_config) opt->required();
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--workers", c.workers, "parallel worker count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output directory");
}

int cmd_train(const Common& c) {
  const auto cfg = harness::ConfigFile::load(c.config);
  const auto spec = harness::spec_from_config(cfg, c.seed, c.out);
  const auto result = harness::run_experiment(spec, c.workers);
  for (const auto& r : result.runs) {
    std::cout << rl::to_string(r.algo) << " seed " << r.seed_index << ": ";
    if (!r.ok) {
      std::cout << "FAILED (" << r.error << ")\n";
      continue;
    }
    const auto& last = r.metrics.back();
    std::cout << "return " << csv::format_double(last.avg_episode_return)
              << ", extrinsic cost " << csv::format_double(last.avg_episode_extrinsic_cost)
              << " -> " << r.csv_path << "\n";
  }
  std::cout << "aggregate: " << (fs::path(c.out) / spec.name / "aggregate.csv").string()
            << "\n";
  return result.failures == 0 ? 0 : 1;
}

int cmd_sweep(const Common& c, std::vector<double> limits) {
  const auto cfg = harness::ConfigFile::load(c.config);
  const auto spec = harness::spec_from_config(cfg, c.seed, c.out);
  if (limits.empty()) {
    for (const auto& s : cfg.get_list("cost_limits")) limits.push_back(csv::parse_double(s));
  }
  const auto sweep = harness::sweep_cost_limit(spec, limits, c.workers);
  for (const auto& w : sweep.warnings) std::cerr << "warning: " << w << "\n";
  const auto table = harness::sweep_csv(sweep);
  const auto path = fs::path(c.out) / spec.name / "sweep.csv";
  fs::create_directories(path.parent_path());
  csv::write_file(path.string(), "# config_hash=" + spec.config_hash + "\n" + table);
  std::cout << table;
  int failures = 0;
  for (const auto& r : sweep.results) failures += r.failures;
  return failures == 0 ? 0 : 1;
}

int cmd_evolve(const Common& c) {
  const auto cfg = harness::ConfigFile::load(c.config);
  cfg.check_known(harness::known_keys());
  const auto config = harness::evolution_from_config(cfg);
  const std::string name = cfg.get("name", "evolution");
  const std::string hash = cfg.hash();
  const auto result = evolution::run_evolution(
      config, c.seed, c.workers,
      [](int stage, const std::vector<evolution::Candidate>& pop) {
        double best = evolution::kFailedFitness;
        for (const auto& p : pop) best = std::min(best, p.fitness);
        std::cerr << "stage " << stage << ": best fitness "
                  << csv::format_double(best) << "\n";
      });
  const auto dir = fs::path(c.out) / name;
  fs::create_directories(dir);
  csv::write_file((dir / "history.csv").string(),
                  evolution::history_csv(result.history, hash));
  csv::write_file((dir / "best.json").string(),
                  evolution::best_to_json(result, hash, c.seed));
  std::cout << "best candidate " << result.best.id << ": fitness "
            << csv::format_double(result.best.fitness) << ", return "
            << csv::format_double(result.best.mean_return) << "\n"
            << "history: " << (dir / "history.csv").string() << "\n"
            << "best: " << (dir / "best.json").string() << "\n";
  return 0;
}

int cmd_heatmap(const Common& c, const std::string& params_path) {
  harness::ConfigFile cfg;
  if (!c.config.empty()) cfg = harness::ConfigFile::load(c.config);
  cfg.check_known(harness::known_keys());
  const auto world = harness::world_from_config(cfg);
  nn::Activation hidden = nn::Activation::Sigmoid;
  if (cfg.has("intrinsic_hidden")) hidden = nn::parse_activation(cfg.get("intrinsic_hidden", ""));
  std::string path = params_path.empty() ? cfg.get("intrinsic_params", "") : params_path;
  if (path.empty()) throw ConfigError("heatmap needs --params or intrinsic_params");
  const auto params = cost::params_from_json(csv::read_text(path), hidden);
  const env::Vec2 center{cfg.get_double("hazard_x", 0.0), cfg.get_double("hazard_y", 0.0)};
  const auto cells = harness::heatmap_single_hazard(
      params, world, center, cfg.get_int("grid_resolution", 40));
  fs::create_directories(c.out);
  const auto csv_path = (fs::path(c.out) / "heatmap.csv").string();
  const auto text = cost::heatmap_csv(cells);
  csv::write_file(csv_path, text);
  csv::write_file((fs::path(c.out) / "heatmap.svg").string(), plot::heatmap_svg(text));
  std::cout << "heatmap: " << csv_path << "\n";
  return 0;
}

int cmd_plot(const std::string& kind, const std::vector<std::string>& inputs,
             const std::string& out) {
  const auto svg = plot::render(plot::parse_plot_kind(kind), inputs);
  if (auto parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  csv::write_file(out, svg);
  std::cout << "plot: " << out << "\n";
  return 0;
}

int cmd_report(const Common& c) {
  const auto text = harness::report(c.out);
  csv::write_file((fs::path(c.out) / "report.csv").string(), text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AutoCost laboratory: safe RL with evolved intrinsic costs"};
  app.require_subcommand(1);

  Common train_opts, evolve_opts, sweep_opts, heat_opts, report_opts;
  auto* train = app.add_subcommand("train", "train learners per config, all seeds");
  add_common(train, train_opts, true);

  auto* evolve = app.add_subcommand("evolve", "run the intrinsic-cost evolution");
  add_common(evolve, evolve_opts, true);

  std::vector<double> limits;
  auto* sweep = app.add_subcommand("sweep", "cost-limit sweep");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--limits", limits, "cost limits (overrides cost_limits)");

  std::string params_path;
  auto* heat = app.add_subcommand("heatmap", "intrinsic cost over a one-hazard arena");
  add_common(heat, heat_opts, false);
  heat->add_option("--params", params_path, "41-parameter JSON (or best.json)");

  std::string plot_kind, plot_out = "plot.svg";
  std::vector<std::string> plot_inputs;
  auto* plt = app.add_subcommand("plot", "render CSVs to SVG");
  plt->add_option("--kind", plot_kind, "return, cost, heatmap or evolution")->required();
  plt->add_option("--out", plot_out, "output SVG path");
  plt->add_option("inputs", plot_inputs, "CSV files")->required();

  auto* rep = app.add_subcommand("report", "summarize aggregate CSVs under --out");
  add_common(rep, report_opts, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_opts);
    if (*evolve) return cmd_evolve(evolve_opts);
    if (*sweep) return cmd_sweep(sweep_opts, limits);
    if (*heat) return cmd_heatmap(heat_opts, params_path);
    if (*plt) return cmd_plot(plot_kind, plot_inputs, plot_out);
    if (*rep) return cmd_report(report_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
