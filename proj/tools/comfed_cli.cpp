// comfed: run federated experiments, grids and self-checks from config files.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "acceptance/criteria.hpp"
#include "comfed/comfed.hpp"

namespace fs = std::filesystem;
using namespace comfed;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  bool literal_eq1 = false;
};

void apply(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.literal_eq1) cfg.server.literal_eq1 = true;
}

void write_run(const fs::path& dir, const ExperimentConfig& cfg, const ExperimentResult& res) {
  emit_report(metrics_rows(cfg, res), dir / "metrics.csv");
  save_model(res.final_w, res.model, dir / "model_final.bin");
  save_model(res.best_w, res.model, dir / "model_best.bin");
  write_text_file(dir / "config.ini", serialize_config(cfg));
}

int cmd_run(const std::string& path, const fs::path& out, const Overrides& o, std::size_t threads) {
  auto parsed = parse_config(path);
  if (!std::holds_alternative<ExperimentConfig>(parsed)) {
    std::cerr << path << ": config has a [grid] section; use `comfed grid`\n";
    return 2;
  }
  auto cfg = std::get<ExperimentConfig>(parsed);
  apply(cfg, o);
  validate(cfg);
  const auto res = run_experiment(cfg, RunOptions{threads});
  write_run(out, cfg, res);
  if (res.status != RunStatus::ok) {
    std::cerr << res.algorithm << " diverged: " << res.error << "\n";
    return 1;
  }
  std::cout << res.algorithm << ": best accuracy " << format_real(res.best_acc) << " over " << cfg.rounds
            << " rounds; wrote " << (out / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_grid(const std::string& path, const fs::path& out, const Overrides& o, std::size_t threads) {
  auto parsed = parse_config(path);
  GridSpec grid;
  if (auto* g = std::get_if<GridSpec>(&parsed)) {
    grid = *g;
  } else {
    grid.base = std::get<ExperimentConfig>(parsed);
    grid.opt_c_set.assign(kAllClientOpts.begin(), kAllClientOpts.end());
    grid.opt_s_set.assign(kAllServerOpts.begin(), kAllServerOpts.end());
    grid.seeds = {grid.base.seed};
    grid.checkpoints = {grid.base.rounds};
  }
  if (o.seed) grid.seeds = {*o.seed};
  if (o.literal_eq1) grid.base.server.literal_eq1 = true;
  const auto outcome = run_grid(grid, RunOptions{threads});

  write_text_file(out / "grid_report.csv", grid_csv(outcome.report));
  write_text_file(out / "grid_report_per_seed.csv", grid_seed_csv(outcome.report));
  for (const auto& cell : outcome.cells)
    write_run(out / "runs" / (cell.result.algorithm + "_seed" + std::to_string(cell.seed)), cell.config, cell.result);

  std::cout << grid_csv(outcome.report);
  if (outcome.report.any_diverged()) {
    std::cerr << "one or more grid cells diverged\n";
    return 1;
  }
  return 0;
}

int cmd_partition_stats(const std::string& path, const std::string& out, const Overrides& o) {
  auto parsed = parse_config(path);
  auto cfg = std::holds_alternative<GridSpec>(parsed) ? std::get<GridSpec>(parsed).base
                                                       : std::get<ExperimentConfig>(parsed);
  apply(cfg, o);
  const auto data = prepare_data(cfg);
  const auto hists = label_histograms(data.train, data.partition);
  std::ostringstream csv;
  csv << "client,num_samples";
  for (int k = 0; k < data.train.num_classes; ++k) csv << ",label_" << k;
  csv << ",labels_for_90pct,entropy\n";
  for (std::size_t c = 0; c < hists.size(); ++c) {
    csv << c << "," << data.partition.counts[c];
    for (auto h : hists[c]) csv << "," << h;
    csv << "," << labels_to_cover(hists[c], 0.9) << "," << format_real(label_entropy(hists[c])) << "\n";
  }
  if (out.empty()) std::cout << csv.str();
  else write_text_file(out, csv.str());
  return 0;
}

int cmd_check(bool full) {
  int failed = 0;
  for (const auto& run : acceptance::all_criteria(full)) {
    const auto v = run();
    std::cout << acceptance::format_verdict(v) << std::endl;
    if (!v.pass) ++failed;
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composable federated optimization simulator"};
  app.require_subcommand(1);

  Overrides o;
  std::string config, out_dir = "out", stats_out;
  std::size_t threads = 1;
  bool full = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "Experiment config (.ini)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the experiment seed");
    sub->add_flag("--literal-eq1", o.literal_eq1, "Use the adaptive update exactly as printed (unstable)");
  };

  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run);
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--threads", threads, "Client worker threads")->check(CLI::PositiveNumber);

  auto* grid = app.add_subcommand("grid", "Run an opt_c x opt_s x seed grid");
  add_common(grid);
  grid->add_option("--out", out_dir, "Output directory")->capture_default_str();
  grid->add_option("--threads", threads, "Concurrent grid cells")->check(CLI::PositiveNumber);

  auto* stats = app.add_subcommand("partition-stats", "Per-client label histograms of the partition");
  add_common(stats);
  stats->add_option("--out", stats_out, "CSV file (default: stdout)");

  auto* check = app.add_subcommand("check", "Run the built-in acceptance checks");
  check->add_flag("--full", full, "Include the benchmark and determinism checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out_dir, o, threads);
    if (*grid) return cmd_grid(config, out_dir, o, threads);
    if (*stats) return cmd_partition_stats(config, stats_out, o);
    if (*check) return cmd_check(full);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
