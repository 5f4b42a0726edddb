#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "comfed/algorithms.hpp"
#include "comfed/orchestrator.hpp"
#include "comfed/parallel.hpp"
#include "comfed/report.hpp"

namespace comfed {

// A (client opt x server opt x seed) sweep over one base configuration.
struct GridSpec {
  ExperimentConfig base;
  std::vector<ClientOpt> opt_c_set;
  std::vector<ServerOpt> opt_s_set;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> checkpoints;

  void validate() const {
    if (opt_c_set.empty() || opt_s_set.empty()) throw std::invalid_argument("grid: empty opt_c_set or opt_s_set");
    if (seeds.empty()) throw std::invalid_argument("grid: no seeds");
    if (checkpoints.empty()) throw std::invalid_argument("grid: no checkpoints");
    for (auto cp : checkpoints) {
      if (cp == 0 || cp % base.eval_every != 0)
        throw std::invalid_argument("grid: checkpoint " + std::to_string(cp) + " is not a positive multiple of eval_every");
      if (cp > base.rounds)
        throw std::invalid_argument("grid: checkpoint " + std::to_string(cp) + " exceeds rounds");
    }
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct GridCell {
  ClientOpt opt_c;
  ServerOpt opt_s;
  std::uint64_t seed;
  ExperimentConfig config;
  ExperimentResult result;
};

// A cell value is empty when the run diverged at or before that checkpoint.
using GridValue = std::optional<double>;

struct GridRow {
  std::string algorithm;
  std::string combination;
  std::string opt_c;
  std::string opt_s;
  std::vector<GridValue> values;
  std::vector<std::uint64_t> best_at;  // checkpoints where this row holds the column maximum

  friend bool operator==(const GridRow&, const GridRow&) = default;
};

struct SeedRow {
  std::string algorithm;
  std::string opt_c;
  std::string opt_s;
  std::uint64_t seed = 0;
  std::vector<GridValue> values;
  std::string status;

  friend bool operator==(const SeedRow&, const SeedRow&) = default;
};

struct GridReport {
  std::vector<std::uint64_t> checkpoints;
  std::vector<GridRow> rows;
  std::vector<SeedRow> per_seed;

  bool any_diverged() const {
    return std::any_of(per_seed.begin(), per_seed.end(), [](const SeedRow& r) { return r.status != "ok"; });
  }
};

// Best accuracy reached by checkpoint `cp`, or empty if the run had diverged by then.
inline GridValue best_at_checkpoint(const ExperimentResult& r, std::uint64_t cp) {
  for (const auto& m : r.metrics) {
    if (m.status != RunStatus::ok && m.round <= cp) return std::nullopt;
    if (m.round == cp && m.status == RunStatus::ok) return m.best_acc;
  }
  return std::nullopt;
}

inline GridReport build_grid_report(const GridSpec& spec, const std::vector<GridCell>& cells) {
  GridReport rep;
  rep.checkpoints = spec.checkpoints;
  for (auto oc : spec.opt_c_set) {
    for (auto os : spec.opt_s_set) {
      GridRow row{algorithm_name(oc, os), combination_name(oc, os), std::string(token(oc)), std::string(token(os)),
                  {}, {}};
      std::vector<double> sums(spec.checkpoints.size(), 0.0);
      std::vector<bool> valid(spec.checkpoints.size(), true);
      for (const auto& cell : cells) {
        if (cell.opt_c != oc || cell.opt_s != os) continue;
        SeedRow sr{row.algorithm, row.opt_c, row.opt_s, cell.seed, {}, status_token(cell.result.status)};
        for (std::size_t j = 0; j < spec.checkpoints.size(); ++j) {
          auto v = best_at_checkpoint(cell.result, spec.checkpoints[j]);
          sr.values.push_back(v);
          if (v) sums[j] += *v;
          else valid[j] = false;
        }
        rep.per_seed.push_back(std::move(sr));
      }
      for (std::size_t j = 0; j < spec.checkpoints.size(); ++j)
        row.values.push_back(valid[j] ? GridValue(sums[j] / static_cast<double>(spec.seeds.size())) : std::nullopt);
      rep.rows.push_back(std::move(row));
    }
  }
  for (std::size_t j = 0; j < rep.checkpoints.size(); ++j) {
    std::optional<double> best;
    for (const auto& r : rep.rows)
      if (r.values[j] && (!best || *r.values[j] > *best)) best = r.values[j];
    if (!best) continue;
    for (auto& r : rep.rows)
      if (r.values[j] && *r.values[j] == *best) r.best_at.push_back(rep.checkpoints[j]);
  }
  return rep;
}

struct GridOutcome {
  std::vector<GridCell> cells;
  GridReport report;
};

// Runs every (opt_c, opt_s, seed) cell. Cells run concurrently on
// `opts.threads` workers; each cell trains its clients serially.
inline GridOutcome run_grid(const GridSpec& spec, const RunOptions& opts = {}) {
  spec.validate();
  std::vector<PreparedData> prepared;
  for (auto seed : spec.seeds) {
    auto cfg = spec.base;
    cfg.seed = seed;
    prepared.push_back(prepare_data(cfg));
  }

  GridOutcome out;
  for (auto oc : spec.opt_c_set)
    for (auto os : spec.opt_s_set)
      for (auto seed : spec.seeds) {
        auto cfg = spec.base;
        cfg.opt_c = oc;
        cfg.opt_s = os;
        cfg.seed = seed;
        out.cells.push_back({oc, os, seed, cfg, {}});
      }

  parallel_for(out.cells.size(), opts.threads, [&](std::size_t i) {
    auto& cell = out.cells[i];
    const auto s = static_cast<std::size_t>(
        std::find(spec.seeds.begin(), spec.seeds.end(), cell.seed) - spec.seeds.begin());
    cell.result = run_experiment(cell.config, prepared[s], RunOptions{1});
  });
  out.report = build_grid_report(spec, out.cells);
  return out;
}

inline std::string format_value(const GridValue& v) { return v ? format_real(*v) : "diverged"; }

inline GridValue parse_value(const std::string& s) {
  if (s == "diverged") return std::nullopt;
  return parse_real(s);
}

inline std::string grid_csv(const GridReport& rep) {
  std::string out = "algorithm,combination,opt_c,opt_s";
  for (auto cp : rep.checkpoints) out += ",acc@" + std::to_string(cp);
  out += ",best_at\n";
  for (const auto& r : rep.rows) {
    out += r.algorithm + "," + r.combination + "," + r.opt_c + "," + r.opt_s;
    for (const auto& v : r.values) out += "," + format_value(v);
    out += ",";
    for (std::size_t i = 0; i < r.best_at.size(); ++i) out += (i ? ";" : "") + std::to_string(r.best_at[i]);
    out += "\n";
  }
  return out;
}

inline std::string grid_seed_csv(const GridReport& rep) {
  std::string out = "algorithm,opt_c,opt_s,seed";
  for (auto cp : rep.checkpoints) out += ",acc@" + std::to_string(cp);
  out += ",status\n";
  for (const auto& r : rep.per_seed) {
    out += r.algorithm + "," + r.opt_c + "," + r.opt_s + "," + std::to_string(r.seed);
    for (const auto& v : r.values) out += "," + format_value(v);
    out += "," + r.status + "\n";
  }
  return out;
}

// Reads back the main grid table (not the per-seed file).
inline GridReport read_grid_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty grid report");
  auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "algorithm" || header.back() != "best_at")
    throw IoError(path.string() + ": bad grid header");
  GridReport rep;
  for (std::size_t i = 4; i + 1 < header.size(); ++i) rep.checkpoints.push_back(std::stoull(header[i].substr(4)));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != header.size()) throw IoError(path.string() + ": ragged grid row");
    GridRow r{c[0], c[1], c[2], c[3], {}, {}};
    for (std::size_t i = 4; i + 1 < c.size(); ++i) r.values.push_back(parse_value(c[i]));
    std::istringstream bs(c.back());
    std::string tok;
    while (std::getline(bs, tok, ';'))
      if (!tok.empty()) r.best_at.push_back(std::stoull(tok));
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

}  // namespace comfed
