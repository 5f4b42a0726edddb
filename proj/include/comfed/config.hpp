#pragma once

// Experiment configuration files.
//
// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
// comments. Sections and keys:
//
//   [experiment] opt_c, opt_s, num_clients, sample_ratio, rounds, eval_every,
//                seed, record_wall_time
//   [client]     local_epochs, batch_size, lr, momentum, weight_decay,
//                prox_mu, scaf_option (I | II)
//   [server]     server_lr (adaptive optimizers), sgd_server_lr, beta1, beta2,
//                eps, literal_eq1
//   [model]      kind (logistic | mlp1), hidden_dim, activation (relu | tanh)
//   [data]       source (synthetic | csv), partition (dirichlet | iid), alpha,
//                test_fraction, seed, num_classes, dim, samples_per_class,
//                spread, path, test_path, label_column, has_header
//   [grid]       opt_c_set, opt_s_set, seeds, checkpoints (comma lists)
//
// Required: experiment.opt_c, experiment.opt_s (unless [grid] is present) and
// data.source. A file with a [grid] section parses to a GridSpec.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "comfed/algorithms.hpp"
#include "comfed/grid.hpp"
#include "comfed/orchestrator.hpp"
#include "comfed/report.hpp"

namespace comfed {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ParsedConfig = std::variant<ExperimentConfig, GridSpec>;

namespace config_detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::uint64_t to_uint(const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  return std::stoull(v);
}

inline double to_real(const std::string& v) {
  double x = 0.0;
  try {
    x = parse_real(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a real number, got '" + v + "'");
  }
  if (!std::isfinite(x)) throw std::invalid_argument("expected a finite real number, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

template <typename E>
E to_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string valid;
  for (auto& [name, value] : options) {
    if (v == name) return value;
    valid += (valid.empty() ? "" : ", ") + std::string(name);
  }
  throw std::invalid_argument("invalid value '" + v + "', expected one of: " + valid);
}

inline ClientOpt to_client_opt(const std::string& v) {
  if (auto o = parse_client_opt(v)) return *o;
  throw std::invalid_argument("invalid opt_c '" + v + "', expected one of: sgd, prox, scaf, nova");
}

inline ServerOpt to_server_opt(const std::string& v) {
  if (auto o = parse_server_opt(v)) return *o;
  throw std::invalid_argument("invalid opt_s '" + v + "', expected one of: sgd, adam, adagrad, yogi");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) throw std::invalid_argument("empty item in list '" + v + "'");
    out.push_back(tok);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& fmt) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + fmt(xs[i]);
  return s;
}

struct KeyDef {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define COMFED_UINT(sec, name, field)                                                       \
  KeyDef{sec, name, [](ExperimentConfig& c, const std::string& v) { c.field = to_uint(v); }, \
         [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define COMFED_REAL(sec, name, field)                                                       \
  KeyDef{sec, name, [](ExperimentConfig& c, const std::string& v) { c.field = to_real(v); }, \
         [](const ExperimentConfig& c) { return format_real(c.field); }}
#define COMFED_BOOL(sec, name, field)                                                       \
  KeyDef{sec, name, [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(v); }, \
         [](const ExperimentConfig& c) { return bool_str(c.field); }}
#define COMFED_STR(sec, name, field)                                                \
  KeyDef{sec, name, [](ExperimentConfig& c, const std::string& v) { c.field = v; }, \
         [](const ExperimentConfig& c) { return c.field; }}

inline const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      KeyDef{"experiment", "opt_c", [](ExperimentConfig& c, const std::string& v) { c.opt_c = to_client_opt(v); },
             [](const ExperimentConfig& c) { return std::string(token(c.opt_c)); }},
      KeyDef{"experiment", "opt_s", [](ExperimentConfig& c, const std::string& v) { c.opt_s = to_server_opt(v); },
             [](const ExperimentConfig& c) { return std::string(token(c.opt_s)); }},
      COMFED_UINT("experiment", "num_clients", num_clients),
      COMFED_REAL("experiment", "sample_ratio", sample_ratio),
      COMFED_UINT("experiment", "rounds", rounds),
      COMFED_UINT("experiment", "eval_every", eval_every),
      COMFED_UINT("experiment", "seed", seed),
      COMFED_BOOL("experiment", "record_wall_time", record_wall_time),

      COMFED_UINT("client", "local_epochs", client.local_epochs),
      COMFED_UINT("client", "batch_size", client.batch_size),
      COMFED_REAL("client", "lr", client.lr),
      COMFED_REAL("client", "momentum", client.momentum),
      COMFED_REAL("client", "weight_decay", client.weight_decay),
      COMFED_REAL("client", "prox_mu", client.prox_mu),
      KeyDef{"client", "scaf_option",
             [](ExperimentConfig& c, const std::string& v) {
               c.client.scaf_option = to_enum<ScafOption>(v, {{"I", ScafOption::I}, {"II", ScafOption::II}});
             },
             [](const ExperimentConfig& c) { return std::string(c.client.scaf_option == ScafOption::I ? "I" : "II"); }},

      COMFED_REAL("server", "server_lr", server.server_lr),
      COMFED_REAL("server", "sgd_server_lr", server.sgd_server_lr),
      COMFED_REAL("server", "beta1", server.beta1),
      COMFED_REAL("server", "beta2", server.beta2),
      COMFED_REAL("server", "eps", server.eps),
      COMFED_BOOL("server", "literal_eq1", server.literal_eq1),

      KeyDef{"model", "kind",
             [](ExperimentConfig& c, const std::string& v) {
               c.model.kind = to_enum<ModelKind>(v, {{"logistic", ModelKind::logistic}, {"mlp1", ModelKind::mlp1}});
             },
             [](const ExperimentConfig& c) {
               return std::string(c.model.kind == ModelKind::logistic ? "logistic" : "mlp1");
             }},
      COMFED_UINT("model", "hidden_dim", model.hidden_dim),
      KeyDef{"model", "activation",
             [](ExperimentConfig& c, const std::string& v) {
               c.model.activation = to_enum<Activation>(v, {{"relu", Activation::relu}, {"tanh", Activation::tanh}});
             },
             [](const ExperimentConfig& c) {
               return std::string(c.model.activation == Activation::relu ? "relu" : "tanh");
             }},

      KeyDef{"data", "source",
             [](ExperimentConfig& c, const std::string& v) {
               c.data.source = to_enum<DataSource>(v, {{"synthetic", DataSource::synthetic}, {"csv", DataSource::csv}});
             },
             [](const ExperimentConfig& c) {
               return std::string(c.data.source == DataSource::synthetic ? "synthetic" : "csv");
             }},
      KeyDef{"data", "partition",
             [](ExperimentConfig& c, const std::string& v) {
               c.data.partition =
                   to_enum<PartitionScheme>(v, {{"dirichlet", PartitionScheme::dirichlet}, {"iid", PartitionScheme::iid}});
             },
             [](const ExperimentConfig& c) {
               return std::string(c.data.partition == PartitionScheme::dirichlet ? "dirichlet" : "iid");
             }},
      COMFED_REAL("data", "alpha", data.alpha),
      COMFED_REAL("data", "test_fraction", data.test_fraction),
      COMFED_UINT("data", "seed", data.seed),
      KeyDef{"data", "num_classes",
             [](ExperimentConfig& c, const std::string& v) { c.data.num_classes = static_cast<int>(to_uint(v)); },
             [](const ExperimentConfig& c) { return std::to_string(c.data.num_classes); }},
      COMFED_UINT("data", "dim", data.dim),
      COMFED_UINT("data", "samples_per_class", data.samples_per_class),
      COMFED_REAL("data", "spread", data.spread),
      COMFED_STR("data", "path", data.path),
      COMFED_STR("data", "test_path", data.test_path),
      COMFED_STR("data", "label_column", data.label_column),
      COMFED_BOOL("data", "has_header", data.has_header),
  };
  return defs;
}

#undef COMFED_UINT
#undef COMFED_REAL
#undef COMFED_BOOL
#undef COMFED_STR

inline const std::vector<std::string>& grid_keys() {
  static const std::vector<std::string> keys = {"opt_c_set", "opt_s_set", "seeds", "checkpoints"};
  return keys;
}

}  // namespace config_detail

// Invariant violations as (section.key, message) pairs; empty when valid.
inline std::vector<std::pair<std::string, std::string>> config_violations(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> v;
  auto need = [&](bool ok, const char* key, const std::string& msg) {
    if (!ok) v.emplace_back(key, msg);
  };
  need(c.num_clients >= 1, "experiment.num_clients", "num_clients must be >= 1");
  need(c.sample_ratio > 0.0 && c.sample_ratio <= 1.0, "experiment.sample_ratio", "sample_ratio must be in (0, 1]");
  need(c.sample_ratio * static_cast<double>(c.num_clients) + 1e-9 >= 1.0, "experiment.sample_ratio",
       "floor(sample_ratio * num_clients) must be >= 1");
  need(c.eval_every >= 1, "experiment.eval_every", "eval_every must be >= 1");
  need(c.client.local_epochs >= 1, "client.local_epochs", "local_epochs must be >= 1");
  need(c.client.batch_size >= 1, "client.batch_size", "batch_size must be >= 1");
  need(c.client.lr > 0.0, "client.lr", "lr must be > 0");
  need(c.client.momentum >= 0.0 && c.client.momentum < 1.0, "client.momentum", "momentum must be in [0, 1)");
  need(c.client.weight_decay >= 0.0, "client.weight_decay", "weight_decay must be >= 0");
  need(c.client.prox_mu >= 0.0, "client.prox_mu", "prox_mu must be >= 0");
  need(c.server.server_lr > 0.0, "server.server_lr", "server_lr must be > 0");
  need(c.server.sgd_server_lr > 0.0, "server.sgd_server_lr", "sgd_server_lr must be > 0");
  need(c.server.beta1 >= 0.0 && c.server.beta1 < 1.0, "server.beta1", "beta1 must be in [0, 1)");
  need(c.server.beta2 > 0.0 && c.server.beta2 < 1.0, "server.beta2", "beta2 must be in (0, 1)");
  need(c.server.eps > 0.0, "server.eps", "eps must be > 0");
  need(c.model.hidden_dim >= 1, "model.hidden_dim", "hidden_dim must be >= 1");
  need(c.data.alpha > 0.0, "data.alpha", "alpha must be > 0");
  need(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0, "data.test_fraction",
       "test_fraction must be in (0, 1)");
  if (c.data.source == DataSource::synthetic) {
    need(c.data.num_classes >= 2, "data.num_classes", "num_classes must be >= 2");
    need(c.data.dim >= 1, "data.dim", "dim must be >= 1");
    need(c.data.samples_per_class >= 1, "data.samples_per_class", "samples_per_class must be >= 1");
    need(c.data.spread > 0.0, "data.spread", "spread must be > 0");
  } else {
    need(!c.data.path.empty(), "data.path", "path is required when source = csv");
  }
  return v;
}

inline void validate(const ExperimentConfig& c) {
  auto v = config_violations(c);
  if (!v.empty()) throw ConfigError(v.front().first + ": " + v.front().second);
}

inline ParsedConfig parse_config_text(const std::string& text, const std::string& path = "<config>") {
  using namespace config_detail;
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;  // "section.key" -> line
  std::map<std::string, std::string> grid_values;
  bool has_grid = false;
  std::string section;

  auto fail = [&](std::size_t line, const std::string& msg) -> ConfigError {
    return ConfigError(path + ":" + std::to_string(line) + ": " + msg);
  };

  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw fail(line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> sections = {"experiment", "client", "server", "model", "data", "grid"};
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw fail(line_no, "unknown section [" + section + "]");
      if (section == "grid") has_grid = true;
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw fail(line_no, "expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (section.empty()) throw fail(line_no, "key '" + key + "' outside of any section");
    const auto full = section + "." + key;
    if (seen.count(full)) throw fail(line_no, "duplicate key " + full);
    seen[full] = line_no;

    if (section == "grid") {
      if (std::find(grid_keys().begin(), grid_keys().end(), key) == grid_keys().end())
        throw fail(line_no, "unknown key " + full);
      grid_values[key] = value;
      continue;
    }
    const auto& defs = key_defs();
    auto it = std::find_if(defs.begin(), defs.end(),
                           [&](const KeyDef& d) { return d.section == section && d.key == key; });
    if (it == defs.end()) throw fail(line_no, "unknown key " + full);
    try {
      it->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw fail(line_no, full + ": " + e.what());
    }
  }

  auto require = [&](const std::string& full) {
    if (!seen.count(full)) throw ConfigError(path + ": missing required field " + full);
  };
  if (!has_grid) {
    require("experiment.opt_c");
    require("experiment.opt_s");
  }
  require("data.source");

  auto violations = config_violations(cfg);
  if (!violations.empty()) {
    const auto& [key, msg] = violations.front();
    auto it = seen.find(key);
    throw fail(it == seen.end() ? 0 : it->second, msg);
  }
  if (!has_grid) return cfg;

  GridSpec grid;
  auto grid_line = [&](const std::string& key) { return seen.count("grid." + key) ? seen["grid." + key] : 0; };
  try {
    if (grid_values.count("opt_c_set"))
      for (auto& t : split_list(grid_values["opt_c_set"])) grid.opt_c_set.push_back(to_client_opt(t));
    else grid.opt_c_set.assign(kAllClientOpts.begin(), kAllClientOpts.end());
  } catch (const std::invalid_argument& e) {
    throw fail(grid_line("opt_c_set"), std::string("grid.opt_c_set: ") + e.what());
  }
  try {
    if (grid_values.count("opt_s_set"))
      for (auto& t : split_list(grid_values["opt_s_set"])) grid.opt_s_set.push_back(to_server_opt(t));
    else grid.opt_s_set.assign(kAllServerOpts.begin(), kAllServerOpts.end());
  } catch (const std::invalid_argument& e) {
    throw fail(grid_line("opt_s_set"), std::string("grid.opt_s_set: ") + e.what());
  }
  try {
    if (grid_values.count("seeds"))
      for (auto& t : split_list(grid_values["seeds"])) grid.seeds.push_back(to_uint(t));
    else grid.seeds = {cfg.seed};
  } catch (const std::invalid_argument& e) {
    throw fail(grid_line("seeds"), std::string("grid.seeds: ") + e.what());
  }
  try {
    if (grid_values.count("checkpoints"))
      for (auto& t : split_list(grid_values["checkpoints"])) grid.checkpoints.push_back(to_uint(t));
    else grid.checkpoints = {cfg.rounds};
  } catch (const std::invalid_argument& e) {
    throw fail(grid_line("checkpoints"), std::string("grid.checkpoints: ") + e.what());
  }
  if (!seen.count("experiment.opt_c")) cfg.opt_c = grid.opt_c_set.front();
  if (!seen.count("experiment.opt_s")) cfg.opt_s = grid.opt_s_set.front();
  grid.base = cfg;
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw fail(grid_line("checkpoints"), e.what());
  }
  return grid;
}

inline ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& d : config_detail::key_defs()) {
    if (d.section != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + d.section + "]\n";
      section = d.section;
    }
    out += d.key + " = " + d.get(cfg) + "\n";
  }
  return out;
}

inline std::string serialize_config(const GridSpec& grid) {
  using config_detail::join;
  auto out = serialize_config(grid.base);
  out += "\n[grid]\n";
  out += "opt_c_set = " + join(grid.opt_c_set, [](ClientOpt o) { return std::string(token(o)); }) + "\n";
  out += "opt_s_set = " + join(grid.opt_s_set, [](ServerOpt o) { return std::string(token(o)); }) + "\n";
  out += "seeds = " + join(grid.seeds, [](std::uint64_t s) { return std::to_string(s); }) + "\n";
  out += "checkpoints = " + join(grid.checkpoints, [](std::uint64_t s) { return std::to_string(s); }) + "\n";
  return out;
}

inline std::string serialize_config(const ParsedConfig& cfg) {
  return std::visit([](const auto& c) { return serialize_config(c); }, cfg);
}

}  // namespace comfed
