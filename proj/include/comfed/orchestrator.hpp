#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "comfed/algorithms.hpp"
#include "comfed/client.hpp"
#include "comfed/data.hpp"
#include "comfed/model.hpp"
#include "comfed/parallel.hpp"
#include "comfed/params.hpp"
#include "comfed/rng.hpp"
#include "comfed/server.hpp"

namespace comfed {

enum class DataSource { synthetic, csv };
enum class PartitionScheme { dirichlet, iid };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  PartitionScheme partition = PartitionScheme::dirichlet;
  double alpha = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;  // dataset synthesis and train/test split
  // synthetic
  int num_classes = 10;
  std::size_t dim = 20;
  std::size_t samples_per_class = 200;
  double spread = 1.0;
  // csv
  std::string path;
  std::string test_path;
  std::string label_column = "label";
  bool has_header = true;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Server hyperparameters before opt_s is fixed: adaptive optimizers use
// `server_lr`, plain sgd uses `sgd_server_lr`.
struct ServerSettings {
  double server_lr = 0.005;
  double sgd_server_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  bool literal_eq1 = false;

  friend bool operator==(const ServerSettings&, const ServerSettings&) = default;
};

struct ModelSettings {
  ModelKind kind = ModelKind::logistic;
  std::size_t hidden_dim = 16;
  Activation activation = Activation::relu;

  friend bool operator==(const ModelSettings&, const ModelSettings&) = default;
};

struct ExperimentConfig {
  ClientOpt opt_c = ClientOpt::sgd;
  ServerOpt opt_s = ServerOpt::sgd;
  std::size_t num_clients = 100;
  double sample_ratio = 0.1;
  std::size_t rounds = 2000;
  std::size_t eval_every = 1;
  std::uint64_t seed = 1;
  bool record_wall_time = false;

  ClientConfig client;  // client.opt_c is overwritten by opt_c
  ServerSettings server;
  ModelSettings model;
  DataConfig data;

  ClientConfig client_config() const {
    auto c = client;
    c.opt_c = opt_c;
    return c;
  }

  ServerConfig server_config() const {
    return {opt_s, opt_s == ServerOpt::sgd ? server.sgd_server_lr : server.server_lr, server.beta1, server.beta2,
            server.eps, server.literal_eq1};
  }

  std::string algorithm() const { return algorithm_name(opt_c, opt_s); }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// |S| = max(1, floor(C * N)); the small slack absorbs products such as 0.29*100.
inline std::size_t clients_per_round(std::size_t num_clients, double sample_ratio) {
  const auto k = static_cast<std::size_t>(std::floor(sample_ratio * static_cast<double>(num_clients) + 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(num_clients, 1));
}

// Uniform sample without replacement, returned in ascending id order.
inline std::vector<std::size_t> sample_clients(std::size_t num_clients, double sample_ratio, std::uint64_t round,
                                               std::uint64_t seed) {
  const auto k = clients_per_round(num_clients, sample_ratio);
  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (k < num_clients) {
    auto eng = make_engine(seed, Stream::sampling, {round});
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
      std::swap(ids[i], ids[pick(eng)]);
    }
    ids.resize(k);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Train/test data, the client partition and the resolved model shape.
struct PreparedData {
  Dataset train;
  Dataset test;
  Partition partition;
  ModelSpec model;
};

inline ModelSpec resolve_model(const ModelSettings& m, const Dataset& ds) {
  ModelSpec spec;
  spec.kind = m.kind;
  spec.input_dim = ds.dim;
  spec.num_classes = static_cast<std::size_t>(ds.num_classes);
  spec.hidden_dim = m.hidden_dim;
  spec.activation = m.activation;
  spec.validate();
  return spec;
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData out;
  const auto& d = cfg.data;
  if (d.source == DataSource::synthetic) {
    auto split = train_test_split(gen_synthetic(d.num_classes, d.dim, d.samples_per_class, d.spread, d.seed),
                                  d.test_fraction, d.seed);
    out.train = std::move(split.train);
    out.test = std::move(split.test);
  } else {
    CsvSchema schema{d.label_column, d.has_header};
    auto all = load_csv_dataset(d.path, schema);
    if (d.test_path.empty()) {
      auto split = train_test_split(all, d.test_fraction, d.seed);
      out.train = std::move(split.train);
      out.test = std::move(split.test);
    } else {
      out.train = std::move(all);
      out.test = load_csv_dataset(d.test_path, schema);
      if (out.test.dim != out.train.dim) throw DataError("test set feature count differs from training set");
      if (out.test.num_classes > out.train.num_classes) throw DataError("test set has labels unseen in training set");
      out.test.num_classes = out.train.num_classes;
    }
  }
  out.partition = d.partition == PartitionScheme::dirichlet
                      ? dirichlet_partition(out.train, cfg.num_clients, d.alpha, cfg.seed)
                      : iid_partition(out.train.size(), cfg.num_clients, cfg.seed);
  out.model = resolve_model(cfg.model, out.train);
  return out;
}

enum class RunStatus { ok, diverged };

inline const char* status_token(RunStatus s) { return s == RunStatus::ok ? "ok" : "diverged"; }

struct RoundMetrics {
  std::uint64_t round = 0;
  std::vector<std::size_t> selected;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  double best_acc = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  std::uint64_t payload_bytes = 0;
  bool evaluated = false;
  RunStatus status = RunStatus::ok;
};

// Everything that evolves across rounds: the server state plus each client's
// persistent control variate (scaf only; zero until first selected).
struct SimulationState {
  ServerState server;
  std::vector<ParamVector> client_c;
};

inline SimulationState initial_state(const ExperimentConfig& cfg, const PreparedData& data) {
  SimulationState s;
  s.server = ServerState::initial(init_params(data.model, cfg.seed));
  if (cfg.opt_c == ClientOpt::scaf)
    s.client_c.assign(data.partition.num_clients(), ParamVector(data.model.param_count(), 0.0));
  return s;
}

struct RunOptions {
  std::size_t threads = 1;
};

inline bool is_checkpoint(const ExperimentConfig& cfg, std::uint64_t round) {
  return round % cfg.eval_every == 0 || round == cfg.rounds;
}

// Bytes moved in one round: broadcast of w (and c), upload of delta (plus
// delta_c or the nova norm).
inline std::uint64_t round_payload_bytes(const ExperimentConfig& cfg, std::size_t params, std::size_t selected) {
  const std::uint64_t vec = 8ull * params;
  std::uint64_t down = vec, up = vec;
  if (cfg.opt_c == ClientOpt::scaf) {
    down += vec;
    up += vec;
  }
  if (cfg.opt_c == ClientOpt::nova) up += 8;
  return (down + up) * selected;
}

// One global round: sample, local training, aggregation, server update and
// (on checkpoints) evaluation. `best_acc` is the best test accuracy before
// this round. Throws DivergenceError if any selected client diverges.
inline RoundMetrics run_round(SimulationState& state, const PreparedData& data, const ExperimentConfig& cfg,
                              std::uint64_t round, double best_acc, const RunOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  RoundMetrics rm;
  rm.round = round;
  rm.selected = sample_clients(data.partition.num_clients(), cfg.sample_ratio, round, cfg.seed);

  const auto ccfg = cfg.client_config();
  const bool scaf = cfg.opt_c == ClientOpt::scaf;
  std::vector<LocalResult> results(rm.selected.size());
  parallel_for(rm.selected.size(), opts.threads, [&](std::size_t j) {
    const auto id = rm.selected[j];
    results[j] = local_train(data.model, data.train, data.partition.assignment[id], state.server.w,
                             scaf ? &state.server.c : nullptr, scaf ? &state.client_c[id] : nullptr, ccfg,
                             ClientContext{id, round, cfg.seed});
  });

  std::vector<ClientUpdate> updates;
  updates.reserve(results.size());
  double loss_sum = 0.0;
  for (auto& r : results) {
    loss_sum += r.update.train_loss;
    if (scaf) state.client_c[r.update.client_id] = std::move(*r.new_local_c);
    updates.push_back(std::move(r.update));
  }
  rm.train_loss = loss_sum / static_cast<double>(updates.size());

  try {
    const auto delta = aggregate(updates, aggregation_mode(cfg.opt_c));
    if (scaf) add_scaled_inplace(state.server.c, aggregate_control(updates), 1.0);
    auto next = server_step(state.server, delta, cfg.server_config());
    state.server = std::move(next);
  } catch (const NonFiniteError& e) {
    throw DivergenceError(round, DivergenceError::kServerSide, 0, e.what());
  }

  rm.best_acc = best_acc;
  if (is_checkpoint(cfg, round)) {
    const auto ev = evaluate(data.model, state.server.w, BatchView(data.test));
    rm.evaluated = true;
    rm.test_loss = ev.loss;
    rm.test_acc = ev.accuracy;
    rm.best_acc = std::isnan(best_acc) ? ev.accuracy : std::max(best_acc, ev.accuracy);
  }
  rm.payload_bytes = round_payload_bytes(cfg, data.model.param_count(), rm.selected.size());
  if (cfg.record_wall_time)
    rm.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  return rm;
}

struct ExperimentResult {
  std::string algorithm;
  ModelSpec model;
  std::vector<RoundMetrics> metrics;  // checkpoint rounds only, plus a sentinel row on divergence
  ParamVector final_w;
  ParamVector best_w;
  double best_acc = std::numeric_limits<double>::quiet_NaN();
  RunStatus status = RunStatus::ok;
  std::string error;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const PreparedData& data,
                                       const RunOptions& opts = {}) {
  ExperimentResult res;
  res.algorithm = cfg.algorithm();
  res.model = data.model;
  auto state = initial_state(cfg, data);
  res.best_w = state.server.w;
  for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
    try {
      auto rm = run_round(state, data, cfg, t, res.best_acc, opts);
      if (!rm.evaluated) continue;
      if (std::isnan(res.best_acc) || rm.test_acc > res.best_acc) res.best_w = state.server.w;
      res.best_acc = rm.best_acc;
      res.metrics.push_back(std::move(rm));
    } catch (const DivergenceError& e) {
      RoundMetrics sentinel;
      sentinel.round = t;
      sentinel.best_acc = res.best_acc;
      sentinel.status = RunStatus::diverged;
      res.metrics.push_back(std::move(sentinel));
      res.status = RunStatus::diverged;
      res.error = e.what();
      break;
    }
  }
  res.final_w = state.server.w;
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  return run_experiment(cfg, prepare_data(cfg), opts);
}

}  // namespace comfed
