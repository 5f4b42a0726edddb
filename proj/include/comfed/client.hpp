#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "comfed/algorithms.hpp"
#include "comfed/data.hpp"
#include "comfed/model.hpp"
#include "comfed/params.hpp"

namespace comfed {

enum class ScafOption { I, II };

struct ClientConfig {
  ClientOpt opt_c = ClientOpt::sgd;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double prox_mu = 0.005;
  ScafOption scaf_option = ScafOption::I;

  friend bool operator==(const ClientConfig&, const ClientConfig&) = default;
};

// What a client sends back after one round of local training.
struct ClientUpdate {
  std::size_t client_id = 0;
  ParamVector delta;                   // w_i - w
  std::optional<ParamVector> delta_c;  // scaf only
  std::optional<double> a_norm;        // nova only
  std::size_t num_samples = 0;
  std::size_t num_steps = 0;           // tau_i
  double train_loss = 0.0;             // sample-weighted mean loss over the final epoch
};

struct LocalResult {
  ClientUpdate update;
  std::optional<ParamVector> new_local_c;
};

// Identifies one client's work in one round; all client randomness derives
// from (seed, client_id, round).
struct ClientContext {
  std::size_t client_id = 0;
  std::uint64_t round = 0;
  std::uint64_t seed = 0;
};

// `client` is kServerSide when the server update itself produced non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  static constexpr std::size_t kServerSide = std::numeric_limits<std::size_t>::max();

  DivergenceError(std::uint64_t round, std::size_t client, std::size_t step, const std::string& what)
      : std::runtime_error("diverged in round " + std::to_string(round) +
                           (client == kServerSide ? std::string(" at the server")
                                                  : ", client " + std::to_string(client) + ", step " +
                                                        std::to_string(step)) +
                           ": " + what),
        round_(round),
        client_(client),
        step_(step) {}

  std::uint64_t round() const noexcept { return round_; }
  std::size_t client() const noexcept { return client_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::uint64_t round_;
  std::size_t client_;
  std::size_t step_;
};

// L1 norm of the coefficients with which heavy-ball momentum
// (u <- rho*u + g, w <- w - lr*u) accumulates tau gradients into w - w_0.
inline double a_norm(double momentum, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("a_norm: steps must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("a_norm: momentum must be in [0,1)");
  const double tau = static_cast<double>(steps);
  if (momentum == 0.0) return tau;
  const double rho = momentum;
  return (tau - rho * (1.0 - std::pow(rho, tau)) / (1.0 - rho)) / (1.0 - rho);
}

inline std::size_t local_steps(std::size_t num_samples, const ClientConfig& cfg) {
  return cfg.local_epochs * num_batches(num_samples, cfg.batch_size);
}

// Option I:  gradient of the local loss at the round-start model over the full shard.
// Option II: c_i - c + (w - w_i) / (steps * lr).
inline ParamVector update_control_variate(ScafOption option, const ParamVector& global_w, const ParamVector& final_w,
                                          const ParamVector& global_c, const ParamVector& local_c,
                                          const ModelSpec& spec, const Dataset& data,
                                          std::span<const std::size_t> shard, std::size_t steps, double lr) {
  if (option == ScafOption::I) return loss_and_grad(spec, global_w, BatchView(data, shard)).grad;
  if (steps < 1 || !(lr > 0.0)) throw std::invalid_argument("update_control_variate: option II needs steps >= 1, lr > 0");
  auto out = subtract(local_c, global_c);
  add_scaled_inplace(out, subtract(global_w, final_w), 1.0 / (static_cast<double>(steps) * lr));
  return out;
}

// One client's local phase for a round. Starts from the broadcast model with a
// zeroed momentum buffer. Each step forms the corrected gradient
//   sgd/nova: g      scaf: g + (c - c_i)      prox: g + mu (w_i - w)
// then u <- rho u + (g_hat + lambda w_i), w_i <- w_i - lr u.
// `global_c` and `local_c` are required exactly when opt_c is scaf.
inline LocalResult local_train(const ModelSpec& spec, const Dataset& data, std::span<const std::size_t> shard,
                               const ParamVector& global_w, const ParamVector* global_c,
                               const ParamVector* local_c, const ClientConfig& cfg, const ClientContext& ctx) {
  const bool scaf = cfg.opt_c == ClientOpt::scaf;
  if (shard.empty()) throw DataError("local_train: client " + std::to_string(ctx.client_id) + " has no data");
  if (scaf != (global_c != nullptr) || scaf != (local_c != nullptr))
    throw std::invalid_argument("local_train: control variates must be given exactly when opt_c is scaf");
  if (cfg.batch_size < 1 || cfg.local_epochs < 1) throw std::invalid_argument("local_train: bad epochs/batch size");

  ParamVector w = global_w;
  ParamVector u(w.size(), 0.0);
  std::optional<ParamVector> correction;
  if (scaf) correction = subtract(*global_c, *local_c);

  std::size_t step = 0;
  double epoch_loss = 0.0;
  try {
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
      epoch_loss = 0.0;
      const auto batches = epoch_batches(shard, cfg.batch_size, ctx.seed, ctx.client_id, ctx.round, epoch);
      for (const auto& batch : batches) {
        auto [loss, g] = loss_and_grad(spec, w, BatchView(data, batch));
        epoch_loss += loss * static_cast<double>(batch.size());
        switch (cfg.opt_c) {
          case ClientOpt::sgd:
          case ClientOpt::nova: break;
          case ClientOpt::scaf: add_scaled_inplace(g, *correction, 1.0); break;
          case ClientOpt::prox: add_scaled_inplace(g, subtract(w, global_w), cfg.prox_mu); break;
        }
        add_scaled_inplace(g, w, cfg.weight_decay);
        for (std::size_t k = 0; k < u.size(); ++k) u[k] = cfg.momentum * u[k] + g[k];
        add_scaled_inplace(w, u, -cfg.lr);
        ++step;
      }
    }
  } catch (const NonFiniteError& e) {
    throw DivergenceError(ctx.round, ctx.client_id, step, e.what());
  }

  LocalResult out;
  auto& upd = out.update;
  upd.client_id = ctx.client_id;
  upd.num_samples = shard.size();
  upd.num_steps = step;
  upd.train_loss = epoch_loss / static_cast<double>(shard.size());
  try {
    upd.delta = subtract(w, global_w);
    if (cfg.opt_c == ClientOpt::nova) upd.a_norm = a_norm(cfg.momentum, step);
    if (scaf) {
      auto fresh = update_control_variate(cfg.scaf_option, global_w, w, *global_c, *local_c, spec, data, shard,
                                          step, cfg.lr);
      upd.delta_c = subtract(fresh, *local_c);
      out.new_local_c = std::move(fresh);
    }
  } catch (const NonFiniteError& e) {
    throw DivergenceError(ctx.round, ctx.client_id, step, e.what());
  }
  return out;
}

}  // namespace comfed
