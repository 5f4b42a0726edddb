#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "comfed/algorithms.hpp"
#include "comfed/client.hpp"
#include "comfed/params.hpp"

namespace comfed {

struct ServerConfig {
  ServerOpt opt_s = ServerOpt::sgd;
  double server_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  // Apply the adaptive update exactly as printed in the reference formulas:
  // Adam's second moment with a minus sign and w <- beta1*w + lr*m/(sqrt(v)+eps).
  bool literal_eq1 = false;

  friend bool operator==(const ServerConfig&, const ServerConfig&) = default;
};

struct ServerState {
  ParamVector w;
  ParamVector c;  // global control variate, zero unless scaf
  ParamVector m;
  ParamVector v;
  std::uint64_t round = 0;

  static ServerState initial(ParamVector w0) {
    ServerState s;
    const auto n = w0.size();
    s.w = std::move(w0);
    s.c = ParamVector(n, 0.0);
    s.m = ParamVector(n, 0.0);
    s.v = ParamVector(n, 0.0);
    return s;
  }
};

enum class AggregationMode { weighted_avg, nova };

inline AggregationMode aggregation_mode(ClientOpt opt) {
  return opt == ClientOpt::nova ? AggregationMode::nova : AggregationMode::weighted_avg;
}

namespace detail {

inline double total_samples(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no client updates");
  double total = 0.0;
  for (const auto& u : updates) total += static_cast<double>(u.num_samples);
  if (!(total > 0.0)) throw std::invalid_argument("aggregate: zero total samples");
  return total;
}

}  // namespace detail

// weighted_avg: sum_i p'_i delta_i with p'_i = n_i / sum_S n_j.
// nova:         gamma * sum_i p'_i delta_i / |a_i|_1, gamma = sum_i p'_i |a_i|_1.
// Updates are reduced in the order given.
inline ParamVector aggregate(std::span<const ClientUpdate> updates, AggregationMode mode) {
  const double total = detail::total_samples(updates);
  ParamVector acc(updates.front().delta.size(), 0.0);
  if (mode == AggregationMode::weighted_avg) {
    for (const auto& u : updates) add_scaled_inplace(acc, u.delta, static_cast<double>(u.num_samples) / total);
    return acc;
  }
  double gamma = 0.0;
  for (const auto& u : updates) {
    if (!u.a_norm || !(*u.a_norm > 0.0))
      throw std::invalid_argument("aggregate: nova mode needs a positive a_norm on every update");
    const double p = static_cast<double>(u.num_samples) / total;
    gamma += p * *u.a_norm;
    add_scaled_inplace(acc, scaled(u.delta, 1.0 / *u.a_norm), p);
  }
  return scaled(acc, gamma);
}

// sum_i p'_i delta_c_i; the caller applies c <- c + result.
inline ParamVector aggregate_control(std::span<const ClientUpdate> updates) {
  const double total = detail::total_samples(updates);
  ParamVector acc;
  for (const auto& u : updates) {
    if (!u.delta_c) throw std::invalid_argument("aggregate_control: update without delta_c");
    if (acc.empty()) acc = ParamVector(u.delta_c->size(), 0.0);
    add_scaled_inplace(acc, *u.delta_c, static_cast<double>(u.num_samples) / total);
  }
  return acc;
}

// Global model update from the aggregated client update `delta`.
//   sgd:      w <- w + lr * delta
//   adaptive: m <- b1 m + (1-b1) delta
//             adagrad: v <- v + delta^2
//             yogi:    v <- v - (1-b2) delta^2 sign(v - delta^2)
//             adam:    v <- b2 v + (1-b2) delta^2
//             w <- w + lr * m / (sqrt(v) + eps)
inline ServerState server_step(ServerState state, const ParamVector& delta, const ServerConfig& cfg) {
  if (delta.size() != state.w.size()) throw LengthMismatchError("server_step: delta length mismatch");
  if (!delta.all_finite()) throw NonFiniteError("server_step: non-finite delta");
  state.round += 1;
  if (cfg.opt_s == ServerOpt::sgd) {
    state.w = add_scaled(state.w, delta, cfg.server_lr);
    return state;
  }

  const double b1 = cfg.beta1, b2 = cfg.beta2;
  for (std::size_t k = 0; k < delta.size(); ++k) {
    const double d = delta[k];
    const double d2 = d * d;
    state.m[k] = b1 * state.m[k] + (1.0 - b1) * d;
    double& v = state.v[k];
    switch (cfg.opt_s) {
      case ServerOpt::adagrad: v = v + d2; break;
      case ServerOpt::yogi: v = v - (1.0 - b2) * d2 * detail::sign(v - d2); break;
      case ServerOpt::adam: v = cfg.literal_eq1 ? b2 * v - (1.0 - b2) * d2 : b2 * v + (1.0 - b2) * d2; break;
      case ServerOpt::sgd: break;
    }
    const double step = cfg.server_lr * state.m[k] / (std::sqrt(v) + cfg.eps);
    state.w[k] = cfg.literal_eq1 ? b1 * state.w[k] + step : state.w[k] + step;
  }
  detail::require_finite(state.m, "server_step");
  detail::require_finite(state.v, "server_step");
  detail::require_finite(state.w, "server_step");
  return state;
}

}  // namespace comfed
