#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace comfed {

// Client-side variance-reduction mechanism.
enum class ClientOpt { sgd, prox, scaf, nova };
// Server-side update rule.
enum class ServerOpt { sgd, adam, adagrad, yogi };

inline constexpr std::array<ClientOpt, 4> kAllClientOpts{ClientOpt::sgd, ClientOpt::prox, ClientOpt::scaf,
                                                         ClientOpt::nova};
inline constexpr std::array<ServerOpt, 4> kAllServerOpts{ServerOpt::sgd, ServerOpt::adam, ServerOpt::adagrad,
                                                         ServerOpt::yogi};

inline std::string_view token(ClientOpt o) {
  switch (o) {
    case ClientOpt::sgd: return "sgd";
    case ClientOpt::prox: return "prox";
    case ClientOpt::scaf: return "scaf";
    case ClientOpt::nova: return "nova";
  }
  return "?";
}

inline std::string_view token(ServerOpt o) {
  switch (o) {
    case ServerOpt::sgd: return "sgd";
    case ServerOpt::adam: return "adam";
    case ServerOpt::adagrad: return "adagrad";
    case ServerOpt::yogi: return "yogi";
  }
  return "?";
}

inline std::optional<ClientOpt> parse_client_opt(std::string_view s) {
  for (auto o : kAllClientOpts)
    if (token(o) == s) return o;
  return std::nullopt;
}

inline std::optional<ServerOpt> parse_server_opt(std::string_view s) {
  for (auto o : kAllServerOpts)
    if (token(o) == s) return o;
  return std::nullopt;
}

// Name of the (client, server) combination, e.g. FedAvg, ProxYogi, Scaffold.
inline std::string algorithm_name(ClientOpt c, ServerOpt s) {
  static constexpr std::array<std::array<std::string_view, 4>, 4> names{{
      {"FedAvg", "FedAdam", "FedAdagrad", "FedYogi"},
      {"FedProx", "ProxAdam", "ProxAdagrad", "ProxYogi"},
      {"Scaffold", "ScafAdam", "ScafAdagrad", "ScafYogi"},
      {"FedNova", "NovaAdam", "NovaAdagrad", "NovaYogi"},
  }};
  return std::string(names[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]);
}

// Mechanical name: SgdSgd, ProxYogi, ...
inline std::string combination_name(ClientOpt c, ServerOpt s) {
  auto cap = [](std::string_view t) {
    std::string out(t);
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
  };
  return cap(token(c)) + cap(token(s));
}

}  // namespace comfed
