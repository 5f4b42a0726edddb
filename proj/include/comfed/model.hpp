#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "comfed/data.hpp"
#include "comfed/params.hpp"
#include "comfed/rng.hpp"

namespace comfed {

enum class ModelKind { logistic, mlp1 };
enum class Activation { relu, tanh };

// Softmax classifiers trained with cross-entropy.
//
// Parameter layout is weights-then-biases, layer by layer, row-major with
// one row per output unit:
//   logistic: W[K x d], b[K]
//   mlp1:     W1[H x d], b1[H], W2[K x H], b2[K]
struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  std::size_t input_dim = 1;
  std::size_t num_classes = 2;
  std::size_t hidden_dim = 16;
  Activation activation = Activation::relu;

  std::size_t param_count() const noexcept {
    if (kind == ModelKind::logistic) return (input_dim + 1) * num_classes;
    return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes;
  }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("model: num_classes must be >= 2");
    if (kind == ModelKind::mlp1 && hidden_dim < 1) throw std::invalid_argument("model: hidden_dim must be >= 1");
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline std::string layout_description(const ModelSpec& spec) {
  if (spec.kind == ModelKind::logistic)
    return "W[num_classes x input_dim] row-major, b[num_classes]";
  return "W1[hidden_dim x input_dim] row-major, b1[hidden_dim], W2[num_classes x hidden_dim] row-major, "
         "b2[num_classes]";
}

// Weights ~ N(0, 1/fan_in), biases zero.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto eng = make_engine(seed, Stream::init);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector p(spec.param_count(), 0.0);
  auto fill_layer = [&](std::size_t offset, std::size_t rows, std::size_t fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < rows * fan_in; ++i) p[offset + i] = scale * normal(eng);
    return offset + rows * fan_in + rows;  // skip the zero biases
  };
  if (spec.kind == ModelKind::logistic) {
    fill_layer(0, spec.num_classes, spec.input_dim);
  } else {
    auto next = fill_layer(0, spec.hidden_dim, spec.input_dim);
    fill_layer(next, spec.num_classes, spec.hidden_dim);
  }
  return p;
}

namespace detail {

// out[r] = b[r] + sum_c W[r][c] * x[c]
inline void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::span<double> out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = b[r];
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
}

// Softmax in place; returns log-sum-exp of the input logits.
inline double softmax_inplace(std::span<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return zmax + std::log(sum);
}

inline std::size_t argmax_lowest(std::span<const double> z) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < z.size(); ++k)
    if (z[k] > z[best]) best = k;
  return best;
}

struct Layers {
  std::span<const double> w1, b1, w2, b2;
};

inline Layers split_params(const ModelSpec& spec, const ParamVector& params) {
  auto all = params.values();
  const std::size_t d = spec.input_dim, k = spec.num_classes, h = spec.hidden_dim;
  if (spec.kind == ModelKind::logistic) return {all.subspan(0, k * d), all.subspan(k * d, k), {}, {}};
  return {all.subspan(0, h * d), all.subspan(h * d, h), all.subspan(h * d + h, k * h),
          all.subspan(h * d + h + k * h, k)};
}

inline double activate(Activation a, double x) noexcept {
  return a == Activation::relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

// Derivative expressed through the pre-activation x and output y.
inline double activate_grad(Activation a, double x, double y) noexcept {
  return a == Activation::relu ? (x > 0.0 ? 1.0 : 0.0) : 1.0 - y * y;
}

inline void check_inputs(const ModelSpec& spec, const ParamVector& params, const BatchView& batch) {
  if (params.size() != spec.param_count())
    throw LengthMismatchError("model: expected " + std::to_string(spec.param_count()) + " parameters, got " +
                              std::to_string(params.size()));
  if (batch.size() == 0) throw std::invalid_argument("model: empty batch");
  if (batch.dim() != spec.input_dim) throw std::invalid_argument("model: feature dimension mismatch");
}

// Logits for one sample. `hidden_pre`/`hidden_out` are only touched for mlp1.
inline void forward(const ModelSpec& spec, const Layers& L, std::span<const double> x,
                    std::vector<double>& hidden_pre, std::vector<double>& hidden_out, std::span<double> logits) {
  if (spec.kind == ModelKind::logistic) {
    affine(L.w1, L.b1, x, logits);
    return;
  }
  affine(L.w1, L.b1, x, hidden_pre);
  for (std::size_t j = 0; j < hidden_pre.size(); ++j) hidden_out[j] = activate(spec.activation, hidden_pre[j]);
  affine(L.w2, L.b2, hidden_out, logits);
}

}  // namespace detail

// Mean cross-entropy over the batch and its exact gradient. Samples are
// accumulated in batch order.
inline LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const BatchView& batch) {
  detail::check_inputs(spec, params, batch);
  const auto L = detail::split_params(spec, params);
  const std::size_t d = spec.input_dim, K = spec.num_classes, H = spec.hidden_dim;
  const bool mlp = spec.kind == ModelKind::mlp1;

  LossGrad out{0.0, ParamVector(params.size(), 0.0)};
  auto g = out.grad.values();
  std::vector<double> z(K), pre(mlp ? H : 0), act(mlp ? H : 0), dh(mlp ? H : 0);

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto x = batch.features(s);
    const auto y = static_cast<std::size_t>(batch.label(s));
    if (y >= K) throw std::invalid_argument("model: label out of range");
    detail::forward(spec, L, x, pre, act, z);
    const double zy = z[y];
    out.loss += detail::softmax_inplace(z) - zy;
    z[y] -= 1.0;  // dL/dlogits

    if (!mlp) {
      for (std::size_t k = 0; k < K; ++k) {
        double* gw = g.data() + k * d;
        for (std::size_t c = 0; c < d; ++c) gw[c] += z[k] * x[c];
        g[K * d + k] += z[k];
      }
      continue;
    }
    const std::size_t off_b1 = H * d, off_w2 = H * d + H, off_b2 = off_w2 + K * H;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      double* gw = g.data() + off_w2 + k * H;
      const double* w2 = L.w2.data() + k * H;
      for (std::size_t j = 0; j < H; ++j) {
        gw[j] += z[k] * act[j];
        dh[j] += w2[j] * z[k];
      }
      g[off_b2 + k] += z[k];
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double da = dh[j] * detail::activate_grad(spec.activation, pre[j], act[j]);
      double* gw = g.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) gw[c] += da * x[c];
      g[off_b1 + j] += da;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv_n;
  for (auto& v : g) v *= inv_n;
  if (!std::isfinite(out.loss) || !out.grad.all_finite())
    throw NonFiniteError("loss_and_grad: non-finite loss or gradient");
  return out;
}

inline double loss_only(const ModelSpec& spec, const ParamVector& params, const BatchView& batch) {
  detail::check_inputs(spec, params, batch);
  const auto L = detail::split_params(spec, params);
  const bool mlp = spec.kind == ModelKind::mlp1;
  std::vector<double> z(spec.num_classes), pre(mlp ? spec.hidden_dim : 0), act(mlp ? spec.hidden_dim : 0);
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    detail::forward(spec, L, batch.features(s), pre, act, z);
    const double zy = z[static_cast<std::size_t>(batch.label(s))];
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    loss += zmax + std::log(sum) - zy;
  }
  return loss / static_cast<double>(batch.size());
}

// Central differences, one coordinate at a time.
inline ParamVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params, const BatchView& batch,
                                    double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  ParamVector g(params.size(), 0.0);
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = loss_only(spec, probe, batch);
    probe[i] = orig - h;
    const double fm = loss_only(spec, probe, batch);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Mean loss and argmax accuracy; ties go to the lowest class index.
inline EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const BatchView& data) {
  detail::check_inputs(spec, params, data);
  const auto L = detail::split_params(spec, params);
  const bool mlp = spec.kind == ModelKind::mlp1;
  std::vector<double> z(spec.num_classes), pre(mlp ? spec.hidden_dim : 0), act(mlp ? spec.hidden_dim : 0);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    detail::forward(spec, L, data.features(s), pre, act, z);
    const auto y = static_cast<std::size_t>(data.label(s));
    if (detail::argmax_lowest(z) == y) ++correct;
    const double zy = z[y];
    loss += detail::softmax_inplace(z) - zy;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace comfed
