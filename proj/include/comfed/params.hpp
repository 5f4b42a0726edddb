#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace comfed {

// Raised whenever a numeric kernel would produce NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LengthMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat vector of 64-bit reals. Holds model weights, client updates,
// control variates and the server moments.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  ParamVector(std::initializer_list<double> v) : values_(v) {}
  explicit ParamVector(std::vector<double> v) : values_(std::move(v)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept {
    for (double x : values_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

enum class ElementwiseOp { mul, div_eps, sqrt_a, sign_a };

namespace detail {

inline void require_same_length(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.size() != b.size())
    throw LengthMismatchError(std::string(op) + ": length mismatch (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
}

inline void require_finite(const ParamVector& v, const char* op) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw NonFiniteError(std::string(op) + ": non-finite value at index " + std::to_string(i));
}

inline double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// a + s*b
inline ParamVector add_scaled(const ParamVector& a, const ParamVector& b, double s) {
  detail::require_same_length(a, b, "add_scaled");
  if (!std::isfinite(s)) throw NonFiniteError("add_scaled: non-finite scale");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
  detail::require_finite(out, "add_scaled");
  return out;
}

// In-place a += s*b, same arithmetic as add_scaled.
inline void add_scaled_inplace(ParamVector& a, const ParamVector& b, double s) {
  detail::require_same_length(a, b, "add_scaled_inplace");
  if (!std::isfinite(s)) throw NonFiniteError("add_scaled_inplace: non-finite scale");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] + s * b[i];
  detail::require_finite(a, "add_scaled_inplace");
}

inline ParamVector scaled(const ParamVector& a, double s) {
  if (!std::isfinite(s)) throw NonFiniteError("scaled: non-finite scale");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  detail::require_finite(out, "scaled");
  return out;
}

inline ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  detail::require_same_length(a, b, "subtract");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  detail::require_finite(out, "subtract");
  return out;
}

// Binary ops (mul, div_eps) read both operands; unary ops (sqrt_a, sign_a)
// read only `a` and ignore `b`. div_eps computes a / (b + eps).
inline ParamVector elementwise(const ParamVector& a, const ParamVector& b, ElementwiseOp op,
                               double eps = 0.0) {
  const bool binary = op == ElementwiseOp::mul || op == ElementwiseOp::div_eps;
  if (binary) detail::require_same_length(a, b, "elementwise");
  if (op == ElementwiseOp::div_eps && !(eps > 0.0))
    throw std::invalid_argument("elementwise: div_eps requires eps > 0");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case ElementwiseOp::mul: out[i] = a[i] * b[i]; break;
      case ElementwiseOp::div_eps: out[i] = a[i] / (b[i] + eps); break;
      case ElementwiseOp::sqrt_a: out[i] = std::sqrt(a[i]); break;
      case ElementwiseOp::sign_a: out[i] = detail::sign(a[i]); break;
    }
  }
  detail::require_finite(out, "elementwise");
  return out;
}

inline ParamVector elementwise(const ParamVector& a, ElementwiseOp op) {
  if (op == ElementwiseOp::mul || op == ElementwiseOp::div_eps)
    throw std::invalid_argument("elementwise: binary op requires two operands");
  return elementwise(a, a, op);
}

// Sum of squares, accumulated left to right.
inline double l2_norm_sq(const ParamVector& a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  if (!std::isfinite(acc)) throw NonFiniteError("l2_norm_sq: non-finite result");
  return acc;
}

inline double l1_norm(const ParamVector& a) {
  double acc = 0.0;
  for (double x : a) acc += std::abs(x);
  if (!std::isfinite(acc)) throw NonFiniteError("l1_norm: non-finite result");
  return acc;
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  detail::require_same_length(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace comfed
