#pragma once
// Forward-mode dual numbers with a vector of directional derivatives.
//
// The seed dimension is chosen per evaluation (size()), bounded by the
// compile-time Capacity so that no operation allocates. A Dual with size()
// zero is a constant; mixing constants and variables is allowed, mixing two
// variables of different nonzero sizes is a programming error.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>

#include "ttdioc/simd.hpp"

namespace ttdioc {

template <std::size_t Capacity>
class Dual {
 public:
  static constexpr std::size_t capacity = Capacity;

  constexpr Dual() noexcept : value_(0.0), size_(0) {}
  constexpr Dual(double v) noexcept : value_(v), size_(0) {}  // NOLINT: implicit constants

  Dual(const Dual& o) noexcept : value_(o.value_), size_(o.size_) {
    std::copy_n(o.grad_, size_, grad_);
  }
  Dual& operator=(const Dual& o) noexcept {
    value_ = o.value_;
    size_ = o.size_;
    std::copy_n(o.grad_, size_, grad_);
    return *this;
  }
  Dual& operator=(double v) noexcept {
    value_ = v;
    size_ = 0;
    return *this;
  }

  /// Independent variable number `index` out of `dim` seeds.
  static Dual variable(double v, std::size_t dim, std::size_t index) noexcept {
    assert(dim <= Capacity && index < dim);
    Dual out(v);
    out.size_ = static_cast<std::uint32_t>(dim);
    std::fill_n(out.grad_, dim, 0.0);
    out.grad_[index] = 1.0;
    return out;
  }

  /// Value with a given derivative vector.
  static Dual with_derivatives(double v, std::span<const double> d) noexcept {
    assert(d.size() <= Capacity);
    Dual out(v);
    out.size_ = static_cast<std::uint32_t>(d.size());
    std::copy(d.begin(), d.end(), out.grad_);
    return out;
  }

  double value() const noexcept { return value_; }
  std::size_t size() const noexcept { return size_; }
  double d(std::size_t i) const noexcept { return i < size_ ? grad_[i] : 0.0; }
  std::span<const double> derivatives() const noexcept { return {grad_, size_}; }
  std::span<double> derivatives() noexcept { return {grad_, size_}; }

  Dual& operator+=(const Dual& o) noexcept { return *this = *this + o; }
  Dual& operator-=(const Dual& o) noexcept { return *this = *this - o; }
  Dual& operator*=(const Dual& o) noexcept { return *this = *this * o; }
  Dual& operator/=(const Dual& o) noexcept { return *this = *this / o; }

  /// out = a * x + b * y, both value and derivatives.
  friend Dual combine(double a, const Dual& x, double b, const Dual& y) noexcept {
    Dual out(a * x.value_ + b * y.value_);
    if (x.size_ == y.size_) {
      out.size_ = x.size_;
      if (out.size_ > 0) simd::active().lincomb(a, x.grad_, b, y.grad_, out.grad_, out.size_);
    } else if (y.size_ == 0) {
      out.size_ = x.size_;
      simd::active().scale(a, x.grad_, out.grad_, out.size_);
    } else {
      assert(x.size_ == 0);
      out.size_ = y.size_;
      simd::active().scale(b, y.grad_, out.grad_, out.size_);
    }
    return out;
  }

  /// Applies the chain rule for a scalar function with value fv and slope df.
  friend Dual chain(const Dual& x, double fv, double df) noexcept {
    Dual out(fv);
    out.size_ = x.size_;
    if (out.size_ > 0) simd::active().scale(df, x.grad_, out.grad_, out.size_);
    return out;
  }

  friend Dual operator+(const Dual& a, const Dual& b) noexcept { return combine(1.0, a, 1.0, b); }
  friend Dual operator-(const Dual& a, const Dual& b) noexcept { return combine(1.0, a, -1.0, b); }
  friend Dual operator-(const Dual& a) noexcept { return chain(a, -a.value_, -1.0); }
  friend Dual operator*(const Dual& a, const Dual& b) noexcept {
    Dual out = combine(b.value_, a, a.value_, b);
    out.value_ = a.value_ * b.value_;
    return out;
  }
  friend Dual operator/(const Dual& a, const Dual& b) noexcept {
    const double inv = 1.0 / b.value_;
    const double q = a.value_ * inv;
    Dual out = combine(inv, a, -q * inv, b);
    out.value_ = q;
    return out;
  }

  friend Dual operator+(const Dual& a, double b) noexcept {
    Dual out(a);
    out.value_ += b;
    return out;
  }
  friend Dual operator+(double a, const Dual& b) noexcept { return b + a; }
  friend Dual operator-(const Dual& a, double b) noexcept { return a + (-b); }
  friend Dual operator-(double a, const Dual& b) noexcept { return chain(b, a - b.value_, -1.0); }
  friend Dual operator*(const Dual& a, double b) noexcept { return chain(a, a.value_ * b, b); }
  friend Dual operator*(double a, const Dual& b) noexcept { return b * a; }
  friend Dual operator/(const Dual& a, double b) noexcept { return a * (1.0 / b); }
  friend Dual operator/(double a, const Dual& b) noexcept {
    const double inv = 1.0 / b.value_;
    return chain(b, a * inv, -a * inv * inv);
  }

  friend bool operator<(const Dual& a, const Dual& b) noexcept { return a.value_ < b.value_; }
  friend bool operator>(const Dual& a, const Dual& b) noexcept { return a.value_ > b.value_; }
  friend bool operator<=(const Dual& a, const Dual& b) noexcept { return a.value_ <= b.value_; }
  friend bool operator>=(const Dual& a, const Dual& b) noexcept { return a.value_ >= b.value_; }

  friend Dual sin(const Dual& x) noexcept { return chain(x, std::sin(x.value_), std::cos(x.value_)); }
  friend Dual cos(const Dual& x) noexcept { return chain(x, std::cos(x.value_), -std::sin(x.value_)); }
  friend Dual exp(const Dual& x) noexcept {
    const double e = std::exp(x.value_);
    return chain(x, e, e);
  }
  friend Dual log(const Dual& x) noexcept { return chain(x, std::log(x.value_), 1.0 / x.value_); }
  friend Dual sqrt(const Dual& x) noexcept {
    const double s = std::sqrt(x.value_);
    return chain(x, s, 0.5 / s);
  }
  friend Dual abs(const Dual& x) noexcept { return x.value_ < 0.0 ? -x : x; }
  friend Dual square(const Dual& x) noexcept { return chain(x, x.value_ * x.value_, 2.0 * x.value_); }
  friend bool isfinite(const Dual& x) noexcept { return std::isfinite(x.value_); }

 private:
  double value_;
  std::uint32_t size_;
  double grad_[Capacity];
};

/// Seeds for per-step Jacobians and frequency gradients.
using SmallDual = Dual<16>;
/// Seeds spanning a whole control sequence (N * m <= 384).
using WideDual = Dual<384>;

template <class T>
struct is_dual : std::false_type {};
template <std::size_t C>
struct is_dual<Dual<C>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<std::remove_cvref_t<T>>::value;

inline double value_of(double x) noexcept { return x; }
template <std::size_t C>
double value_of(const Dual<C>& x) noexcept {
  return x.value();
}

inline double square(double x) noexcept { return x * x; }

}  // namespace ttdioc
