#pragma once
// Cost structure: stage features phi(x, u), the trigonometric time basis, the
// time-varying weight model Theta(t) = Omega(W, t) A, and the ground-truth
// weight profiles of the benchmark problems.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttdioc/dual.hpp"

namespace ttdioc::cost {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A vector-valued stage map (x, u) -> R^k that can be evaluated with plain
/// doubles and with both dual-number widths. Construct from a generic lambda
/// taking (span<const T> x, span<const T> u, span<T> out).
class StageMap {
 public:
  template <class T>
  using Fn = std::function<void(std::span<const T>, std::span<const T>, std::span<T>)>;

  StageMap() = default;

  template <class F>
  static StageMap from_generic(int dim, std::string tag, F f) {
    StageMap s;
    s.dim_ = dim;
    s.tag_ = std::move(tag);
    s.f_double_ = f;
    s.f_small_ = f;
    s.f_wide_ = f;
    return s;
  }

  int dim() const noexcept { return dim_; }
  bool empty() const noexcept { return dim_ == 0; }
  const std::string& tag() const noexcept { return tag_; }

  template <class T>
  void operator()(std::span<const T> x, std::span<const T> u, std::span<T> out) const {
    if constexpr (std::is_same_v<T, double>) {
      f_double_(x, u, out);
    } else if constexpr (std::is_same_v<T, SmallDual>) {
      f_small_(x, u, out);
    } else {
      static_assert(std::is_same_v<T, WideDual>, "unsupported scalar type");
      f_wide_(x, u, out);
    }
  }

  Vector operator()(const Vector& x, const Vector& u) const;

 private:
  int dim_ = 0;
  std::string tag_;
  Fn<double> f_double_;
  Fn<SmallDual> f_small_;
  Fn<WideDual> f_wide_;
};

/// Feature vector phi(x, u) of dimension q.
using FeatureMap = StageMap;

/// Squares of all states followed by squares of all inputs (q = n + m).
FeatureMap squared_features(int state_dim, int input_dim);

/// Omega(W, t) = [1, cos(w1 t), sin(w1 t), ..., cos(wE t), sin(wE t)].
Vector omega(std::span<const double> frequencies, double t);

/// Same basis evaluated for any scalar type of the frequencies.
template <class T>
void omega(std::span<const T> frequencies, double t, std::span<T> out) {
  using std::cos;
  using std::sin;
  out[0] = T(1.0);
  for (std::size_t e = 0; e < frequencies.size(); ++e) {
    const T arg = frequencies[e] * t;
    out[2 * e + 1] = cos(arg);
    out[2 * e + 2] = sin(arg);
  }
}

/// Frequency set W and coefficient matrix A ((2E+1) x q). Row 0 is the bias.
class TrigTimeModel {
 public:
  TrigTimeModel() = default;
  /// Throws std::invalid_argument unless W is strictly increasing and
  /// A has 2E+1 rows.
  TrigTimeModel(std::vector<double> frequencies, Matrix coefficients);

  /// Constant model: E = 0, A = bias row.
  static TrigTimeModel constant(const Vector& theta);

  int basis_count() const noexcept { return static_cast<int>(frequencies_.size()); }
  int rows() const noexcept { return 2 * basis_count() + 1; }
  int feature_dim() const noexcept { return static_cast<int>(coefficients_.cols()); }
  const std::vector<double>& frequencies() const noexcept { return frequencies_; }
  const Matrix& coefficients() const noexcept { return coefficients_; }

  /// Theta(t) as a q-vector.
  Vector theta(double t) const;

  /// Uniform positive rescaling of A.
  TrigTimeModel scaled(double factor) const;

 private:
  std::vector<double> frequencies_;
  Matrix coefficients_;
};

/// Benchmark problems: sys1 = three-mass spring-damper, sys2 = coupled
/// inverted pendulums, spring1 = single-mass spring-damper.
enum class Benchmark { sys1, sys2, spring1 };

std::string_view to_string(Benchmark b) noexcept;
Benchmark benchmark_from_string(std::string_view name);

enum class ProfileKind { trig, poly, exp, constant, harmonic };

/// Time-varying weight used for the one time-dependent slot of a benchmark.
struct TruthProfile {
  ProfileKind kind = ProfileKind::trig;
  double constant = 0.0;  // ProfileKind::constant
  int order = 0;          // ProfileKind::harmonic

  double value(double t) const;

  /// Tags: "thetam1", "thetam2", "thetam3", "const:<value>", "harmonic:<order>".
  std::string tag() const;
  static TruthProfile parse(std::string_view tag);
};

/// Index of the time-varying weight within Theta.
int time_varying_slot(Benchmark b) noexcept;

/// Full ground-truth Theta(t) for a benchmark.
Vector truth_theta(Benchmark b, const TruthProfile& profile, double t);

/// Theta as a function of absolute time.
using ThetaSchedule = std::function<Vector(double)>;

ThetaSchedule schedule_of(const TrigTimeModel& model);
ThetaSchedule schedule_of(Benchmark b, const TruthProfile& profile);

/// Theta(t) . phi(x, u).
double stage_cost(const TrigTimeModel& model, const FeatureMap& features, double t, const Vector& x,
                  const Vector& u);

}  // namespace ttdioc::cost
