#pragma once
// Benchmark system models: continuous dynamics, RK4 discretization with a
// zero-order-hold input, rollouts and per-step Jacobians.
//
// State orderings follow the cost tables:
//   spring1   (x, xdot)                         input f
//   spring3   (x1, x1dot, x2, x2dot, x3, x3dot) inputs (f1, f2, f3)
//   pendulum2 (phi1, phi1dot, phi2, phi2dot)     inputs (tau1, tau2)

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ttdioc/dual.hpp"

namespace ttdioc::dynamics {

enum class SystemKind { spring1, spring3, pendulum2 };

std::string_view to_string(SystemKind kind) noexcept;
SystemKind system_kind_from_string(std::string_view name);

inline constexpr int kMaxState = 6;
inline constexpr int kMaxInput = 3;

struct PhysicalParams {
  std::array<double, 3> mass{1.0, 1.0, 1.0};       // kg
  std::array<double, 3> spring{1.0, 1.0, 1.0};     // N/m
  std::array<double, 3> damping{0.5, 0.5, 0.5};    // N s/m
  double length = 1.0;                             // m
  double attach_height = 0.5;                      // m
  double pendulum_mass = 1.0;                      // kg
  double pendulum_spring = 1.0;                    // N/m
  double pendulum_damping = 0.5;                   // N s/m
  double gravity = 9.81;                           // m/s^2

  /// Throws std::invalid_argument unless all constants are strictly positive
  /// (dampers may be zero) and attach_height <= length.
  void validate() const;
};

/// Non-finite state produced by a step.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SystemModel {
 public:
  explicit SystemModel(SystemKind kind, PhysicalParams params = {}, double ts = 0.1);

  SystemKind kind() const noexcept { return kind_; }
  int state_dim() const noexcept { return n_; }
  int input_dim() const noexcept { return m_; }
  double ts() const noexcept { return ts_; }
  const PhysicalParams& params() const noexcept { return params_; }

  SystemModel with_ts(double ts) const { return SystemModel(kind_, params_, ts); }

  template <class T>
  void continuous_deriv(std::span<const T> x, std::span<const T> u, std::span<T> xdot) const;

  /// One RK4 interval of length ts with u held constant. Unchecked; usable
  /// with dual scalars.
  template <class T>
  void step(std::span<const T> x, std::span<const T> u, std::span<T> next) const;

  /// Checked double-precision step; throws DivergenceError on non-finite
  /// output.
  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

  Eigen::VectorXd continuous_deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

 private:
  SystemKind kind_;
  PhysicalParams params_;
  double ts_;
  int n_;
  int m_;
};

/// States F_0..F_N (columns) for inputs U (m x N, column i = u_i).
Eigen::MatrixXd rollout(const SystemModel& model, const Eigen::VectorXd& x0, const Eigen::MatrixXd& u);

struct StepJacobian {
  Eigen::VectorXd next;
  Eigen::MatrixXd dx;  // n x n
  Eigen::MatrixXd du;  // n x m
};

/// Next state and its partial derivatives through forward-mode AD.
StepJacobian step_jacobian(const SystemModel& model, std::span<const double> x, std::span<const double> u);

// ---------------------------------------------------------------------------

template <class T>
void SystemModel::continuous_deriv(std::span<const T> x, std::span<const T> u, std::span<T> xdot) const {
  using std::cos;
  using std::sin;
  const PhysicalParams& p = params_;
  switch (kind_) {
    case SystemKind::spring1: {
      xdot[0] = x[1];
      xdot[1] = (-p.spring[0] * x[0] - p.damping[0] * x[1] + u[0]) / p.mass[0];
      return;
    }
    case SystemKind::spring3: {
      const T& x1 = x[0];
      const T& v1 = x[1];
      const T& x2 = x[2];
      const T& v2 = x[3];
      const T& x3 = x[4];
      const T& v3 = x[5];
      const auto& k = p.spring;
      const auto& d = p.damping;
      xdot[0] = v1;
      xdot[1] = (-(k[0] + k[1]) * x1 - (d[0] + d[1]) * v1 + k[1] * x2 + d[1] * v2 + u[0]) / p.mass[0];
      xdot[2] = v2;
      // Coupling back to mass 1 uses (k1, d1), as in the reference model.
      xdot[3] = (k[0] * x1 + d[0] * v1 - (k[1] + k[2]) * x2 - (d[1] + d[2]) * v2 + k[2] * x3 +
                 d[2] * v3 + u[1]) /
                p.mass[1];
      xdot[4] = v3;
      xdot[5] = (k[2] * x2 + d[2] * v2 - k[2] * x3 - d[2] * v3 + u[2]) / p.mass[2];
      return;
    }
    case SystemKind::pendulum2: {
      const T& phi1 = x[0];
      const T& w1 = x[1];
      const T& phi2 = x[2];
      const T& w2 = x[3];
      const double a = p.attach_height;
      const T s1 = sin(phi1);
      const T s2 = sin(phi2);
      const T c1 = cos(phi1);
      const T c2 = cos(phi2);
      const T force = (p.pendulum_spring * a) * (s2 - s1) + (p.pendulum_damping * a) * (c2 * w2 - c1 * w1);
      const double inertia = p.pendulum_mass * p.length * p.length;
      const double gl = p.gravity / p.length;
      xdot[0] = w1;
      xdot[1] = gl * s1 + a * (c1 * force) + u[0] / inertia;
      xdot[2] = w2;
      xdot[3] = gl * s2 - a * (c2 * force) + u[1] / inertia;
      return;
    }
  }
}

template <class T>
void SystemModel::step(std::span<const T> x, std::span<const T> u, std::span<T> next) const {
  std::array<T, kMaxState> k1{}, k2{}, k3{}, k4{}, tmp{};
  const std::span<T> s1(k1.data(), n_), s2(k2.data(), n_), s3(k3.data(), n_), s4(k4.data(), n_);
  const std::span<T> st(tmp.data(), n_);
  const double h = ts_;

  continuous_deriv<T>(x, u, s1);
  for (int i = 0; i < n_; ++i) st[i] = x[i] + (0.5 * h) * s1[i];
  continuous_deriv<T>(st, u, s2);
  for (int i = 0; i < n_; ++i) st[i] = x[i] + (0.5 * h) * s2[i];
  continuous_deriv<T>(st, u, s3);
  for (int i = 0; i < n_; ++i) st[i] = x[i] + h * s3[i];
  continuous_deriv<T>(st, u, s4);
  for (int i = 0; i < n_; ++i) next[i] = x[i] + (h / 6.0) * (s1[i] + 2.0 * s2[i] + 2.0 * s3[i] + s4[i]);
}

}  // namespace ttdioc::dynamics
