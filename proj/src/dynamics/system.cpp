#include <cmath>

#include "ttdioc/dynamics.hpp"

namespace ttdioc::dynamics {

std::string_view to_string(SystemKind kind) noexcept {
  switch (kind) {
    case SystemKind::spring1:
      return "spring1";
    case SystemKind::spring3:
      return "spring3";
    case SystemKind::pendulum2:
      return "pendulum2";
  }
  return "unknown";
}

SystemKind system_kind_from_string(std::string_view name) {
  if (name == "spring1") return SystemKind::spring1;
  if (name == "spring3") return SystemKind::spring3;
  if (name == "pendulum2") return SystemKind::pendulum2;
  throw std::invalid_argument("unknown system kind: " + std::string(name));
}

void PhysicalParams::validate() const {
  const auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("physical parameter must be positive: ") + what);
    }
  };
  for (double v : mass) positive(v, "mass");
  for (double v : spring) positive(v, "spring");
  const auto nonnegative = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("physical parameter must be nonnegative: ") + what);
    }
  };
  for (double v : damping) nonnegative(v, "damping");
  positive(length, "length");
  positive(attach_height, "attach_height");
  positive(pendulum_mass, "pendulum_mass");
  positive(pendulum_spring, "pendulum_spring");
  nonnegative(pendulum_damping, "pendulum_damping");
  positive(gravity, "gravity");
  if (attach_height > length) throw std::invalid_argument("attach_height must not exceed length");
}

SystemModel::SystemModel(SystemKind kind, PhysicalParams params, double ts)
    : kind_(kind), params_(params), ts_(ts) {
  params_.validate();
  if (!(ts > 0.0) || !std::isfinite(ts)) throw std::invalid_argument("sampling time must be positive");
  switch (kind) {
    case SystemKind::spring1:
      n_ = 2;
      m_ = 1;
      break;
    case SystemKind::spring3:
      n_ = 6;
      m_ = 3;
      break;
    case SystemKind::pendulum2:
      n_ = 4;
      m_ = 2;
      break;
  }
}

Eigen::VectorXd SystemModel::continuous_deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  if (x.size() != n_ || u.size() != m_) throw std::invalid_argument("continuous_deriv: dimension mismatch");
  Eigen::VectorXd out(n_);
  continuous_deriv<double>(std::span<const double>(x.data(), n_), std::span<const double>(u.data(), m_),
                           std::span<double>(out.data(), n_));
  return out;
}

Eigen::VectorXd SystemModel::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  if (x.size() != n_ || u.size() != m_) throw std::invalid_argument("step: dimension mismatch");
  Eigen::VectorXd out(n_);
  step<double>(std::span<const double>(x.data(), n_), std::span<const double>(u.data(), m_),
               std::span<double>(out.data(), n_));
  if (!out.allFinite()) throw DivergenceError("step produced a non-finite state");
  return out;
}

Eigen::MatrixXd rollout(const SystemModel& model, const Eigen::VectorXd& x0, const Eigen::MatrixXd& u) {
  const int n = model.state_dim();
  if (x0.size() != n || (u.cols() > 0 && u.rows() != model.input_dim())) {
    throw std::invalid_argument("rollout: dimension mismatch");
  }
  Eigen::MatrixXd xs(n, u.cols() + 1);
  xs.col(0) = x0;
  for (Eigen::Index i = 0; i < u.cols(); ++i) xs.col(i + 1) = model.step(xs.col(i), u.col(i));
  return xs;
}

StepJacobian step_jacobian(const SystemModel& model, std::span<const double> x, std::span<const double> u) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  const std::size_t dim = static_cast<std::size_t>(n + m);
  std::array<SmallDual, kMaxState> xd, nd;
  std::array<SmallDual, kMaxInput> ud;
  for (int i = 0; i < n; ++i) xd[i] = SmallDual::variable(x[i], dim, i);
  for (int j = 0; j < m; ++j) ud[j] = SmallDual::variable(u[j], dim, n + j);
  model.step<SmallDual>(std::span<const SmallDual>(xd.data(), n), std::span<const SmallDual>(ud.data(), m),
                        std::span<SmallDual>(nd.data(), n));
  StepJacobian out;
  out.next.resize(n);
  out.dx.resize(n, n);
  out.du.resize(n, m);
  for (int i = 0; i < n; ++i) {
    out.next[i] = nd[i].value();
    for (int k = 0; k < n; ++k) out.dx(i, k) = nd[i].d(k);
    for (int j = 0; j < m; ++j) out.du(i, j) = nd[i].d(n + j);
  }
  if (!out.next.allFinite()) throw DivergenceError("step produced a non-finite state");
  return out;
}

}  // namespace ttdioc::dynamics
