#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "ttdioc/dynamics.hpp"

using namespace ttdioc::dynamics;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Fixed-step RK4 with many substeps, written independently of SystemModel.
VectorXd dense_reference(const SystemModel& model, VectorXd x, const VectorXd& u, int substeps) {
  const double h = model.ts() / substeps;
  for (int s = 0; s < substeps; ++s) {
    const VectorXd k1 = model.continuous_deriv(x, u);
    const VectorXd k2 = model.continuous_deriv(x + 0.5 * h * k1, u);
    const VectorXd k3 = model.continuous_deriv(x + 0.5 * h * k2, u);
    const VectorXd k4 = model.continuous_deriv(x + h * k3, u);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

VectorXd random_state(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

}  // namespace

TEST_CASE("dimensions per system") {
  CHECK(SystemModel(SystemKind::spring1).state_dim() == 2);
  CHECK(SystemModel(SystemKind::spring1).input_dim() == 1);
  CHECK(SystemModel(SystemKind::spring3).state_dim() == 6);
  CHECK(SystemModel(SystemKind::spring3).input_dim() == 3);
  CHECK(SystemModel(SystemKind::pendulum2).state_dim() == 4);
  CHECK(SystemModel(SystemKind::pendulum2).input_dim() == 2);
  CHECK(system_kind_from_string("pendulum2") == SystemKind::pendulum2);
  CHECK_THROWS_AS(system_kind_from_string("cartpole"), std::invalid_argument);
  CHECK_THROWS_AS(SystemModel(SystemKind::spring1, {}, 0.0), std::invalid_argument);
}

TEST_CASE("physical parameters are validated") {
  PhysicalParams p;
  p.attach_height = 2.0;  // above the pendulum length
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = PhysicalParams{};
  p.spring[1] = 0.0;
  CHECK_THROWS_AS(SystemModel(SystemKind::spring3, p), std::invalid_argument);
  p = PhysicalParams{};
  p.damping[2] = -0.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("equilibria and decoupling") {
  const SystemModel s3(SystemKind::spring3);
  CHECK(s3.continuous_deriv(VectorXd::Zero(6), VectorXd::Zero(3)).norm() == 0.0);
  CHECK(s3.step(VectorXd::Zero(6), VectorXd::Zero(3)).norm() == 0.0);

  const SystemModel pend(SystemKind::pendulum2);
  const VectorXd xd = pend.continuous_deriv(VectorXd::Zero(4), (VectorXd(2) << 0.8, 0.0).finished());
  const PhysicalParams& p = pend.params();
  CHECK(xd[1] == doctest::Approx(0.8 / (p.pendulum_mass * p.length * p.length)));
  CHECK(xd[3] == 0.0);

  // Identical pendulums: the coupling force vanishes.
  const double c = 0.2;
  const VectorXd sym = (VectorXd(4) << c, c, c, c).finished();
  const VectorXd ds = pend.continuous_deriv(sym, VectorXd::Zero(2));
  CHECK(ds[1] == doctest::Approx(p.gravity / p.length * std::sin(c)).epsilon(1e-14));
  CHECK(ds[1] == ds[3]);
}

TEST_CASE("RK4 step matches a dense reference integration") {
  const SystemModel s1(SystemKind::spring1, {}, 0.1);
  const VectorXd x0 = (VectorXd(2) << 1.0, 0.0).finished();
  const VectorXd ref = dense_reference(s1, x0, VectorXd::Zero(1), 1000);
  CHECK((s1.step(x0, VectorXd::Zero(1)) - ref).cwiseAbs().maxCoeff() <= 1e-7);

}

TEST_CASE("RK4 one-step error has order at least 4.5") {
  std::mt19937_64 rng(2);
  for (SystemKind kind : {SystemKind::spring3, SystemKind::pendulum2}) {
    const int n = SystemModel(kind).state_dim();
    const int m = SystemModel(kind).input_dim();
    const VectorXd x = random_state(n, rng, 0.3);
    const VectorXd u = random_state(m, rng, 0.5);
    std::vector<double> err;
    for (double ts : {0.1, 0.05, 0.025}) {
      const SystemModel model(kind, {}, ts);
      err.push_back((model.step(x, u) - dense_reference(model, x, u, 400)).norm());
    }
    CHECK(std::log2(err[0] / err[1]) >= 4.5);
    CHECK(std::log2(err[1] / err[2]) >= 4.5);
  }
}

TEST_CASE("spring systems are linear") {
  std::mt19937_64 rng(3);
  const SystemModel s3(SystemKind::spring3);
  const VectorXd x = random_state(6, rng);
  const VectorXd u = random_state(3, rng);
  CHECK((s3.step(2.5 * x, 2.5 * u) - 2.5 * s3.step(x, u)).cwiseAbs().maxCoeff() <= 1e-12);

  const VectorXd x2 = random_state(6, rng);
  MatrixXd u1 = MatrixXd::Random(3, 15), u2 = MatrixXd::Random(3, 15);
  const MatrixXd sum = rollout(s3, x + x2, u1 + u2);
  const MatrixXd parts = rollout(s3, x, u1) + rollout(s3, x2, u2);
  CHECK((sum - parts).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rollout unrolls step") {
  std::mt19937_64 rng(4);
  const SystemModel pend(SystemKind::pendulum2);
  const VectorXd x0 = random_state(4, rng, 0.3);
  const MatrixXd u = 0.3 * MatrixXd::Random(2, 12);
  const MatrixXd xs = rollout(pend, x0, u);
  REQUIRE(xs.cols() == 13);
  CHECK(xs.col(0) == x0);
  for (int i = 0; i < 12; ++i) CHECK(xs.col(i + 1) == pend.step(VectorXd(xs.col(i)), VectorXd(u.col(i))));
  CHECK(rollout(pend, x0, MatrixXd(2, 0)).cols() == 1);
}

TEST_CASE("undamped spring energy is conserved") {
  PhysicalParams p;
  p.damping = {0.0, 0.0, 0.0};
  for (SystemKind kind : {SystemKind::spring1, SystemKind::spring3}) {
    const SystemModel model(kind, p, 0.1);
    const int n = model.state_dim();
    VectorXd x = VectorXd::Zero(n);
    // RK4 loses O((omega Ts)^6) of the energy per step; the 1e-6 bound is
    // absolute, for a 0.1 initial displacement.
    x[0] = 0.1;
    const MatrixXd xs = rollout(model, x, MatrixXd::Zero(model.input_dim(), 100));
    // Unit springs make the chain coupling symmetric, so
    // E = 1/2 sum m v^2 + 1/2 k1 x1^2 + 1/2 sum_{i>1} k_i (x_i - x_{i-1})^2.
    auto energy = [&](const VectorXd& s) {
      double e = 0.0, prev = 0.0;
      for (int i = 0; i < n / 2; ++i) {
        e += 0.5 * p.mass[i] * s[2 * i + 1] * s[2 * i + 1];
        e += 0.5 * p.spring[i] * (s[2 * i] - prev) * (s[2 * i] - prev);
        prev = s[2 * i];
      }
      return e;
    };
    const double e0 = energy(x);
    for (int k = 1; k <= 100; ++k) CHECK(std::abs(energy(xs.col(k)) - e0) <= 1e-6);
  }
}

TEST_CASE("step Jacobians match central differences") {
  std::mt19937_64 rng(5);
  for (SystemKind kind : {SystemKind::spring3, SystemKind::pendulum2}) {
    const SystemModel model(kind);
    const int n = model.state_dim(), m = model.input_dim();
    const VectorXd x = random_state(n, rng, 0.3);
    const VectorXd u = random_state(m, rng, 0.5);
    const StepJacobian j = step_jacobian(model, std::span<const double>(x.data(), n), std::span<const double>(u.data(), m));
    CHECK((j.next - model.step(x, u)).norm() <= 1e-14);
    const double h = 1e-6;
    for (int c = 0; c < n + m; ++c) {
      VectorXd xp = x, xm = x, up = u, um = u;
      if (c < n) {
        xp[c] += h;
        xm[c] -= h;
      } else {
        up[c - n] += h;
        um[c - n] -= h;
      }
      const VectorXd fd = (model.step(xp, up) - model.step(xm, um)) / (2.0 * h);
      const VectorXd ad = c < n ? VectorXd(j.dx.col(c)) : VectorXd(j.du.col(c - n));
      CHECK((fd - ad).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("non-finite states raise DivergenceError") {
  const SystemModel s1(SystemKind::spring1);
  VectorXd x(2);
  x << std::numeric_limits<double>::infinity(), 0.0;
  CHECK_THROWS_AS(s1.step(x, VectorXd::Zero(1)), DivergenceError);
}
