#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "ttdioc/focp.hpp"
#include "ttdioc/kktioc.hpp"

using namespace ttdioc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

cost::ThetaSchedule constant_theta(const VectorXd& theta) {
  return [theta](double) { return theta; };
}

focp::FocpProblem spring1_problem(int horizon, const VectorXd& x0, const VectorXd& xn) {
  focp::FocpProblem p;
  p.model = dynamics::SystemModel(dynamics::SystemKind::spring1, {}, 0.1);
  p.features = cost::squared_features(2, 1);
  p.theta = constant_theta(VectorXd::Ones(3));
  p.x0 = x0;
  p.xn = xn;
  p.horizon = horizon;
  return p;
}

// Discrete-time LQR with a terminal equality, solved as one KKT system.
// The RK4 map of a linear system with held input is x+ = P(hA) x + h S(hA) B u
// with P, S the degree-4 and degree-3 Taylor polynomials below.
VectorXd lqr_oracle(int n_steps, const VectorXd& x0, const VectorXd& xn, double q, double r) {
  const double h = 0.1;
  MatrixXd a(2, 2);
  a << 0, 1, -1, -0.5;  // unit mass and spring, damping 0.5
  const VectorXd b = (VectorXd(2) << 0, 1).finished();
  const MatrixXd ha = h * a, i2 = MatrixXd::Identity(2, 2);
  const MatrixXd ad = i2 + ha + ha * ha / 2.0 + ha * ha * ha / 6.0 + ha * ha * ha * ha / 24.0;
  const VectorXd bd = h * (i2 + ha / 2.0 + ha * ha / 6.0 + ha * ha * ha / 24.0) * b;

  // x_i = Phi_i x0 + Gamma_i U for i = 0..N.
  std::vector<MatrixXd> gamma(n_steps + 1, MatrixXd::Zero(2, n_steps));
  std::vector<VectorXd> free(n_steps + 1);
  free[0] = x0;
  for (int i = 0; i < n_steps; ++i) {
    free[i + 1] = ad * free[i];
    gamma[i + 1] = ad * gamma[i];
    gamma[i + 1].col(i) += bd;
  }
  MatrixXd hess = r * MatrixXd::Identity(n_steps, n_steps);
  VectorXd lin = VectorXd::Zero(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    hess += q * gamma[i].transpose() * gamma[i];
    lin += q * gamma[i].transpose() * free[i];
  }
  MatrixXd kkt = MatrixXd::Zero(n_steps + 2, n_steps + 2);
  kkt.topLeftCorner(n_steps, n_steps) = hess;
  kkt.topRightCorner(n_steps, 2) = gamma[n_steps].transpose();
  kkt.bottomLeftCorner(2, n_steps) = gamma[n_steps];
  VectorXd rhs(n_steps + 2);
  rhs << -lin, xn - free[n_steps];
  return kkt.fullPivLu().solve(rhs).head(n_steps);
}

}  // namespace

TEST_CASE("spring1 matches the LQR oracle") {
  const VectorXd x0 = (VectorXd(2) << 1.0, 0.0).finished();
  for (const VectorXd& xn : {VectorXd(VectorXd::Zero(2)), VectorXd((VectorXd(2) << 0.2, -0.1).finished())}) {
    const focp::FocpProblem p = spring1_problem(20, x0, xn);
    const focp::FocpSolution sol = focp::solve_forward(p);
    REQUIRE(sol.converged);
    const VectorXd oracle = lqr_oracle(20, x0, xn, 1.0, 1.0);
    CHECK((sol.u.row(0).transpose() - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(sol.terminal_residual <= 1e-8);
    CHECK((sol.x.col(20) - xn).norm() == doctest::Approx(sol.terminal_residual).epsilon(1e-6));
  }
}

TEST_CASE("origin to origin costs nothing") {
  focp::FocpProblem p;
  p.model = dynamics::SystemModel(dynamics::SystemKind::spring3);
  p.features = cost::squared_features(6, 3);
  p.theta = cost::schedule_of(cost::Benchmark::sys1, cost::TruthProfile{});
  p.x0 = VectorXd::Zero(6);
  p.xn = VectorXd::Zero(6);
  p.horizon = 15;
  const focp::FocpSolution sol = focp::solve_forward(p);
  CHECK(sol.u.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sol.cost == 0.0);
}

TEST_CASE("positive rescaling of Theta leaves the optimizer unchanged") {
  focp::FocpProblem p;
  p.model = dynamics::SystemModel(dynamics::SystemKind::spring3);
  p.features = cost::squared_features(6, 3);
  p.theta = cost::schedule_of(cost::Benchmark::sys1, cost::TruthProfile{});
  p.x0 = (VectorXd(6) << 0.5, 0.0, -0.3, 0.2, 0.1, 0.0).finished();
  p.xn = VectorXd::Zero(6);
  p.t0 = 0.5;
  p.horizon = 30;
  const focp::FocpSolution a = focp::solve_forward(p);
  focp::FocpProblem q = p;
  const cost::ThetaSchedule base = p.theta;
  q.theta = [base](double t) { return VectorXd(2.0 * base(t)); };
  const focp::FocpSolution b = focp::solve_forward(q);
  CHECK((a.u - b.u).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(b.cost == doctest::Approx(2.0 * a.cost).epsilon(1e-8));
  CHECK((b.upsilon - 2.0 * a.upsilon).norm() <= 1e-6 * std::max(1.0, b.upsilon.norm()));
}

TEST_CASE("stationarity and multipliers at the optimum") {
  focp::FocpProblem p;
  p.model = dynamics::SystemModel(dynamics::SystemKind::pendulum2);
  p.features = cost::squared_features(4, 2);
  p.theta = cost::schedule_of(cost::Benchmark::sys2, cost::TruthProfile::parse("thetam2"));
  p.x0 = (VectorXd(4) << 0.2, -0.1, -0.25, 0.05).finished();
  p.xn = VectorXd::Zero(4);
  p.horizon = 20;
  const focp::FocpSolution sol = focp::solve_forward(p);
  REQUIRE(sol.converged);
  CHECK(sol.terminal_residual <= 1e-8);
  const MatrixXd grad = focp::lagrangian_gradient(p, sol.u, sol.lambda, sol.upsilon);
  CHECK(grad.norm() <= 1e-6);
  CHECK(grad.norm() == doctest::Approx(sol.stationarity).epsilon(1e-6));
  // The independent AD route agrees.
  TrajectorySegment seg;
  seg.ts = 0.1;
  seg.x = sol.x;
  seg.u = sol.u;
  const kktioc::IocModel model{p.model, p.features, p.constraints, 1e-6};
  const VectorXd r = kktioc::stationarity_residual(model, seg, p.theta, sol.lambda, sol.upsilon);
  CHECK(r.norm() <= 1e-6);
  for (std::size_t k = 1; k < sol.al_trace.size(); ++k) {
    CHECK(sol.al_trace[k] >= sol.al_trace[k - 1] - 1e-9 * std::abs(sol.al_trace[k - 1]));
  }
}

TEST_CASE("input box: complementary slackness") {
  focp::FocpProblem p = spring1_problem(40, (VectorXd(2) << 1.0, 0.0).finished(), VectorXd::Zero(2));
  p.constraints = focp::ConstraintSet::input_box(1, 0.3);
  const focp::FocpSolution sol = focp::solve_forward(p);
  REQUIRE(sol.converged);
  CHECK(sol.u.cwiseAbs().maxCoeff() <= 0.3 + 1e-6);
  CHECK(sol.active.count() > 0);
  CHECK(sol.lambda.minCoeff() >= 0.0);
  for (int i = 0; i < p.horizon; ++i) {
    const VectorXd g = p.constraints.map()(VectorXd(sol.x.col(i)), VectorXd(sol.u.col(i)));
    for (int c = 0; c < g.size(); ++c) {
      CHECK(std::abs(sol.lambda(i, c) * g[c]) <= 1e-8);
      if (g[c] < -1e-6) CHECK(sol.lambda(i, c) == 0.0);
    }
  }
  CHECK(focp::lagrangian_gradient(p, sol.u, sol.lambda, sol.upsilon).norm() <= 1e-6);
}

TEST_CASE("unreachable terminal state raises InfeasibleError") {
  focp::FocpProblem p = spring1_problem(2, VectorXd::Zero(2), (VectorXd(2) << 1.0, 0.0).finished());
  p.constraints = focp::ConstraintSet::input_box(1, 0.01);
  try {
    (void)focp::solve_forward(p);
    FAIL("expected InfeasibleError");
  } catch (const focp::InfeasibleError& e) {
    CHECK(e.best.terminal_residual > 0.5);
  }
}

TEST_CASE("problem validation") {
  focp::FocpProblem p = spring1_problem(0, VectorXd::Zero(2), VectorXd::Zero(2));
  CHECK_THROWS_AS(focp::check_problem(p), std::invalid_argument);
  p.horizon = 5;
  p.t0 = 0.05;  // off the sampling grid
  CHECK_THROWS_AS(focp::check_problem(p), std::invalid_argument);
  p.t0 = 0.3;
  CHECK_NOTHROW(focp::check_problem(p));
  p.x0 = VectorXd::Zero(3);
  CHECK_THROWS_AS(focp::check_problem(p), std::invalid_argument);
}

namespace {

focp::GenerationRequest sys1_request(int n_gen, int horizon, int stride) {
  focp::GenerationRequest req;
  req.model = dynamics::SystemModel(dynamics::SystemKind::spring3);
  req.features = cost::squared_features(6, 3);
  req.truth = cost::schedule_of(cost::Benchmark::sys1, cost::TruthProfile{});
  req.system_tag = "sys1";
  req.profile_tag = "thetam1";
  req.n_gen = n_gen;
  req.horizon = horizon;
  req.stride = stride;
  req.seed = 9;
  return req;
}

}  // namespace

TEST_CASE("demonstration slices are optimal for their own endpoints") {
  focp::GenerationRequest req = sys1_request(40, 20, 20);
  req.initial_states = focp::sample_initial_states(VectorXd::Ones(6), 1, 9);
  const auto segs = focp::generate_demonstrations(req);
  REQUIRE(segs.size() == 2);
  CHECK(segs[1].t_start == doctest::Approx(2.0));
  CHECK((segs[0].x.col(20) - segs[1].x.col(0)).norm() == 0.0);
  for (const auto& seg : segs) {
    focp::FocpProblem p;
    p.model = req.model;
    p.features = req.features;
    p.theta = req.truth;
    p.x0 = seg.x.col(0);
    p.xn = seg.x.col(seg.horizon());
    p.t0 = seg.t_start;
    p.horizon = seg.horizon();
    const focp::FocpSolution sol = focp::solve_forward(p);
    CHECK((sol.u - seg.u).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("equilibrium start gives zero segments") {
  focp::GenerationRequest req = sys1_request(30, 10, 10);
  req.truth = [](double) { return VectorXd(VectorXd::Constant(9, 2.0)); };
  req.initial_states = {VectorXd::Zero(6)};
  for (const auto& seg : focp::generate_demonstrations(req)) {
    CHECK(seg.u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(seg.x.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("initial-state sampling is bounded and seeded") {
  const VectorXd bounds = (VectorXd(3) << 1.0, 0.3, 2.0).finished();
  const auto a = focp::sample_initial_states(bounds, 20, 4);
  const auto b = focp::sample_initial_states(bounds, 20, 4);
  const auto c = focp::sample_initial_states(bounds, 20, 5);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].cwiseAbs().array() <= bounds.array()).all());
    CHECK(a[i] == b[i]);
  }
  CHECK(a[0] != c[0]);
}

TEST_CASE("dataset files round-trip bit-exactly") {
  focp::GenerationRequest req = sys1_request(20, 10, 10);
  req.initial_states = focp::sample_initial_states(VectorXd::Ones(6), 2, 1);
  Dataset d;
  d.training = focp::generate_demonstrations(req);
  d.validation = {d.training.back()};
  const auto path = std::filesystem::temp_directory_path() / "ttdioc_test_dataset.json";
  focp::save_dataset(path, d);
  const Dataset e = focp::load_dataset(path);
  std::filesystem::remove(path);
  REQUIRE(e.training.size() == d.training.size());
  REQUIRE(e.validation.size() == 1);
  for (std::size_t i = 0; i < d.training.size(); ++i) {
    CHECK(e.training[i].x == d.training[i].x);
    CHECK(e.training[i].u == d.training[i].u);
    CHECK(e.training[i].t_start == d.training[i].t_start);
    CHECK(e.training[i].ts == d.training[i].ts);
    CHECK(e.training[i].system == "sys1");
    CHECK(e.training[i].profile == "thetam1");
    CHECK(e.training[i].seed == 9);
  }
}
