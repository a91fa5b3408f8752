#pragma once
// Forward optimal control by single shooting:
//
//   min_U  sum_{i<N} Theta(t0 + i Ts) . phi(F_i(U, x0), u_i)
//   s.t.   g(F_i, u_i) <= 0,  F_N(U, x0) = xN
//
// solved with an augmented Lagrangian on the constraints and L-BFGS on U.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttdioc/costmodel.hpp"
#include "ttdioc/dynamics.hpp"
#include "ttdioc/trajectory.hpp"

namespace ttdioc::focp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Stage inequality constraints g(x, u) <= 0.
class ConstraintSet {
 public:
  ConstraintSet() = default;

  static ConstraintSet none() { return {}; }
  /// |u_j| <= umax for every input, as 2m constraints (u - umax, -u - umax).
  static ConstraintSet input_box(int input_dim, double umax);
  static ConstraintSet custom(cost::StageMap g);

  int count() const noexcept { return map_.dim(); }
  const cost::StageMap& map() const noexcept { return map_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  cost::StageMap map_;
  std::string kind_ = "none";
};

struct FocpProblem {
  dynamics::SystemModel model{dynamics::SystemKind::spring1};
  cost::FeatureMap features;
  cost::ThetaSchedule theta;
  ConstraintSet constraints;
  Vector x0;
  Vector xn;
  double t0 = 0.0;
  int horizon = 1;

  double time(int i) const { return t0 + i * model.ts(); }
};

struct FocpOptions {
  double tol_term = 1e-8;
  double tol_grad = 1e-9;
  double rho0 = 10.0;
  double rho_growth = 5.0;
  double rho_max = 1e8;
  int max_outer = 50;
  int max_inner = 5000;
  double eps_act = 1e-6;
  /// Newton steps on the KKT system once the multiplier loop has settled.
  bool polish = true;
  /// Initial inputs (m x N); empty means zero.
  Matrix warm_start;
};

struct FocpSolution {
  Matrix u;  // m x N
  Matrix x;  // n x (N+1), open-loop rollout of u
  double cost = 0.0;
  double terminal_residual = 0.0;
  /// Euclidean norm of the Lagrangian gradient with respect to U.
  double stationarity = 0.0;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active;  // N x P
  Matrix lambda;                                              // N x P
  Vector upsilon;                                             // n
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool converged = false;
  /// Augmented-Lagrangian value at each outer iterate, before its
  /// multiplier update.
  std::vector<double> al_trace;
};

/// The outer loop ran out of iterations without meeting tol_term.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, FocpSolution best)
      : std::runtime_error(what), best(std::move(best)) {}
  FocpSolution best;
};

/// Validates dimensions, N >= 1 and t0 on the sampling grid.
void check_problem(const FocpProblem& problem);

FocpSolution solve_forward(const FocpProblem& problem, const FocpOptions& options = {});

/// Objective value for inputs u (m x N).
double total_cost(const FocpProblem& problem, const Matrix& u);

/// Gradient of the Lagrangian with respect to U (m x N, column i = d/du_i),
/// multipliers lambda (N x P) and upsilon (n).
Matrix lagrangian_gradient(const FocpProblem& problem, const Matrix& u, const Matrix& lambda,
                           const Vector& upsilon);

/// Feedback gain K (m x n) making x -> f(x, Kx) stable at the origin, or an
/// empty matrix when the open-loop linearization is already stable.
Matrix stabilizing_gain(const dynamics::SystemModel& model);

// ---------------------------------------------------------------------------
// Demonstrations

struct GenerationRequest {
  dynamics::SystemModel model{dynamics::SystemKind::spring1};
  cost::FeatureMap features;
  cost::ThetaSchedule truth;
  std::string system_tag;
  std::string profile_tag;
  std::vector<Vector> initial_states;
  int n_gen = 120;
  int horizon = 60;
  int stride = 60;
  std::uint64_t seed = 0;
  FocpOptions options;
  int threads = 1;
};

/// One long-horizon solve per initial state (terminal state at the origin),
/// sliced into segments of length N at offsets 0, stride, 2 stride, ...
/// Segments are ordered by initial state, then by offset.
std::vector<TrajectorySegment> generate_demonstrations(const GenerationRequest& request);

/// Uniform samples with |x_j| <= bounds_j from a seeded generator.
std::vector<Vector> sample_initial_states(const Vector& bounds, int count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Persistence: structured JSON with shortest round-trip doubles.

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace ttdioc::focp
