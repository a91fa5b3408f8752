#pragma once
// Shared optimization primitives: finite-difference gradient checks, L-BFGS
// with a strong-Wolfe line search, and an accelerated proximal-gradient solver
// for masked lasso-type quadratic programs.

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttdioc::numerics {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A scalar objective with gradient. `evaluate` writes the gradient into its
/// second argument (already sized to `dimension`) and returns the value.
struct BoxedFunction {
  Eigen::Index dimension = 0;
  std::function<double(const Vector& x, Vector& grad)> evaluate;
};

/// Raised when an objective returns a non-finite value where one is required.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maximum over coordinates of |g_ad - g_fd| / max(1, |g_fd|) with central
/// differences of step h.
double grad_check(const BoxedFunction& f, const Vector& x, double h);

struct LbfgsOptions {
  double tol_grad = 1e-9;
  int max_iter = 5000;
  int memory = 10;
  int max_line_search = 40;
  double c1 = 1e-4;
  double c2 = 0.9;
};

enum class LbfgsStatus { converged, max_iterations };

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::max_iterations;

  bool converged() const noexcept { return status == LbfgsStatus::converged; }
};

/// The line search could not produce an acceptable step: the objective is
/// unbounded along the search direction, or rounding prevents progress.
/// Carries the best iterate reached.
class StagnationError : public std::runtime_error {
 public:
  StagnationError(const std::string& what, Vector best_x, double best_f, double grad_norm)
      : std::runtime_error(what), best_x(std::move(best_x)), best_f(best_f), grad_norm(grad_norm) {}

  Vector best_x;
  double best_f;
  double grad_norm;
};

/// Minimizes f from x0. Stops when the Euclidean gradient norm is at most
/// tol_grad; returns the last iterate flagged max_iterations otherwise.
/// Accepted iterates have nonincreasing objective values.
LbfgsResult lbfgs_minimize(const BoxedFunction& f, Vector x0, const LbfgsOptions& options = {});

/// Coordinate structure of
///   min 1/2 z'Qz + c'z + sum_j l1_weight_j |z_j|
///   s.t. z_j >= 0 where nonneg_j, z_j = fixed_value_j where fixed_j.
/// Empty vectors mean "no coordinate flagged".
struct FistaMasks {
  Vector l1_weight;
  std::vector<bool> nonneg;
  std::vector<bool> fixed;
  Vector fixed_values;
};

struct FistaOptions {
  /// Optimality tolerance, relative to max(1, |c|_inf, max|Q| * |z|_inf).
  double tol = 1e-10;
  int max_iter = 5000;
  /// Refine the final iterate with exact solves on its support.
  bool polish = true;
};

struct FistaResult {
  Vector z;
  double objective = 0.0;
  double kkt_violation = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Composite optimality violation of z per coordinate type (see FistaMasks).
double composite_kkt_violation(const Matrix& q, const Vector& c, const FistaMasks& masks,
                               const Vector& z);

/// Scale used to make FistaOptions::tol relative.
double composite_kkt_scale(const Matrix& q, const Vector& c, const Vector& z);

/// Objective value including the l1 term (constraints are not checked).
double composite_objective(const Matrix& q, const Vector& c, const FistaMasks& masks,
                           const Vector& z);

/// Accelerated proximal gradient with Jacobi scaling and restart on
/// objective increase. Q must be symmetric positive semidefinite.
FistaResult fista_solve(const Matrix& q, const Vector& c, const FistaMasks& masks,
                        const FistaOptions& options = {});

/// Primal active-set method for the composite problem of FistaMasks with
/// the extra linear inequalities G z >= 0 (G may have zero rows). z0 must be
/// feasible. Each iteration solves the equality-constrained subproblem on the
/// current support, sign pattern and working constraints by a null-space
/// method, so nearly dependent constraints are tolerated. kkt_violation
/// includes constraint multipliers and feasibility.
FistaResult active_set_solve(const Matrix& q, const Vector& c, const FistaMasks& masks, const Matrix& g,
                             Vector z0, double tol = 1e-10, int max_iter = 0);

/// y = Q x through the dispatched SIMD kernel.
void symv(const Matrix& q, const Vector& x, Vector& y);

}  // namespace ttdioc::numerics
