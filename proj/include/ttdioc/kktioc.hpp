#pragma once
// KKT-based inverse optimal control.
//
// For a demonstration segment d the Lagrangian gradient
//
//   r_d = grad_U [ sum_i Theta(t_i) . phi(F_i, u_i) + sum lambda g + upsilon' (F_N - x*_N) ] at U = U*_d
//
// is affine in (A, lambda, upsilon) once the frequencies W are fixed. The
// estimators below minimize sum_d |r_d|^2 (plus an l1 penalty on the
// trigonometric coefficients) over those variables, and search over W.

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ttdioc/costmodel.hpp"
#include "ttdioc/dynamics.hpp"
#include "ttdioc/focp.hpp"
#include "ttdioc/trajectory.hpp"

namespace ttdioc::kktioc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Everything about the forward problem class except Theta.
struct IocModel {
  dynamics::SystemModel model{dynamics::SystemKind::spring1};
  cost::FeatureMap features;
  focp::ConstraintSet constraints;
  double eps_act = 1e-6;
};

struct ActiveEntry {
  int stage = 0;
  int constraint = 0;
};

/// Derivatives of one segment's Lagrangian terms with respect to U, taken at
/// the demonstrated inputs. Row index of every matrix is i*m + j (input j of
/// stage i).
struct SegmentSensitivity {
  int horizon = 0;
  int state_dim = 0;
  int input_dim = 0;
  int feature_dim = 0;
  int constraint_count = 0;
  std::vector<double> times;     // t_start + i*Ts
  Matrix feature_grad;           // (N m) x (N q), column i*q + s = d phi_s(x_i, u_i) / dU
  Matrix terminal_jac_t;         // (N m) x n, (dF_N / dU)'
  std::vector<ActiveEntry> active;
  Matrix constraint_grad;        // (N m) x |active|
};

/// Throws std::invalid_argument when the segment is not a rollout of its own
/// inputs (tolerance 1e-6) or N m exceeds the dual-number capacity.
SegmentSensitivity sensitivity(const IocModel& model, const TrajectorySegment& segment);

std::vector<SegmentSensitivity> sensitivities(const IocModel& model, const std::vector<TrajectorySegment>& segments,
                                              int threads = 1);

/// Per-segment multipliers: lambda is N x P (zero where inactive).
struct MultiplierSet {
  std::vector<Matrix> lambda;
  std::vector<Vector> upsilon;
};

/// Lagrangian gradient with respect to U (length N m) by forward-mode AD
/// through the rollout, independent of SegmentSensitivity.
Vector stationarity_residual(const IocModel& model, const TrajectorySegment& segment,
                             const cost::ThetaSchedule& theta, const Matrix& lambda, const Vector& upsilon);

/// Multipliers minimizing |r_d| for a given Theta (inactive lambda pinned at
/// zero, active lambda >= 0).
MultiplierSet fit_multipliers(const std::vector<SegmentSensitivity>& sens, const cost::ThetaSchedule& theta);

/// Sum of squared residuals through the sensitivity matrices.
double residual_sum(const std::vector<SegmentSensitivity>& sens, const cost::ThetaSchedule& theta,
                    const MultiplierSet& multipliers);

// ---------------------------------------------------------------------------
// Normal system for fixed W

struct ZSlot {
  enum class Kind { coefficient, lambda, upsilon };
  Kind kind = Kind::coefficient;
  int segment = -1;  // lambda / upsilon
  int row = 0;       // coefficient: row of A; lambda: stage; upsilon: state index
  int col = 0;       // coefficient: column of A; lambda: constraint index
};

/// Stacked residual J z + r0 with
///   z = [A entries of columns 1..q-1 (index (s-1)(2E+1) + j) | active lambda per segment | upsilon per segment]
/// and column 0 of A fixed to the anchor.
struct NormalSystem {
  Matrix q;  // J'J
  Vector c;  // J'r0
  double r0_squared = 0.0;
  std::vector<ZSlot> index;
  int basis_rows = 1;  // 2E+1
  int feature_dim = 0;
  int coefficient_count = 0;
  std::vector<int> lambda_offset;
  std::vector<int> upsilon_offset;
  // Present only when requested.
  Matrix jacobian;
  Vector r0;

  double residual(const Vector& z) const { return z.dot(q * z) + 2.0 * c.dot(z) + r0_squared; }
};

NormalSystem build_normal_system(const std::vector<SegmentSensitivity>& sens, std::span<const double> frequencies,
                                 const Vector& anchor, bool keep_jacobian = false);

/// z -> (A, multipliers).
Matrix coefficients_from_z(const NormalSystem& ns, const Vector& anchor, const Vector& z);
MultiplierSet multipliers_from_z(const NormalSystem& ns, const std::vector<SegmentSensitivity>& sens,
                                 const Vector& z);

// ---------------------------------------------------------------------------
// Estimators

struct TtdConfig {
  int basis_count = 2;  // E
  double omega_init = 0.5;
  double omega_final = 2.5;
  double omega_step = 2.0;
  double beta_init = 0.04;
  double beta_final = 0.06;
  double beta_step = 0.01;
  /// Column 0 of A; empty means (anchor_scale, 0, ..., 0).
  Vector anchor;
  double anchor_scale = 1.0;
  bool nonneg_theta = true;
  double fista_tol = 1e-10;
  int fista_max_iter = 5000;
  double lbfgs_tol = 1e-9;
  int refine_rounds = 50;
  double refine_tol = 1e-8;
  int threads = 1;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  Vector resolved_anchor() const;
  std::vector<double> beta_grid() const;
  /// Sorted tuples of distinct grid values; when the grid has fewer than E
  /// values, repeated values are spread by +-1e-3 rad/s around the tuple.
  std::vector<std::vector<double>> omega_grid() const;
};

struct InnerSolution {
  cost::TrigTimeModel model;
  MultiplierSet multipliers;
  double residual = 0.0;   // sum_d |r_d|^2
  double objective = 0.0;  // residual + beta |A(trig rows, columns 1..)|
  bool converged = false;
  int nonneg_rounds = 0;
};

InnerSolution solve_inner(const std::vector<SegmentSensitivity>& sens, std::span<const double> frequencies,
                          double beta, const TtdConfig& config);

struct RefineResult {
  InnerSolution solution;
  std::vector<double> objective_trace;  // one entry per solve_inner call
  int rounds = 0;
};

/// Alternates solve_inner with L-BFGS over W at fixed (A, multipliers).
RefineResult refine_frequencies(const std::vector<SegmentSensitivity>& sens, std::vector<double> w_init, double beta,
                                const TtdConfig& config);

/// Squared-residual objective over W at fixed A and multipliers, with its
/// gradient by forward-mode AD.
double frequency_objective(const std::vector<SegmentSensitivity>& sens, const Matrix& a,
                           const MultiplierSet& multipliers, std::span<const double> frequencies, Vector* grad);

struct BetaRecord {
  double beta = 0.0;
  double training_residual = 0.0;
  double validation_error = 0.0;
  std::vector<double> frequencies;
};

struct IocSolution {
  std::string method;  // "TTD" or "spIOC"
  cost::TrigTimeModel model;
  MultiplierSet multipliers;
  double training_residual = 0.0;
  double selected_beta = 0.0;
  Vector anchor;
  std::vector<BetaRecord> trace;
  TtdConfig config;
};

/// Validation error of a candidate model (+inf on failure).
using Validator = std::function<double(const cost::TrigTimeModel&)>;

/// Line search over beta; per beta the best grid start by training
/// objective, across beta the lowest validation error (ties: smallest beta).
IocSolution ttd_ioc(const std::vector<SegmentSensitivity>& training, const TtdConfig& config,
                    const Validator& validate);

/// Constant-parameter estimate with the first parameter pinned to `anchor`.
IocSolution sp_ioc(const std::vector<SegmentSensitivity>& training, double anchor, const Validator& validate = {});

void save_solution(const std::filesystem::path& path, const IocSolution& solution);
IocSolution load_solution(const std::filesystem::path& path);

}  // namespace ttdioc::kktioc
