#pragma once
// Sliding-window baseline: a linear Kalman filter over a parameter vector that
// is assumed constant inside a window of M steps. The window slides by one
// step along the global time grid; its measurements are the stationarity
// residual rows of the stages inside the window, with the terminal and
// active-constraint multipliers projected out.

#include <Eigen/Core>
#include <vector>

#include "ttdioc/costmodel.hpp"
#include "ttdioc/kktioc.hpp"

namespace ttdioc::slidingwindow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SlidingWindowConfig {
  int window = 10;                 // M
  double process_var = 1e-2;       // sigma_q^2
  double measurement_var = 1e-4;   // sigma_r^2
  double initial_var = 1.0;        // sigma_0^2
  double anchor = 1.0;             // pinned value of the first parameter

  /// Throws std::invalid_argument for M < 1, M m < q or nonpositive scales.
  void validate(int input_dim, int feature_dim) const;
};

struct KfEstimate {
  double ts = 0.1;
  int window = 1;
  std::vector<int> start;          // global step index of each window
  std::vector<double> center;      // window center time
  Matrix theta;                    // q x windows, row 0 = anchor
  std::vector<Matrix> covariance;  // (q-1) x (q-1) after each update
  std::vector<int> rows;           // measurement rows used per window
  bool regularized = false;        // some innovation covariance needed 1e-10 I

  /// Piecewise-constant Theta: the estimate of the window whose center is
  /// nearest to t, clamped at both ends.
  Vector at(double t) const;
  cost::ThetaSchedule schedule() const;
};

/// Runs the filter over every window start 0 .. K - M, where K is the last
/// covered step of the training segments. Segments must share Ts and lie on
/// its grid.
KfEstimate kf_estimate(const std::vector<kktioc::SegmentSensitivity>& training, double ts,
                       const SlidingWindowConfig& config);

}  // namespace ttdioc::slidingwindow
