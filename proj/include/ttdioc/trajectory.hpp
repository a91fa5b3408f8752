#pragma once
// Demonstration data: trajectory segments and train/validation datasets.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace ttdioc {

struct TrajectorySegment {
  std::string system;   // benchmark tag, e.g. "sys1"
  std::string profile;  // truth profile tag
  std::uint64_t seed = 0;
  double ts = 0.1;
  double t_start = 0.0;
  Eigen::MatrixXd x;  // n x (N+1), column k = state at t_start + k*ts
  Eigen::MatrixXd u;  // m x N

  int horizon() const noexcept { return static_cast<int>(u.cols()); }
  int state_dim() const noexcept { return static_cast<int>(x.rows()); }
  int input_dim() const noexcept { return static_cast<int>(u.rows()); }
  double time(int k) const noexcept { return t_start + k * ts; }
};

struct Dataset {
  std::vector<TrajectorySegment> training;
  std::vector<TrajectorySegment> validation;
};

}  // namespace ttdioc
