#include <random>

#include "ttdioc/focp.hpp"
#include "ttdioc/parallel.hpp"

namespace ttdioc::focp {

std::vector<TrajectorySegment> generate_demonstrations(const GenerationRequest& request) {
  if (request.horizon < 1 || request.stride < 1 || request.n_gen < request.horizon + request.stride) {
    throw std::invalid_argument("generate_demonstrations: need N >= 1, stride >= 1 and N_gen >= N + stride");
  }
  const int n = request.model.state_dim();

  const auto solve_one = [&](std::size_t index) {
    FocpProblem problem;
    problem.model = request.model;
    problem.features = request.features;
    problem.theta = request.truth;
    problem.x0 = request.initial_states[index];
    problem.xn = Vector::Zero(n);
    problem.t0 = 0.0;
    problem.horizon = request.n_gen;
    return solve_forward(problem, request.options);
  };
  const std::vector<FocpSolution> solutions =
      parallel_map(request.initial_states.size(), request.threads, solve_one);

  std::vector<TrajectorySegment> segments;
  for (const FocpSolution& sol : solutions) {
    for (int offset = 0; offset + request.horizon <= request.n_gen; offset += request.stride) {
      TrajectorySegment seg;
      seg.system = request.system_tag;
      seg.profile = request.profile_tag;
      seg.seed = request.seed;
      seg.ts = request.model.ts();
      seg.t_start = offset * request.model.ts();
      seg.x = sol.x.middleCols(offset, request.horizon + 1);
      seg.u = sol.u.middleCols(offset, request.horizon);
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

std::vector<Vector> sample_initial_states(const Vector& bounds, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Vector> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vector x(bounds.size());
    for (Eigen::Index j = 0; j < bounds.size(); ++j) x[j] = bounds[j] * unit(rng);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace ttdioc::focp
