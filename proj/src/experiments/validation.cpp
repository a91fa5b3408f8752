#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <stdexcept>

#include "ttdioc/experiments.hpp"
#include "ttdioc/parallel.hpp"

namespace ttdioc::experiments {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw std::invalid_argument("report: bad number '" + s + "'");
}

}  // namespace

std::string report_to_json(const ValidationReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["system"] = r.system;
  j["profile"] = r.profile;
  j["Ts"] = r.ts;
  j["N"] = r.horizon;
  j["E"] = r.basis_count;
  j["order"] = r.order;
  j["e_v"] = number(r.e_v);
  j["segment_errors"] = nlohmann::json::array();
  for (double e : r.segment_errors) j["segment_errors"].push_back(number(e));
  j["diagnostics"] = r.diagnostics;
  return j.dump(2);
}

ValidationReport report_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ValidationReport r;
  r.method = j.at("method").get<std::string>();
  r.system = j.at("system").get<std::string>();
  r.profile = j.at("profile").get<std::string>();
  r.ts = j.at("Ts").get<double>();
  r.horizon = j.at("N").get<int>();
  r.basis_count = j.at("E").get<int>();
  r.order = j.at("order").get<int>();
  r.e_v = number(j.at("e_v"));
  for (const auto& e : j.at("segment_errors")) r.segment_errors.push_back(number(e));
  r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  return r;
}

std::vector<double> segment_errors(const std::vector<TrajectorySegment>& resolved,
                                   const std::vector<TrajectorySegment>& reference) {
  if (resolved.size() != reference.size()) throw std::invalid_argument("validation_error: segment count mismatch");
  std::vector<double> out;
  out.reserve(resolved.size());
  for (std::size_t d = 0; d < resolved.size(); ++d) {
    const auto& a = resolved[d];
    const auto& b = reference[d];
    const int n = b.horizon();
    if (a.horizon() != n || a.state_dim() != b.state_dim() || a.input_dim() != b.input_dim() ||
        a.x.cols() < n || b.x.cols() < n) {
      throw std::invalid_argument("validation_error: segment " + std::to_string(d) + " shape mismatch");
    }
    if (n == 0) throw std::invalid_argument("validation_error: empty segment");
    const double sq = (a.x.leftCols(n) - b.x.leftCols(n)).squaredNorm() + (a.u - b.u).squaredNorm();
    out.push_back(std::sqrt(sq / n));
  }
  return out;
}

double validation_error(const std::vector<TrajectorySegment>& resolved,
                        const std::vector<TrajectorySegment>& reference) {
  const std::vector<double> e = segment_errors(resolved, reference);
  if (e.empty()) throw std::invalid_argument("validation_error: no segments");
  double sum = 0.0;
  for (double v : e) sum += v;
  return sum / static_cast<double>(e.size());
}

BenchmarkSetup default_setup(cost::Benchmark benchmark) {
  BenchmarkSetup s;
  s.benchmark = benchmark;
  switch (benchmark) {
    case cost::Benchmark::sys1:
      s.model = dynamics::SystemModel(dynamics::SystemKind::spring3, {}, 0.1);
      s.state_bounds = Vector::Ones(6);
      s.horizon = 60;
      s.n_gen = 120;
      s.stride = 60;
      s.training_states = 6;
      s.validation_states = 3;
      s.ttd.omega_init = 0.5;
      s.ttd.omega_final = 2.5;
      s.ttd.omega_step = 2.0;
      s.ttd.beta_init = 0.04;
      s.ttd.beta_final = 0.06;
      s.ttd.beta_step = 0.01;
      break;
    case cost::Benchmark::sys2:
      s.model = dynamics::SystemModel(dynamics::SystemKind::pendulum2, {}, 0.1);
      s.state_bounds = Vector::Constant(4, 0.3);
      s.horizon = 20;
      s.n_gen = 40;
      s.stride = 20;
      s.training_states = 8;
      s.validation_states = 4;
      s.ttd.omega_init = 0.11;
      s.ttd.omega_final = 0.11;
      s.ttd.omega_step = 0.0;
      s.ttd.beta_init = 0.058;
      s.ttd.beta_final = 0.061;
      s.ttd.beta_step = 0.003;
      break;
    case cost::Benchmark::spring1:
      s.model = dynamics::SystemModel(dynamics::SystemKind::spring1, {}, 0.1);
      s.state_bounds = Vector::Ones(2);
      s.horizon = 60;
      s.n_gen = 120;
      s.stride = 60;
      s.training_states = 6;
      s.validation_states = 3;
      break;
  }
  s.features = cost::squared_features(s.model.state_dim(), s.model.input_dim());
  s.constraints = focp::ConstraintSet::none();
  s.anchor = 7.0;
  s.ttd.basis_count = 2;
  s.ttd.anchor_scale = s.anchor;
  // Pendulum KKT residuals are small next to the beta grid; a larger anchor
  // lowers the penalty relative to the residual (v_alpha* is free).
  if (benchmark == cost::Benchmark::sys2) s.ttd.anchor_scale = 1000.0 * s.anchor;
  return s;
}

BenchmarkSetup resampled(const BenchmarkSetup& setup, double ts, int horizon) {
  if (!(ts > 0.0) || horizon < 1) throw std::invalid_argument("resampled: need Ts > 0 and N >= 1");
  BenchmarkSetup s = setup;
  s.model = setup.model.with_ts(ts);
  s.horizon = horizon;
  s.n_gen = 2 * horizon;
  s.stride = horizon;
  return s;
}

kktioc::IocModel ioc_model(const BenchmarkSetup& setup) {
  return kktioc::IocModel{setup.model, setup.features, setup.constraints, setup.options.eps_act};
}

namespace {

std::vector<TrajectorySegment> generate(const BenchmarkSetup& setup, const cost::TruthProfile& profile,
                                        std::vector<Vector> states, std::uint64_t seed, int threads) {
  focp::GenerationRequest req;
  req.model = setup.model;
  req.features = setup.features;
  req.truth = cost::schedule_of(setup.benchmark, profile);
  req.system_tag = std::string(cost::to_string(setup.benchmark));
  req.profile_tag = profile.tag();
  req.initial_states = std::move(states);
  req.n_gen = setup.n_gen;
  req.horizon = setup.horizon;
  req.stride = setup.stride;
  req.seed = seed;
  req.options = setup.options;
  req.threads = threads;
  return focp::generate_demonstrations(req);
}

std::vector<Vector> all_states(const BenchmarkSetup& setup, std::uint64_t seed) {
  return focp::sample_initial_states(setup.state_bounds, setup.training_states + setup.validation_states, seed);
}

}  // namespace

Dataset make_dataset(const BenchmarkSetup& setup, const cost::TruthProfile& profile, std::uint64_t seed,
                     int threads) {
  std::vector<Vector> states = all_states(setup, seed);
  std::vector<Vector> train(states.begin(), states.begin() + setup.training_states);
  std::vector<Vector> valid(states.begin() + setup.training_states, states.end());
  Dataset out;
  out.training = generate(setup, profile, std::move(train), seed, threads);
  out.validation = generate(setup, profile, std::move(valid), seed, threads);
  return out;
}

std::vector<TrajectorySegment> make_validation(const BenchmarkSetup& setup, const cost::TruthProfile& profile,
                                               std::uint64_t seed, int threads) {
  std::vector<Vector> states = all_states(setup, seed);
  std::vector<Vector> valid(states.begin() + setup.training_states, states.end());
  return generate(setup, profile, std::move(valid), seed, threads);
}

Revalidation revalidate(const BenchmarkSetup& setup, const cost::ThetaSchedule& theta,
                        const std::vector<TrajectorySegment>& validation, int threads) {
  if (validation.empty()) throw std::invalid_argument("revalidate: empty validation set");
  struct Outcome {
    TrajectorySegment segment;
    std::string failure;
  };
  const std::vector<Outcome> outcomes = parallel_map(validation.size(), threads, [&](std::size_t d) {
    const TrajectorySegment& ref = validation[d];
    focp::FocpProblem problem;
    problem.model = setup.model.with_ts(ref.ts);
    problem.features = setup.features;
    problem.theta = theta;
    problem.constraints = setup.constraints;
    problem.x0 = ref.x.col(0);
    problem.xn = ref.x.col(ref.horizon());
    problem.t0 = ref.t_start;
    problem.horizon = ref.horizon();
    Outcome out;
    out.segment = ref;
    try {
      const focp::FocpSolution sol = focp::solve_forward(problem, setup.options);
      out.segment.x = sol.x;
      out.segment.u = sol.u;
      if (!sol.converged) spdlog::debug("revalidate: segment {} stationarity {:.3e}", d, sol.stationarity);
    } catch (const std::exception& ex) {
      out.failure = "segment " + std::to_string(d) + ": " + ex.what();
    }
    return out;
  });

  Revalidation rv;
  rv.report.system = validation.front().system;
  rv.report.profile = validation.front().profile;
  rv.report.ts = validation.front().ts;
  rv.report.horizon = validation.front().horizon();
  bool failed = false;
  for (const Outcome& o : outcomes) {
    rv.resolved.push_back(o.segment);
    if (!o.failure.empty()) {
      failed = true;
      rv.report.diagnostics.push_back(o.failure);
    }
  }
  rv.report.segment_errors = segment_errors(rv.resolved, validation);
  if (failed) {
    for (std::size_t d = 0; d < outcomes.size(); ++d) {
      if (!outcomes[d].failure.empty()) rv.report.segment_errors[d] = kInf;
    }
    rv.report.e_v = kInf;
  } else {
    rv.report.e_v = validation_error(rv.resolved, validation);
  }
  return rv;
}

kktioc::Validator make_validator(const BenchmarkSetup& setup, const std::vector<TrajectorySegment>& validation,
                                 int threads) {
  return [setup, validation, threads](const cost::TrigTimeModel& model) {
    return revalidate(setup, cost::schedule_of(model), validation, threads).report.e_v;
  };
}

}  // namespace ttdioc::experiments
