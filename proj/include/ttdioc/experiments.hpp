#pragma once
// Validation metric, benchmark setups and the experiment suite (method
// comparison, sampling-time / horizon / basis-size sweeps and the
// sliding-window nonlinearity sweep).

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ttdioc/costmodel.hpp"
#include "ttdioc/dynamics.hpp"
#include "ttdioc/focp.hpp"
#include "ttdioc/kktioc.hpp"
#include "ttdioc/slidingwindow.hpp"
#include "ttdioc/trajectory.hpp"

namespace ttdioc::experiments {

using Vector = Eigen::VectorXd;

struct ValidationReport {
  std::string method;  // "TTD", "spIOC", "KF", "truth"
  std::string system;
  std::string profile;
  double ts = 0.0;
  int horizon = 0;
  int basis_count = -1;  // E, -1 when not applicable
  int order = -1;        // harmonic order r, -1 when not applicable
  double e_v = 0.0;
  std::vector<double> segment_errors;
  std::vector<std::string> diagnostics;  // one line per failed segment
};

std::string report_to_json(const ValidationReport& report);
ValidationReport report_from_json(const std::string& text);

/// Per-segment RMS over stages 0..N-1 of |x - x*|^2 + |u - u*|^2.
std::vector<double> segment_errors(const std::vector<TrajectorySegment>& resolved,
                                   const std::vector<TrajectorySegment>& reference);
/// Mean of segment_errors. Throws std::invalid_argument on count, horizon or
/// dimension mismatch.
double validation_error(const std::vector<TrajectorySegment>& resolved,
                        const std::vector<TrajectorySegment>& reference);

/// Everything needed to generate data for and validate on one benchmark.
struct BenchmarkSetup {
  cost::Benchmark benchmark = cost::Benchmark::sys1;
  dynamics::SystemModel model{dynamics::SystemKind::spring3};
  cost::FeatureMap features;
  focp::ConstraintSet constraints;
  Vector state_bounds;
  int horizon = 60;
  int n_gen = 120;
  int stride = 60;
  int training_states = 6;
  int validation_states = 3;
  double anchor = 7.0;
  kktioc::TtdConfig ttd;
  focp::FocpOptions options;
};

/// Defaults per benchmark: system sizes, sampling, dataset sizes and the
/// frequency / regularization grids.
BenchmarkSetup default_setup(cost::Benchmark benchmark);

/// Same setup at a different sampling time and horizon (N_gen = 2N, stride N).
BenchmarkSetup resampled(const BenchmarkSetup& setup, double ts, int horizon);

kktioc::IocModel ioc_model(const BenchmarkSetup& setup);

/// Training states followed by validation states from one seeded stream.
Dataset make_dataset(const BenchmarkSetup& setup, const cost::TruthProfile& profile, std::uint64_t seed,
                     int threads = 1);
/// The validation half of make_dataset alone.
std::vector<TrajectorySegment> make_validation(const BenchmarkSetup& setup, const cost::TruthProfile& profile,
                                               std::uint64_t seed, int threads = 1);

struct Revalidation {
  std::vector<TrajectorySegment> resolved;
  ValidationReport report;
};

/// Re-solves every validation segment with Theta fixed and compares. Failed
/// solves make e_v infinite and are listed in the diagnostics.
Revalidation revalidate(const BenchmarkSetup& setup, const cost::ThetaSchedule& theta,
                        const std::vector<TrajectorySegment>& validation, int threads = 1);

kktioc::Validator make_validator(const BenchmarkSetup& setup, const std::vector<TrajectorySegment>& validation,
                                 int threads = 1);

struct Comparison {
  Dataset dataset;
  kktioc::IocSolution ttd;
  kktioc::IocSolution spioc;
  ValidationReport ttd_report;
  ValidationReport spioc_report;
};

/// Both estimators on one dataset.
Comparison run_comparison(const BenchmarkSetup& setup, const cost::TruthProfile& profile, std::uint64_t seed,
                          int threads = 1);

/// Fresh validation data at each target Ts (resp. N) and revalidation with a
/// fixed trained model.
std::vector<ValidationReport> sweep_ts(const BenchmarkSetup& setup, const cost::TrigTimeModel& trained,
                                       const cost::TruthProfile& profile, const std::vector<double>& targets,
                                       std::uint64_t seed, int threads = 1);
std::vector<ValidationReport> sweep_n(const BenchmarkSetup& setup, const cost::TrigTimeModel& trained,
                                      const cost::TruthProfile& profile, const std::vector<int>& targets,
                                      std::uint64_t seed, int threads = 1);

struct BasisCell {
  int basis_count = 0;
  kktioc::IocSolution solution;
  ValidationReport report;
};

/// Retrains TTD-IOC for each E on the same dataset.
std::vector<BasisCell> sweep_e(const BenchmarkSetup& setup, const Dataset& dataset, const std::vector<int>& counts,
                               int threads = 1);

struct OrderCell {
  int order = 0;
  slidingwindow::KfEstimate estimate;
  ValidationReport report;
};

/// Sliding-window KF on harmonic(r) truth data for each order r.
std::vector<OrderCell> nonlinearity_sweep(const BenchmarkSetup& setup, const std::vector<int>& orders,
                                          const slidingwindow::SlidingWindowConfig& config, std::uint64_t seed,
                                          int threads = 1);

// ---------------------------------------------------------------------------
// CSV output. Floats use the shortest representation that round-trips.

std::string format_double(double value);

/// Writes a header line and rows; throws std::runtime_error on I/O failure.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void write_fig1(const std::filesystem::path& path, const std::vector<OrderCell>& cells);
void write_fig2(const std::filesystem::path& path, const std::vector<BasisCell>& cells);
void write_fig3(const std::filesystem::path& path, const std::vector<ValidationReport>& reports);
void write_fig4(const std::filesystem::path& path, const std::vector<ValidationReport>& reports);
void write_fig5(const std::filesystem::path& path, const std::vector<ValidationReport>& reports);

}  // namespace ttdioc::experiments
