#include <spdlog/spdlog.h>
#include <stdexcept>

#include "ttdioc/experiments.hpp"

namespace ttdioc::experiments {
namespace {

ValidationReport tagged(ValidationReport r, std::string method, int basis_count) {
  r.method = std::move(method);
  r.basis_count = basis_count;
  return r;
}

}  // namespace

Comparison run_comparison(const BenchmarkSetup& setup, const cost::TruthProfile& profile, std::uint64_t seed,
                          int threads) {
  Comparison out;
  out.dataset = make_dataset(setup, profile, seed, threads);
  const auto sens = kktioc::sensitivities(ioc_model(setup), out.dataset.training, threads);
  const kktioc::Validator validate = make_validator(setup, out.dataset.validation, threads);

  kktioc::TtdConfig cfg = setup.ttd;
  cfg.threads = threads;
  out.ttd = kktioc::ttd_ioc(sens, cfg, validate);
  out.spioc = kktioc::sp_ioc(sens, setup.anchor);

  out.ttd_report = tagged(revalidate(setup, cost::schedule_of(out.ttd.model), out.dataset.validation, threads).report,
                          "TTD", out.ttd.model.basis_count());
  out.spioc_report =
      tagged(revalidate(setup, cost::schedule_of(out.spioc.model), out.dataset.validation, threads).report,
             "spIOC", 0);
  spdlog::info("comparison {} {}: e_v TTD {:.3e} spIOC {:.3e}", cost::to_string(setup.benchmark), profile.tag(),
               out.ttd_report.e_v, out.spioc_report.e_v);
  return out;
}

std::vector<ValidationReport> sweep_ts(const BenchmarkSetup& setup, const cost::TrigTimeModel& trained,
                                       const cost::TruthProfile& profile, const std::vector<double>& targets,
                                       std::uint64_t seed, int threads) {
  std::vector<ValidationReport> out;
  for (double ts : targets) {
    const BenchmarkSetup s = resampled(setup, ts, setup.horizon);
    const auto validation = make_validation(s, profile, seed, threads);
    out.push_back(tagged(revalidate(s, cost::schedule_of(trained), validation, threads).report, "TTD",
                         trained.basis_count()));
    spdlog::info("sweep Ts {}: e_v {:.3e}", ts, out.back().e_v);
  }
  return out;
}

std::vector<ValidationReport> sweep_n(const BenchmarkSetup& setup, const cost::TrigTimeModel& trained,
                                      const cost::TruthProfile& profile, const std::vector<int>& targets,
                                      std::uint64_t seed, int threads) {
  std::vector<ValidationReport> out;
  for (int n : targets) {
    const BenchmarkSetup s = resampled(setup, setup.model.ts(), n);
    const auto validation = make_validation(s, profile, seed, threads);
    out.push_back(tagged(revalidate(s, cost::schedule_of(trained), validation, threads).report, "TTD",
                         trained.basis_count()));
    spdlog::info("sweep N {}: e_v {:.3e}", n, out.back().e_v);
  }
  return out;
}

std::vector<BasisCell> sweep_e(const BenchmarkSetup& setup, const Dataset& dataset, const std::vector<int>& counts,
                               int threads) {
  const auto sens = kktioc::sensitivities(ioc_model(setup), dataset.training, threads);
  const kktioc::Validator validate = make_validator(setup, dataset.validation, threads);
  std::vector<BasisCell> out;
  for (int e : counts) {
    if (e < 1) throw std::invalid_argument("sweep_e: E must be >= 1");
    kktioc::TtdConfig cfg = setup.ttd;
    cfg.basis_count = e;
    cfg.anchor.resize(0);
    cfg.threads = threads;
    BasisCell cell;
    cell.basis_count = e;
    cell.solution = kktioc::ttd_ioc(sens, cfg, validate);
    cell.report = tagged(revalidate(setup, cost::schedule_of(cell.solution.model), dataset.validation, threads).report,
                         "TTD", e);
    spdlog::info("sweep E {}: e_v {:.3e}", e, cell.report.e_v);
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<OrderCell> nonlinearity_sweep(const BenchmarkSetup& setup, const std::vector<int>& orders,
                                          const slidingwindow::SlidingWindowConfig& config, std::uint64_t seed,
                                          int threads) {
  if (orders.empty()) throw std::invalid_argument("nonlinearity_sweep: no orders");
  slidingwindow::SlidingWindowConfig cfg = config;
  cfg.anchor = setup.anchor;
  std::vector<OrderCell> out;
  for (int r : orders) {
    if (r < 0) throw std::invalid_argument("nonlinearity_sweep: order must be >= 0");
    cost::TruthProfile profile;
    profile.kind = cost::ProfileKind::harmonic;
    profile.order = r;
    const Dataset data = make_dataset(setup, profile, seed, threads);
    const auto sens = kktioc::sensitivities(ioc_model(setup), data.training, threads);
    OrderCell cell;
    cell.order = r;
    cell.estimate = slidingwindow::kf_estimate(sens, setup.model.ts(), cfg);
    cell.report = revalidate(setup, cell.estimate.schedule(), data.validation, threads).report;
    cell.report.method = "KF";
    cell.report.order = r;
    spdlog::info("sweep order {}: e_v {:.3e}", r, cell.report.e_v);
    out.push_back(std::move(cell));
  }
  return out;
}

}  // namespace ttdioc::experiments
