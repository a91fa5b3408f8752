// ttdioc command-line front end.
//
//   ttdioc <command> --config FILE --out DIR [--seed U64] [--threads N]
//
// Exit codes: 0 success, 1 usage or configuration error, 2 solver failure.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttdioc/config.hpp"
#include "ttdioc/experiments.hpp"
#include "ttdioc/focp.hpp"
#include "ttdioc/kktioc.hpp"
#include "ttdioc/numerics.hpp"
#include "ttdioc/slidingwindow.hpp"
#include "ttdioc/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttdioc;

namespace {

constexpr int kUsage = 1;
constexpr int kSolver = 2;

/// Bad input detected after parsing (e.g. a missing forward.x0).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_report(const fs::path& dir, const std::string& name, const experiments::ValidationReport& r) {
  write_text(dir / name, experiments::report_to_json(r) + "\n");
}

experiments::ValidationReport labelled(experiments::ValidationReport r, const util::RunConfig& cfg,
                                       const std::string& method) {
  r.method = method;
  r.system = std::string(cost::to_string(cfg.setup.benchmark));
  r.profile = cfg.profile;
  return r;
}

// ---------------------------------------------------------------------------
// Commands. Each returns after writing its outputs under cfg.out.

void cmd_generate(const util::RunConfig& cfg) {
  const Dataset data = experiments::make_dataset(cfg.setup, cfg.truth(), cfg.seed, cfg.threads);
  focp::save_dataset(fs::path(cfg.out) / "dataset.json", data);
  std::cout << "training segments " << data.training.size() << ", validation segments " << data.validation.size()
            << "\n";
}

void cmd_solve_forward(const util::RunConfig& cfg) {
  const experiments::BenchmarkSetup& s = cfg.setup;
  if (cfg.forward.x0.size() == 0) throw UsageError("forward.x0 is required for solve-forward");
  focp::FocpProblem problem;
  problem.model = s.model;
  problem.features = s.features;
  problem.theta = cost::schedule_of(s.benchmark, cfg.truth());
  problem.constraints = s.constraints;
  problem.x0 = cfg.forward.x0;
  problem.xn = cfg.forward.xn.size() > 0 ? cfg.forward.xn : Eigen::VectorXd::Zero(s.model.state_dim());
  problem.t0 = cfg.forward.t_start;
  problem.horizon = s.horizon;
  const focp::FocpSolution sol = focp::solve_forward(problem, s.options);
  json j{{"cost", sol.cost},
         {"terminal_residual", sol.terminal_residual},
         {"stationarity", sol.stationarity},
         {"outer_iterations", sol.outer_iterations},
         {"u", matrix_rows(sol.u)},
         {"x", matrix_rows(sol.x)}};
  write_text(fs::path(cfg.out) / "forward.json", j.dump(2) + "\n");
  std::cout << "cost " << experiments::format_double(sol.cost) << ", terminal residual "
            << experiments::format_double(sol.terminal_residual) << "\n";
}

struct Trained {
  Dataset data;
  kktioc::IocSolution solution;
  experiments::ValidationReport report;
};

Trained train(const util::RunConfig& cfg, bool ttd) {
  const experiments::BenchmarkSetup& s = cfg.setup;
  Trained t;
  t.data = experiments::make_dataset(s, cfg.truth(), cfg.seed, cfg.threads);
  const auto sens = kktioc::sensitivities(experiments::ioc_model(s), t.data.training, cfg.threads);
  if (ttd) {
    kktioc::TtdConfig tc = s.ttd;
    tc.threads = cfg.threads;
    t.solution = kktioc::ttd_ioc(sens, tc, experiments::make_validator(s, t.data.validation, cfg.threads));
  } else {
    t.solution = kktioc::sp_ioc(sens, s.anchor);
  }
  const auto rv = experiments::revalidate(s, cost::schedule_of(t.solution.model), t.data.validation, cfg.threads);
  t.report = labelled(rv.report, cfg, t.solution.method);
  t.report.basis_count = t.solution.model.basis_count();
  return t;
}

void cmd_estimate(const util::RunConfig& cfg, bool ttd) {
  const fs::path dir(cfg.out);
  const Trained t = train(cfg, ttd);
  kktioc::save_solution(dir / "iocsolution.json", t.solution);
  write_report(dir, "report.json", t.report);
  experiments::write_fig3(dir / "fig3.csv", {t.report});
  std::cout << t.solution.method << " e_v " << experiments::format_double(t.report.e_v) << "\n";
}

void cmd_kf(const util::RunConfig& cfg) {
  const experiments::BenchmarkSetup& s = cfg.setup;
  const fs::path dir(cfg.out);
  const Dataset data = experiments::make_dataset(s, cfg.truth(), cfg.seed, cfg.threads);
  const auto sens = kktioc::sensitivities(experiments::ioc_model(s), data.training, cfg.threads);
  slidingwindow::SlidingWindowConfig kc = cfg.kf;
  kc.anchor = s.anchor;
  const slidingwindow::KfEstimate est = slidingwindow::kf_estimate(sens, s.model.ts(), kc);
  const auto rv = experiments::revalidate(s, est.schedule(), data.validation, cfg.threads);
  const experiments::ValidationReport report = labelled(rv.report, cfg, "KF");
  json j{{"ts", est.ts},
         {"window", est.window},
         {"start", est.start},
         {"center", est.center},
         {"theta", matrix_rows(est.theta.transpose())},
         {"regularized", est.regularized}};
  write_text(dir / "kf.json", j.dump(2) + "\n");
  write_report(dir, "report.json", report);
  std::cout << "KF e_v " << experiments::format_double(report.e_v) << "\n";
}

void cmd_sweep(const util::RunConfig& cfg, const std::string& kind) {
  const experiments::BenchmarkSetup& s = cfg.setup;
  const fs::path dir(cfg.out);
  if (kind == "order") {
    const auto cells = experiments::nonlinearity_sweep(s, cfg.sweep.orders, cfg.kf, cfg.seed, cfg.threads);
    experiments::write_fig1(dir / "fig1.csv", cells);
    return;
  }
  if (kind == "e") {
    const Dataset data = experiments::make_dataset(s, cfg.truth(), cfg.seed, cfg.threads);
    auto cells = experiments::sweep_e(s, data, cfg.sweep.basis, cfg.threads);
    for (auto& c : cells) c.report = labelled(c.report, cfg, "TTD");
    experiments::write_fig2(dir / "fig2.csv", cells);
    return;
  }
  const Trained t = train(cfg, true);
  kktioc::save_solution(dir / "iocsolution.json", t.solution);
  std::vector<experiments::ValidationReport> reports =
      kind == "ts" ? experiments::sweep_ts(s, t.solution.model, cfg.truth(), cfg.sweep.ts, cfg.seed, cfg.threads)
                   : experiments::sweep_n(s, t.solution.model, cfg.truth(), cfg.sweep.horizon, cfg.seed, cfg.threads);
  for (auto& r : reports) r = labelled(r, cfg, "TTD");
  if (kind == "ts") {
    experiments::write_fig4(dir / "fig4.csv", reports);
  } else {
    experiments::write_fig5(dir / "fig5.csv", reports);
  }
}

void cmd_validate(const util::RunConfig& cfg, const std::string& solution_flag) {
  const std::string path = solution_flag.empty() ? cfg.solution : solution_flag;
  if (path.empty()) throw UsageError("validate needs --solution or a \"solution\" config entry");
  if (!fs::exists(path)) throw UsageError("solution file not found: " + path);
  const kktioc::IocSolution sol = kktioc::load_solution(path);
  const auto validation = experiments::make_validation(cfg.setup, cfg.truth(), cfg.seed, cfg.threads);
  const auto rv = experiments::revalidate(cfg.setup, cost::schedule_of(sol.model), validation, cfg.threads);
  experiments::ValidationReport report = labelled(rv.report, cfg, sol.method);
  report.basis_count = sol.model.basis_count();
  write_report(fs::path(cfg.out), "report.json", report);
  std::cout << sol.method << " e_v " << experiments::format_double(report.e_v) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  util::init_logging();

  CLI::App app{"Time-dependent inverse optimal control experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory (overrides the config entry)");
    sub->add_option("--seed", common.seed, "Random seed (overrides the config entry)");
    sub->add_option("--threads", common.threads, "Worker cap (overrides the config entry)")
        ->check(CLI::PositiveNumber);
  };

  std::string sweep_kind;
  std::string solution_path;
  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const char* name : {"generate", "solve-forward", "spioc", "ttd", "kf", "sweep", "validate"}) {
    CLI::App* sub = app.add_subcommand(name);
    add_common(sub);
    commands.emplace_back(name, sub);
  }
  app.get_subcommand("generate")->description("Generate a training/validation dataset");
  app.get_subcommand("solve-forward")->description("Solve one forward optimal control instance");
  app.get_subcommand("spioc")->description("Constant-parameter IOC estimate");
  app.get_subcommand("ttd")->description("Trigonometric time-dependent IOC estimate");
  app.get_subcommand("kf")->description("Sliding-window Kalman filter estimate");
  app.get_subcommand("sweep")
      ->description("Sampling time, horizon, basis size or harmonic order sweep")
      ->add_option("kind", sweep_kind, "ts | n | e | order")
      ->required()
      ->check(CLI::IsMember({"ts", "n", "e", "order"}));
  app.get_subcommand("validate")
      ->description("Revalidate a saved IOC solution")
      ->add_option("--solution", solution_path, "IOC solution file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  std::string command;
  for (const auto& [name, sub] : commands) {
    if (sub->parsed()) command = name;
  }

  util::RunConfig cfg;
  try {
    cfg = util::load_run_config(common.config);
  } catch (const util::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }
  if (!common.out.empty()) cfg.out = common.out;
  if (common.seed) cfg.seed = *common.seed;
  if (common.threads) cfg.threads = *common.threads;
  if (cfg.out.empty()) {
    std::cerr << "no output directory: pass --out or set \"out\" in the config\n";
    return kUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  int code = 0;
  std::string failure;
  try {
    fs::create_directories(cfg.out);
    if (command == "generate") {
      cmd_generate(cfg);
    } else if (command == "solve-forward") {
      cmd_solve_forward(cfg);
    } else if (command == "spioc") {
      cmd_estimate(cfg, false);
    } else if (command == "ttd") {
      cmd_estimate(cfg, true);
    } else if (command == "kf") {
      cmd_kf(cfg);
    } else if (command == "sweep") {
      cmd_sweep(cfg, sweep_kind);
    } else {
      cmd_validate(cfg, solution_path);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const focp::InfeasibleError& e) {
    failure = e.what();
    code = kSolver;
  } catch (const std::exception& e) {
    failure = e.what();
    code = kSolver;
  }
  if (code != 0) std::cerr << "solver failure: " << failure << "\n";

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest{{"command", command},
                {"version", kVersion},
                {"status", code == 0 ? "ok" : "solver_failure"},
                {"duration_s", number(seconds)},
                {"config", json::parse(util::run_config_to_json(cfg))}};
  if (command == "sweep") manifest["sweep_kind"] = sweep_kind;
  if (code != 0) manifest["failure"] = failure;
  try {
    write_text(fs::path(cfg.out) / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code != 0 ? code : kSolver;
  }
  return code;
}
