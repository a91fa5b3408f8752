#include <algorithm>
#include <cmath>
#include <limits>
#include <spdlog/spdlog.h>

#include "ttdioc/kktioc.hpp"
#include "ttdioc/numerics.hpp"
#include "ttdioc/parallel.hpp"

namespace ttdioc::kktioc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Frequencies as a valid model basis: nonnegative, sorted, pairwise distinct.
std::vector<double> normalize_frequencies(std::vector<double> w) {
  for (double& v : w) v = std::abs(v);
  std::sort(w.begin(), w.end());
  for (std::size_t e = 1; e < w.size(); ++e) {
    if (!(w[e] > w[e - 1])) w[e] = std::nextafter(w[e - 1], kInf) + 1e-9 * std::max(1.0, w[e - 1]);
  }
  return w;
}

std::string join(const std::vector<double>& w) {
  std::string out;
  for (std::size_t k = 0; k < w.size(); ++k) out += (k ? ", " : "") + std::to_string(w[k]);
  return out;
}

double penalized_l1(const Matrix& a) {
  if (a.rows() <= 1 || a.cols() <= 1) return 0.0;
  return a.bottomRightCorner(a.rows() - 1, a.cols() - 1).cwiseAbs().sum();
}

}  // namespace

void TtdConfig::validate() const {
  if (basis_count < 0) throw std::invalid_argument("ttd: basis count must be >= 0");
  if (!(omega_init <= omega_final)) throw std::invalid_argument("ttd: omega_init must not exceed omega_final");
  if (omega_step < 0.0 || (omega_step == 0.0 && omega_init != omega_final)) {
    throw std::invalid_argument("ttd: omega_step must be positive unless the grid is a single point");
  }
  if (!(beta_init <= beta_final)) throw std::invalid_argument("ttd: beta_init must not exceed beta_final");
  if (beta_step < 0.0 || (beta_step == 0.0 && beta_init != beta_final)) {
    throw std::invalid_argument("ttd: beta_step must be positive unless the grid is a single point");
  }
  if (beta_init < 0.0) throw std::invalid_argument("ttd: beta must be nonnegative");
  const Vector a = resolved_anchor();
  if (a.size() != 2 * basis_count + 1) throw std::invalid_argument("ttd: anchor must have 2E+1 entries");
  if (a.cwiseAbs().maxCoeff() == 0.0) throw std::invalid_argument("ttd: anchor must be nonzero");
  if (!(fista_tol > 0.0) || !(lbfgs_tol > 0.0) || fista_max_iter < 1 || refine_rounds < 0) {
    throw std::invalid_argument("ttd: solver tolerances must be positive");
  }
}

Vector TtdConfig::resolved_anchor() const {
  if (anchor.size() > 0) return anchor;
  Vector a = Vector::Zero(2 * basis_count + 1);
  a[0] = anchor_scale;
  return a;
}

std::vector<double> TtdConfig::beta_grid() const {
  std::vector<double> out;
  if (beta_step <= 0.0) return {beta_init};
  const double slack = 1e-9 * std::max(1.0, std::abs(beta_final));
  for (int k = 0;; ++k) {
    const double b = beta_init + k * beta_step;
    if (b > beta_final + slack) break;
    out.push_back(b);
  }
  return out;
}

std::vector<std::vector<double>> TtdConfig::omega_grid() const {
  std::vector<double> values;
  if (omega_step == 0.0 || omega_init == omega_final) {
    values.push_back(omega_init);
  } else {
    const double slack = 1e-9 * std::max(1.0, std::abs(omega_final));
    for (int k = 0;; ++k) {
      const double w = omega_init + k * omega_step;
      if (w > omega_final + slack) break;
      values.push_back(w);
    }
  }
  const int e = basis_count;
  std::vector<std::vector<double>> out;
  if (e == 0) {
    out.emplace_back();
    return out;
  }
  const bool distinct = static_cast<int>(values.size()) >= e;
  // Index tuples i_1 < ... < i_E, or nondecreasing when repeats are needed.
  std::vector<int> idx(e, 0);
  if (distinct) {
    for (int k = 0; k < e; ++k) idx[k] = k;
  }
  const int nvals = static_cast<int>(values.size());
  while (true) {
    std::vector<double> tuple(e);
    for (int k = 0; k < e; ++k) tuple[k] = values[idx[k]];
    if (!distinct) {
      // Spread runs of equal values symmetrically.
      for (int k = 0; k < e;) {
        int end = k;
        while (end + 1 < e && idx[end + 1] == idx[k]) ++end;
        const int run = end - k + 1;
        for (int r = 0; r < run; ++r) tuple[k + r] += 1e-3 * (r - 0.5 * (run - 1));
        k = end + 1;
      }
    }
    out.push_back(std::move(tuple));
    // Advance the index tuple.
    int k = e - 1;
    if (distinct) {
      while (k >= 0 && idx[k] == nvals - e + k) --k;
      if (k < 0) break;
      ++idx[k];
      for (int r = k + 1; r < e; ++r) idx[r] = idx[r - 1] + 1;
    } else {
      while (k >= 0 && idx[k] == nvals - 1) --k;
      if (k < 0) break;
      ++idx[k];
      for (int r = k + 1; r < e; ++r) idx[r] = idx[k];
    }
  }
  return out;
}

InnerSolution solve_inner(const std::vector<SegmentSensitivity>& sens, std::span<const double> frequencies,
                          double beta, const TtdConfig& config) {
  if (sens.empty()) throw std::invalid_argument("solve_inner: empty training set");
  if (!(beta >= 0.0)) throw std::invalid_argument("solve_inner: beta must be nonnegative");
  Vector anchor = config.resolved_anchor();
  if (anchor.size() != 2 * static_cast<Eigen::Index>(frequencies.size()) + 1) {
    anchor = Vector::Zero(2 * frequencies.size() + 1);
    anchor[0] = config.resolved_anchor()[0];
  }
  NormalSystem ns = build_normal_system(sens, frequencies, anchor);
  const int rb = ns.basis_rows;
  const auto nz = static_cast<Eigen::Index>(ns.index.size());

  numerics::FistaMasks masks;
  masks.l1_weight = Vector::Zero(nz);
  masks.nonneg.assign(nz, false);
  for (Eigen::Index a = 0; a < nz; ++a) {
    const ZSlot& slot = ns.index[a];
    if (slot.kind == ZSlot::Kind::coefficient && slot.row > 0) masks.l1_weight[a] = 0.5 * beta;
    if (slot.kind == ZSlot::Kind::lambda) masks.nonneg[a] = true;
  }
  numerics::FistaOptions fopt;
  fopt.tol = config.fista_tol;
  fopt.max_iter = config.fista_max_iter;

  // Training time instants for the nonnegativity guard.
  std::vector<double> times;
  if (config.nonneg_theta) {
    for (const auto& s : sens) times.insert(times.end(), s.times.begin(), s.times.end());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
  }

  // Nonnegativity of Theta_s, s >= 1, at the training instants as linear
  // inequalities on the coefficients. The unconstrained solution is kept
  // when it already satisfies them.
  numerics::FistaResult res = numerics::fista_solve(ns.q, ns.c, masks, fopt);
  int rounds = 0;
  if (config.nonneg_theta && ns.feature_dim > 1 && !times.empty()) {
    const Eigen::Index cols = ns.feature_dim - 1;
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(times.size()) * cols, nz);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const Vector row = cost::omega(frequencies, times[k]);
      for (Eigen::Index s = 0; s < cols; ++s) g.block(k * cols + s, s * rb, 1, rb) = row.transpose();
    }
    const double tol = 1e-9 * std::max(1.0, res.z.head(ns.coefficient_count).cwiseAbs().maxCoeff());
    if ((g * res.z).minCoeff() < -tol) {
      // Strictly feasible start: the unconstrained optimum with each column's
      // bias raised until Theta_s is positive at every instant.
      Vector start = res.z;
      const Vector theta = g * start;
      for (Eigen::Index s = 0; s < cols; ++s) {
        double lowest = 0.0;
        for (std::size_t k = 0; k < times.size(); ++k) lowest = std::min(lowest, theta[k * cols + s]);
        start[s * rb] += -lowest + tol;
      }
      res = numerics::active_set_solve(ns.q, ns.c, masks, g, std::move(start), config.fista_tol);
      rounds = res.iterations;
    }
  }

  InnerSolution out;
  const Matrix a = coefficients_from_z(ns, anchor, res.z);
  out.model = cost::TrigTimeModel(std::vector<double>(frequencies.begin(), frequencies.end()), a);
  out.multipliers = multipliers_from_z(ns, sens, res.z);
  out.residual = std::max(0.0, ns.residual(res.z));
  out.objective = out.residual + beta * penalized_l1(a);
  out.converged = res.converged;
  out.nonneg_rounds = rounds;
  return out;
}

double frequency_objective(const std::vector<SegmentSensitivity>& sens, const Matrix& a,
                           const MultiplierSet& multipliers, std::span<const double> frequencies, Vector* grad) {
  const int e = static_cast<int>(frequencies.size());
  const int rb = 2 * e + 1;
  if (a.rows() != rb) throw std::invalid_argument("frequency_objective: A does not match W");
  const int q = static_cast<int>(a.cols());
  std::vector<SmallDual> w(e), om(rb);
  for (int k = 0; k < e; ++k) w[k] = SmallDual::variable(frequencies[k], e, k);
  if (grad != nullptr) grad->setZero(e);

  double total = 0.0;
  Matrix omega_val(rb, 1), omega_der(rb, e);
  for (std::size_t d = 0; d < sens.size(); ++d) {
    const SegmentSensitivity& s = sens[d];
    const Eigen::Index nv = s.feature_grad.rows();
    Vector r = s.terminal_jac_t * multipliers.upsilon[d];
    for (std::size_t k = 0; k < s.active.size(); ++k) {
      r += multipliers.lambda[d](s.active[k].stage, s.active[k].constraint) * s.constraint_grad.col(k);
    }
    Matrix dr = Matrix::Zero(nv, e);
    for (int i = 0; i < s.horizon; ++i) {
      cost::omega<SmallDual>(std::span<const SmallDual>(w), s.times[i], std::span<SmallDual>(om));
      for (int j = 0; j < rb; ++j) {
        omega_val(j, 0) = om[j].value();
        for (int k = 0; k < e; ++k) omega_der(j, k) = om[j].d(k);
      }
      const auto gi = s.feature_grad.middleCols(static_cast<Eigen::Index>(i) * q, q);
      r.noalias() += gi * (a.transpose() * omega_val);
      if (grad != nullptr && e > 0) dr.noalias() += gi * (a.transpose() * omega_der);
    }
    total += r.squaredNorm();
    if (grad != nullptr && e > 0) grad->noalias() += 2.0 * dr.transpose() * r;
  }
  return total;
}

RefineResult refine_frequencies(const std::vector<SegmentSensitivity>& sens, std::vector<double> w_init,
                                double beta, const TtdConfig& config) {
  RefineResult out;
  std::vector<double> w = normalize_frequencies(std::move(w_init));
  const int e = static_cast<int>(w.size());

  // Search W on the reduced objective V(W) = min_{A, multipliers} J without
  // the nonnegativity guard; by the envelope argument dV/dW is the fixed-A
  // gradient at the inner minimizer.
  TtdConfig free_cfg = config;
  free_cfg.nonneg_theta = false;
  InnerSolution cur = solve_inner(sens, w, beta, free_cfg);
  out.objective_trace.push_back(cur.objective);
  std::vector<double> best_w = w;
  double best_obj = cur.objective;

  for (int round = 0; e > 0 && round < config.refine_rounds; ++round) {
    numerics::BoxedFunction f;
    f.dimension = e;
    f.evaluate = [&](const Vector& x, Vector& g) {
      // Frequencies are exchangeable and enter only through cos/sin, so the
      // objective is evaluated at sorted |x| and the gradient mapped back.
      std::vector<int> order(e);
      for (int k = 0; k < e; ++k) order[k] = k;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(x[a]) < std::abs(x[b]); });
      std::vector<double> sorted(e);
      for (int k = 0; k < e; ++k) sorted[k] = std::abs(x[order[k]]);
      const std::vector<double> wx = normalize_frequencies(sorted);
      const InnerSolution inner = solve_inner(sens, wx, beta, free_cfg);
      Vector gs;
      frequency_objective(sens, inner.model.coefficients(), inner.multipliers, wx, &gs);
      g.resize(e);
      for (int k = 0; k < e; ++k) g[order[k]] = x[order[k]] < 0.0 ? -gs[k] : gs[k];
      out.objective_trace.push_back(inner.objective);
      if (inner.objective < best_obj) {
        best_obj = inner.objective;
        best_w = wx;
      }
      return inner.objective;
    };
    const Vector x0 = Eigen::Map<const Vector>(w.data(), e);
    numerics::LbfgsOptions lopt;
    lopt.tol_grad = config.lbfgs_tol * std::max(1.0, cur.residual);
    lopt.max_iter = 100;
    const double before = best_obj;
    try {
      numerics::lbfgs_minimize(f, x0, lopt);
    } catch (const numerics::StagnationError&) {
    }
    out.rounds = round + 1;
    std::vector<double> wn = normalize_frequencies(best_w);
    const double improvement = (before - best_obj) / std::max(before, 1e-300);
    if (wn == w || improvement < config.refine_tol) break;
    // Restart from the normalized iterate so coincident frequencies separate.
    w = std::move(wn);
  }

  out.solution = solve_inner(sens, normalize_frequencies(best_w), beta, config);
  out.objective_trace.push_back(out.solution.objective);
  return out;
}

IocSolution ttd_ioc(const std::vector<SegmentSensitivity>& training, const TtdConfig& config,
                    const Validator& validate) {
  config.validate();
  if (training.empty()) throw std::invalid_argument("ttd_ioc: empty training set");
  const std::vector<double> betas = config.beta_grid();
  const std::vector<std::vector<double>> starts = config.omega_grid();

  struct Item {
    std::size_t beta;
    std::size_t start;
  };
  std::vector<Item> items;
  for (std::size_t b = 0; b < betas.size(); ++b) {
    for (std::size_t g = 0; g < starts.size(); ++g) items.push_back({b, g});
  }
  const std::vector<RefineResult> runs = parallel_map(items.size(), config.threads, [&](std::size_t k) {
    return refine_frequencies(training, starts[items[k].start], betas[items[k].beta], config);
  });

  IocSolution out;
  out.method = "TTD";
  out.config = config;
  out.anchor = config.resolved_anchor();
  double best_e = kInf;
  for (std::size_t b = 0; b < betas.size(); ++b) {
    const InnerSolution* best = nullptr;
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (items[k].beta != b) continue;
      const InnerSolution& cand = runs[k].solution;
      if (best == nullptr || cand.objective < best->objective ||
          (cand.objective == best->objective && cand.model.frequencies() < best->model.frequencies())) {
        best = &cand;
      }
    }
    double e_beta = kInf;
    if (validate) {
      try {
        e_beta = validate(best->model);
      } catch (const std::exception& ex) {
        spdlog::warn("ttd: validation failed for beta {}: {}", betas[b], ex.what());
      }
    }
    if (!std::isfinite(e_beta)) e_beta = kInf;
    out.trace.push_back({betas[b], best->residual, e_beta, best->model.frequencies()});
    spdlog::info("ttd: beta {} W [{}] residual {:.3e} e_v {:.3e}", betas[b], join(best->model.frequencies()),
                 best->residual, e_beta);
    if (b == 0 || e_beta < best_e) {
      best_e = e_beta;
      out.model = best->model;
      out.multipliers = best->multipliers;
      out.training_residual = best->residual;
      out.selected_beta = betas[b];
    }
  }
  return out;
}

IocSolution sp_ioc(const std::vector<SegmentSensitivity>& training, double anchor, const Validator& validate) {
  if (training.empty()) throw std::invalid_argument("sp_ioc: empty training set");
  if (anchor == 0.0 || !std::isfinite(anchor)) throw std::invalid_argument("sp_ioc: anchor must be nonzero");
  TtdConfig cfg;
  cfg.basis_count = 0;
  cfg.anchor_scale = anchor;
  cfg.nonneg_theta = false;
  cfg.omega_init = cfg.omega_final = 0.0;
  cfg.omega_step = 0.0;
  cfg.beta_init = cfg.beta_final = 0.0;
  cfg.beta_step = 1.0;
  const InnerSolution sol = solve_inner(training, {}, 0.0, cfg);

  IocSolution out;
  out.method = "spIOC";
  out.config = cfg;
  out.anchor = cfg.resolved_anchor();
  out.model = sol.model;
  out.multipliers = sol.multipliers;
  out.training_residual = sol.residual;
  double e = kInf;
  if (validate) {
    try {
      e = validate(sol.model);
    } catch (const std::exception& ex) {
      spdlog::warn("spioc: validation failed: {}", ex.what());
    }
  }
  out.trace.push_back({0.0, sol.residual, e, {}});
  return out;
}

}  // namespace ttdioc::kktioc
