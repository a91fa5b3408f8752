#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <spdlog/spdlog.h>

#include "ttdioc/focp.hpp"
#include "ttdioc/numerics.hpp"

namespace ttdioc::focp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Stage {
  Matrix a;     // n x n
  Matrix b;     // n x m
  Vector phi;   // q
  Matrix dphi;  // q x (n+m)
  Vector g;     // P
  Matrix dg;    // P x (n+m)
};

struct Pass {
  Matrix x;  // n x (N+1)
  Matrix u;  // m x N
  std::vector<Stage> stages;
};

struct Multipliers {
  Vector upsilon;
  Matrix mu;  // N x P
  double rho = 0.0;
};

// Evaluates the problem along inputs u_i = K x_i + v_i. With an empty K the
// decision variables are the inputs themselves.
class Evaluator {
 public:
  Evaluator(const FocpProblem& problem, Matrix gain) : p_(problem), k_(std::move(gain)) {
    n_ = p_.model.state_dim();
    m_ = p_.model.input_dim();
    q_ = p_.features.dim();
    np_ = p_.constraints.count();
    thetas_.resize(q_, p_.horizon);
    for (int i = 0; i < p_.horizon; ++i) {
      const Vector th = p_.theta(p_.time(i));
      if (th.size() != q_) throw std::invalid_argument("solve_forward: theta and features differ in length");
      thetas_.col(i) = th;
    }
  }

  int horizon() const { return p_.horizon; }
  int input_dim() const { return m_; }
  int state_dim() const { return n_; }
  int constraint_count() const { return np_; }
  const Matrix& gain() const { return k_; }
  const Matrix& thetas() const { return thetas_; }

  Pass forward(const Matrix& v) const {
    const int n = n_, m = m_, nm = n_ + m_;
    Pass pass;
    pass.x.resize(n, p_.horizon + 1);
    pass.u.resize(m, p_.horizon);
    pass.stages.resize(p_.horizon);
    pass.x.col(0) = p_.x0;

    std::array<SmallDual, dynamics::kMaxState> xd, nd;
    std::array<SmallDual, dynamics::kMaxInput> ud;
    std::vector<SmallDual> fd(q_), gd(np_);

    for (int i = 0; i < p_.horizon; ++i) {
      Vector ui = v.col(i);
      if (k_.size() > 0) ui += k_ * pass.x.col(i);
      pass.u.col(i) = ui;
      for (int r = 0; r < n; ++r) xd[r] = SmallDual::variable(pass.x(r, i), nm, r);
      for (int j = 0; j < m; ++j) ud[j] = SmallDual::variable(ui[j], nm, n + j);
      const std::span<const SmallDual> xs(xd.data(), n), us(ud.data(), m);
      p_.model.step<SmallDual>(xs, us, std::span<SmallDual>(nd.data(), n));
      p_.features(xs, us, std::span<SmallDual>(fd));
      if (np_ > 0) p_.constraints.map()(xs, us, std::span<SmallDual>(gd));

      Stage& st = pass.stages[i];
      st.a.resize(n, n);
      st.b.resize(n, m);
      for (int r = 0; r < n; ++r) {
        pass.x(r, i + 1) = nd[r].value();
        for (int c = 0; c < n; ++c) st.a(r, c) = nd[r].d(c);
        for (int c = 0; c < m; ++c) st.b(r, c) = nd[r].d(n + c);
      }
      if (!pass.x.col(i + 1).allFinite()) throw dynamics::DivergenceError("rollout diverged");
      st.phi.resize(q_);
      st.dphi.resize(q_, nm);
      for (int r = 0; r < q_; ++r) {
        st.phi[r] = fd[r].value();
        for (int c = 0; c < nm; ++c) st.dphi(r, c) = fd[r].d(c);
      }
      st.g.resize(np_);
      st.dg.resize(np_, nm);
      for (int r = 0; r < np_; ++r) {
        st.g[r] = gd[r].value();
        for (int c = 0; c < nm; ++c) st.dg(r, c) = gd[r].d(c);
      }
    }
    return pass;
  }

  double cost(const Pass& pass) const {
    double total = 0.0;
    for (int i = 0; i < p_.horizon; ++i) total += thetas_.col(i).dot(pass.stages[i].phi);
    return total;
  }

  Vector terminal_violation(const Pass& pass) const { return pass.x.col(p_.horizon) - p_.xn; }

  // Gradient with respect to the decision variables of
  //   cost + sum_{i,p} w_{i,p} g_p(x_i, u_i) + pn' x_N
  // where w is held fixed (m x N).
  Matrix adjoint(const Pass& pass, const Vector& pn, const Matrix& weights) const {
    Matrix grad(m_, p_.horizon);
    Vector p = pn;
    for (int i = p_.horizon - 1; i >= 0; --i) {
      const Stage& st = pass.stages[i];
      Vector l = st.dphi.transpose() * thetas_.col(i);
      if (np_ > 0) l.noalias() += st.dg.transpose() * weights.row(i).transpose();
      const Vector gu = l.tail(m_) + st.b.transpose() * p;
      grad.col(i) = gu;
      Vector prev = l.head(n_) + st.a.transpose() * p;
      if (k_.size() > 0) prev.noalias() += k_.transpose() * gu;
      p = std::move(prev);
    }
    return grad;
  }

  // Augmented Lagrangian with PHR shifted penalties for the inequalities.
  double augmented(const Pass& pass, const Multipliers& mult, Matrix* grad) const {
    const Vector c = terminal_violation(pass);
    double value = cost(pass) + mult.upsilon.dot(c) + 0.5 * mult.rho * c.squaredNorm();
    Matrix w(p_.horizon, np_);
    for (int i = 0; i < p_.horizon; ++i) {
      for (int r = 0; r < np_; ++r) {
        const double mu = mult.mu(i, r);
        const double shifted = std::max(0.0, mu + mult.rho * pass.stages[i].g[r]);
        w(i, r) = shifted;
        value += (shifted * shifted - mu * mu) / (2.0 * mult.rho);
      }
    }
    if (grad != nullptr) *grad = adjoint(pass, mult.upsilon + mult.rho * c, w);
    return value;
  }

  // Inputs to decision variables along the open-loop rollout of u.
  Matrix to_decision(const Matrix& u) const {
    if (k_.size() == 0) return u;
    Matrix v(m_, p_.horizon);
    Vector x = p_.x0;
    for (int i = 0; i < p_.horizon; ++i) {
      v.col(i) = u.col(i) - k_ * x;
      x = p_.model.step(x, u.col(i));
    }
    return v;
  }

  // Jacobian of x_N with respect to the decision variables (n x mN).
  Matrix terminal_jacobian(const Pass& pass) const {
    Matrix s = Matrix::Zero(n_, m_ * p_.horizon);
    for (int i = 0; i < p_.horizon; ++i) {
      const Stage& st = pass.stages[i];
      Matrix acl = st.a;
      if (k_.size() > 0) acl.noalias() += st.b * k_;
      s = acl * s;
      s.middleCols(i * m_, m_) += st.b;
    }
    return s;
  }

 private:
  const FocpProblem& p_;
  Matrix k_;
  Matrix thetas_;
  int n_ = 0, m_ = 0, q_ = 0, np_ = 0;
};

Eigen::Map<const Matrix> as_matrix(const Vector& v, int rows, int cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

// Newton iterations on the KKT conditions with the inequalities of positive
// multiplier treated as equalities. Returns true if the iterate improved;
// steps that make a multiplier negative or violate an inactive constraint are
// rejected.
bool newton_polish(const Evaluator& ev, Matrix& v, Vector& upsilon, Matrix& mu, const FocpOptions& options) {
  const int m = ev.input_dim(), n = ev.state_dim(), nn = ev.horizon(), np = ev.constraint_count();
  const int nv = m * nn;
  std::vector<std::pair<int, int>> act;
  for (int i = 0; i < nn; ++i) {
    for (int r = 0; r < np; ++r) {
      if (mu(i, r) > 0.0) act.emplace_back(i, r);
    }
  }
  const int na = static_cast<int>(act.size());
  if (nv + n + na > 2000) return false;

  struct State {
    Pass pass;
    Vector r1, r2, r3;
    double worst_inactive = 0.0;
  };
  const auto evaluate = [&](const Matrix& vv, const Vector& ups, const Matrix& w, State& st) {
    st.pass = ev.forward(vv);
    st.r1 = flatten(ev.adjoint(st.pass, ups, w));
    st.r2 = ev.terminal_violation(st.pass);
    st.r3.resize(na);
    for (int k = 0; k < na; ++k) st.r3[k] = st.pass.stages[act[k].first].g[act[k].second];
    st.worst_inactive = 0.0;
    for (int i = 0; i < nn; ++i) {
      for (int r = 0; r < np; ++r) {
        if (w(i, r) == 0.0) st.worst_inactive = std::max(st.worst_inactive, st.pass.stages[i].g[r]);
      }
    }
  };
  const auto merit = [&](const State& st) {
    const double tg = std::max(options.tol_grad, 1e-300), tc = std::max(options.tol_term, 1e-300);
    return st.r1.norm() / tg + st.r2.norm() / tc + st.r3.norm() / tc;
  };

  Matrix w = Matrix::Zero(nn, np);
  for (const auto& [i, r] : act) w(i, r) = mu(i, r);
  State cur;
  try {
    evaluate(v, upsilon, w, cur);
  } catch (const dynamics::DivergenceError&) {
    return false;
  }
  double current = merit(cur);
  bool improved = false;

  for (int iter = 0; iter < 6; ++iter) {
    if (cur.r1.norm() <= 1e-3 * options.tol_grad && cur.r2.norm() <= 1e-3 * options.tol_term &&
        cur.r3.norm() <= 1e-3 * options.tol_term) {
      break;
    }
    // Hessian of the Lagrangian by central differences of its exact gradient.
    Matrix h(nv, nv);
    const double step = 1e-6 * std::max(1.0, v.cwiseAbs().maxCoeff());
    Matrix ga(na, nv);
    try {
      for (int j = 0; j < nv; ++j) {
        Matrix vp = v, vm = v;
        vp.data()[j] += step;
        vm.data()[j] -= step;
        const Matrix gp = ev.adjoint(ev.forward(vp), upsilon, w);
        const Matrix gm = ev.adjoint(ev.forward(vm), upsilon, w);
        h.col(j) = (flatten(gp) - flatten(gm)) / (2.0 * step);
      }
      if (na > 0) {
        const Matrix zero_w = Matrix::Zero(nn, np);
        const Vector base = flatten(ev.adjoint(cur.pass, Vector::Zero(n), zero_w));
        for (int k = 0; k < na; ++k) {
          Matrix unit = zero_w;
          unit(act[k].first, act[k].second) = 1.0;
          ga.row(k) = (flatten(ev.adjoint(cur.pass, Vector::Zero(n), unit)) - base).transpose();
        }
      }
    } catch (const dynamics::DivergenceError&) {
      break;
    }
    h = 0.5 * (h + h.transpose()).eval();
    const Matrix s = ev.terminal_jacobian(cur.pass);

    const int dim = nv + n + na;
    Matrix kkt = Matrix::Zero(dim, dim);
    kkt.topLeftCorner(nv, nv) = h;
    kkt.block(0, nv, nv, n) = s.transpose();
    kkt.block(nv, 0, n, nv) = s;
    if (na > 0) {
      kkt.block(0, nv + n, nv, na) = ga.transpose();
      kkt.block(nv + n, 0, na, nv) = ga;
    }
    Vector rhs(dim);
    rhs << -cur.r1, -cur.r2, -cur.r3;
    const Vector delta = Eigen::FullPivLU<Matrix>(kkt).solve(rhs);
    if (!delta.allFinite()) break;

    const Matrix v_try = v + as_matrix(delta.head(nv), m, nn);
    const Vector ups_try = upsilon + delta.segment(nv, n);
    Matrix w_try = w;
    bool sign_ok = true;
    for (int k = 0; k < na; ++k) {
      w_try(act[k].first, act[k].second) += delta[nv + n + k];
      sign_ok = sign_ok && w_try(act[k].first, act[k].second) >= 0.0;
    }
    if (!sign_ok) break;
    State next_state;
    try {
      evaluate(v_try, ups_try, w_try, next_state);
    } catch (const dynamics::DivergenceError&) {
      break;
    }
    if (next_state.worst_inactive > options.tol_term) break;
    const double next = merit(next_state);
    if (!(next < current)) break;
    v = v_try;
    upsilon = ups_try;
    w = std::move(w_try);
    cur = std::move(next_state);
    current = next;
    improved = true;
  }
  if (improved) mu = w;
  return improved;
}

FocpSolution finalize(const FocpProblem& problem, const Evaluator& ev, const Matrix& v, const Multipliers& mult,
                      double eps_act) {
  const Pass pass = ev.forward(v);
  FocpSolution sol;
  sol.u = pass.u;
  sol.x = dynamics::rollout(problem.model, problem.x0, sol.u);
  sol.cost = ev.cost(pass);
  sol.terminal_residual = (sol.x.col(problem.horizon) - problem.xn).norm();
  sol.upsilon = mult.upsilon;
  const int np = ev.constraint_count();
  sol.lambda = Matrix::Zero(problem.horizon, np);
  sol.active.resize(problem.horizon, np);
  for (int i = 0; i < problem.horizon; ++i) {
    for (int r = 0; r < np; ++r) {
      const bool active = pass.stages[i].g[r] >= -eps_act;
      sol.active(i, r) = active;
      sol.lambda(i, r) = active ? std::max(0.0, mult.mu(i, r)) : 0.0;
    }
  }
  sol.stationarity = lagrangian_gradient(problem, sol.u, sol.lambda, sol.upsilon).norm();
  return sol;
}

}  // namespace

ConstraintSet ConstraintSet::input_box(int input_dim, double umax) {
  if (!(umax > 0.0)) throw std::invalid_argument("input_box: bound must be positive");
  ConstraintSet s;
  s.kind_ = "input_box";
  s.map_ = cost::StageMap::from_generic(2 * input_dim, "input_box", [input_dim, umax](auto, auto u, auto out) {
    for (int j = 0; j < input_dim; ++j) {
      out[2 * j] = u[j] - umax;
      out[2 * j + 1] = -u[j] - umax;
    }
  });
  return s;
}

ConstraintSet ConstraintSet::custom(cost::StageMap g) {
  ConstraintSet s;
  s.kind_ = "custom";
  s.map_ = std::move(g);
  return s;
}

void check_problem(const FocpProblem& problem) {
  if (problem.horizon < 1) throw std::invalid_argument("forward problem: horizon must be >= 1");
  if (problem.x0.size() != problem.model.state_dim() || problem.xn.size() != problem.model.state_dim()) {
    throw std::invalid_argument("forward problem: endpoint dimension mismatch");
  }
  if (problem.features.empty() || !problem.theta) {
    throw std::invalid_argument("forward problem: features and theta are required");
  }
  const double k = problem.t0 / problem.model.ts();
  if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, std::abs(k))) {
    throw std::invalid_argument("forward problem: start time is not a multiple of the sampling time");
  }
}

Matrix stabilizing_gain(const dynamics::SystemModel& model) {
  const int n = model.state_dim(), m = model.input_dim();
  const Vector zx = Vector::Zero(n), zu = Vector::Zero(m);
  const dynamics::StepJacobian lin = dynamics::step_jacobian(model, std::span<const double>(zx.data(), n), std::span<const double>(zu.data(), m));
  const double radius = Eigen::EigenSolver<Matrix>(lin.dx).eigenvalues().cwiseAbs().maxCoeff();
  if (radius <= 1.0) return {};

  // Discrete Riccati iteration with identity weights.
  const Matrix& a = lin.dx;
  const Matrix& b = lin.du;
  Matrix p = Matrix::Identity(n, n);
  for (int it = 0; it < 100000; ++it) {
    const Matrix s = Matrix::Identity(m, m) + b.transpose() * p * b;
    const Matrix next = Matrix::Identity(n, n) + a.transpose() * p * a -
                        a.transpose() * p * b * s.ldlt().solve(b.transpose() * p * a);
    const double change = (next - p).norm();
    p = 0.5 * (next + next.transpose());
    if (change <= 1e-13 * p.norm()) break;
  }
  const Matrix s = Matrix::Identity(m, m) + b.transpose() * p * b;
  return -s.ldlt().solve(b.transpose() * p * a);
}

double total_cost(const FocpProblem& problem, const Matrix& u) {
  check_problem(problem);
  const Evaluator ev(problem, Matrix());
  return ev.cost(ev.forward(u));
}

Matrix lagrangian_gradient(const FocpProblem& problem, const Matrix& u, const Matrix& lambda,
                           const Vector& upsilon) {
  check_problem(problem);
  const Evaluator ev(problem, Matrix());
  if (u.rows() != ev.input_dim() || u.cols() != problem.horizon || upsilon.size() != ev.state_dim() ||
      (ev.constraint_count() > 0 && (lambda.rows() != problem.horizon || lambda.cols() != ev.constraint_count()))) {
    throw std::invalid_argument("lagrangian_gradient: dimension mismatch");
  }
  const Matrix w = ev.constraint_count() > 0 ? lambda : Matrix(problem.horizon, 0);
  return ev.adjoint(ev.forward(u), upsilon, w);
}

namespace {

FocpSolution solve_normalized(const FocpProblem& problem, const FocpOptions& options) {
  const Evaluator ev(problem, stabilizing_gain(problem.model));
  const int m = ev.input_dim(), n = ev.state_dim(), nn = problem.horizon, np = ev.constraint_count();

  Matrix v = options.warm_start.size() > 0 ? ev.to_decision(options.warm_start) : Matrix::Zero(m, nn);
  if (v.rows() != m || v.cols() != nn) throw std::invalid_argument("solve_forward: warm start has wrong shape");

  Multipliers mult{Vector::Zero(n), Matrix::Zero(nn, np), options.rho0};
  numerics::LbfgsOptions inner;
  inner.tol_grad = options.tol_grad;
  inner.max_iter = options.max_inner;

  Matrix best_v = v;
  Multipliers best_mult = mult;
  double best_violation = kInf;
  double previous_violation = kInf;
  int polish_attempts = 0;
  std::vector<double> trace;
  int inner_total = 0;

  for (int outer = 1; outer <= options.max_outer; ++outer) {
    numerics::BoxedFunction f;
    f.dimension = m * nn;
    f.evaluate = [&](const Vector& z, Vector& grad) {
      try {
        Matrix g;
        const double val = ev.augmented(ev.forward(as_matrix(z, m, nn)), mult, &g);
        grad = flatten(g);
        return val;
      } catch (const dynamics::DivergenceError&) {
        grad.setZero();
        return kInf;
      }
    };
    try {
      const numerics::LbfgsResult res = numerics::lbfgs_minimize(f, flatten(v), inner);
      v = as_matrix(res.x, m, nn);
      inner_total += res.iterations;
    } catch (const numerics::StagnationError& e) {
      v = as_matrix(e.best_x, m, nn);
    }

    Pass pass;
    try {
      pass = ev.forward(v);
    } catch (const dynamics::DivergenceError&) {
      break;
    }
    trace.push_back(ev.augmented(pass, mult, nullptr));

    // First-order multiplier updates; the Lagrangian gradient at the updated
    // multipliers equals the augmented gradient at the old ones.
    const Vector c = ev.terminal_violation(pass);
    mult.upsilon += mult.rho * c;
    double infeasibility = 0.0;
    double slackness = 0.0;
    for (int i = 0; i < nn; ++i) {
      for (int r = 0; r < np; ++r) {
        const double g = pass.stages[i].g[r];
        mult.mu(i, r) = std::max(0.0, mult.mu(i, r) + mult.rho * g);
        infeasibility = std::max(infeasibility, g);
        slackness = std::max(slackness, std::abs(mult.mu(i, r) * g));
      }
    }
    const double gradient = ev.adjoint(pass, mult.upsilon, mult.mu).norm();
    const double violation = std::max(c.norm(), infeasibility);
    if (violation < best_violation) {
      best_violation = violation;
      best_v = v;
      best_mult = mult;
    }
    spdlog::debug("focp outer {}: |c|={:.3e} infeas={:.3e} grad={:.3e} rho={:.1e}", outer, c.norm(),
                  infeasibility, gradient, mult.rho);

    bool done = c.norm() <= options.tol_term && infeasibility <= options.tol_term && slackness <= 1e-8 &&
                gradient <= options.tol_grad;

    // Newton polish once the constraint is nearly met.
    if (!done && options.polish && c.norm() <= 1e-3 && infeasibility <= 1e-3 && polish_attempts < 3) {
      ++polish_attempts;
      Vector ups_p = mult.upsilon;
      Matrix mu_p = mult.mu;
      Matrix v_p = v;
      if (newton_polish(ev, v_p, ups_p, mu_p, options)) {
        const Pass polished = ev.forward(v_p);
        const Vector cp = ev.terminal_violation(polished);
        double inf_p = 0.0, slack_p = 0.0;
        for (int i = 0; i < nn; ++i) {
          for (int r = 0; r < np; ++r) {
            inf_p = std::max(inf_p, polished.stages[i].g[r]);
            slack_p = std::max(slack_p, std::abs(mu_p(i, r) * polished.stages[i].g[r]));
          }
        }
        const double grad_p = ev.adjoint(polished, ups_p, mu_p).norm();
        v = std::move(v_p);
        mult.upsilon = std::move(ups_p);
        mult.mu = std::move(mu_p);
        if (std::max(cp.norm(), inf_p) < best_violation) {
          best_violation = std::max(cp.norm(), inf_p);
          best_v = v;
          best_mult = mult;
        }
        done = cp.norm() <= options.tol_term && inf_p <= options.tol_term && slack_p <= 1e-8 &&
               grad_p <= options.tol_grad;
      }
    }

    if (done) {
      FocpSolution sol = finalize(problem, ev, v, mult, options.eps_act);
      sol.outer_iterations = outer;
      sol.inner_iterations = inner_total;
      sol.converged = true;
      sol.al_trace = std::move(trace);
      return sol;
    }
    if (violation > 0.25 * previous_violation) mult.rho = std::min(mult.rho * options.rho_growth, options.rho_max);
    previous_violation = violation;
  }

  FocpSolution best = finalize(problem, ev, best_v, best_mult, options.eps_act);
  best.outer_iterations = options.max_outer;
  best.inner_iterations = inner_total;
  best.al_trace = std::move(trace);
  throw InfeasibleError("solve_forward: terminal constraint not met (residual " +
                            std::to_string(best.terminal_residual) + ")",
                        std::move(best));
}

void unscale(FocpSolution& sol, double scale) {
  sol.cost *= scale;
  sol.stationarity *= scale;
  sol.lambda *= scale;
  sol.upsilon *= scale;
  for (double& v : sol.al_trace) v *= scale;
}

}  // namespace

FocpSolution solve_forward(const FocpProblem& problem, const FocpOptions& options) {
  check_problem(problem);
  // The minimizer is invariant to a positive rescaling of Theta; solving
  // with unit peak weight keeps the tolerances and penalty schedule
  // meaningful for any scale.
  double scale = 0.0;
  for (int i = 0; i < problem.horizon; ++i) scale = std::max(scale, problem.theta(problem.time(i)).cwiseAbs().maxCoeff());
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  FocpProblem normalized = problem;
  normalized.theta = [theta = problem.theta, scale](double t) { return Vector(theta(t) / scale); };
  try {
    FocpSolution sol = solve_normalized(normalized, options);
    unscale(sol, scale);
    return sol;
  } catch (InfeasibleError& e) {
    FocpSolution best = std::move(e.best);
    unscale(best, scale);
    throw InfeasibleError(e.what(), std::move(best));
  }
}

}  // namespace ttdioc::focp
