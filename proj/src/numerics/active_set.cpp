#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ttdioc/numerics.hpp"

namespace ttdioc::numerics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Convex QP  min 1/2 x'Hx + f'x  s.t.  a_k x >= b_k  by a primal active-set
// method from a feasible x. Returns the final working set multipliers in mu
// (indexed like the constraint rows, zero when inactive).
struct QpResult {
  Vector x;
  Vector mu;
  int iterations = 0;
  bool optimal = false;
};

QpResult primal_active_set(const Matrix& h, const Vector& f, const Matrix& a, const Vector& b, Vector x,
                           std::vector<char> working, double tol, int limit) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = a.rows();
  const double hscale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  Vector row_norm(m);
  for (Eigen::Index k = 0; k < m; ++k) row_norm[k] = std::max(a.row(k).norm(), 1e-300);

  QpResult out;
  out.mu = Vector::Zero(m);
  int it = 0;
  for (; it < limit; ++it) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (working[k]) act.push_back(k);
    }
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    Matrix aw(na, n);
    for (Eigen::Index r = 0; r < na; ++r) aw.row(r) = a.row(act[r]) / row_norm[act[r]];

    // Null space of the working constraints.
    Matrix z;
    if (na > 0) {
      Eigen::JacobiSVD<Matrix> svd(aw, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      Eigen::Index rank = 0;
      for (Eigen::Index r = 0; r < sv.size(); ++r) rank += sv[r] > 1e-10 * sv[0] ? 1 : 0;
      z = svd.matrixV().rightCols(n - rank);
    } else {
      z = Matrix::Identity(n, n);
    }

    const Vector grad = h * x + f;
    Vector p = Vector::Zero(n);
    bool unbounded_dir = false;
    if (z.cols() > 0) {
      const Matrix hz = z.transpose() * h * z;
      const Vector gz = z.transpose() * grad;
      Eigen::SelfAdjointEigenSolver<Matrix> es(hz);
      const Vector& ev = es.eigenvalues();
      const Matrix& v = es.eigenvectors();
      const Vector coeff = v.transpose() * gz;
      const double cut = 1e-13 * hscale;
      // Descent along flat directions of the reduced Hessian, if any.
      Vector flat = Vector::Zero(z.cols());
      for (Eigen::Index j = 0; j < ev.size(); ++j) {
        if (ev[j] <= cut) flat -= coeff[j] * v.col(j);
      }
      if (flat.norm() > 1e-14 * std::max(1.0, gz.norm()) && flat.norm() > 0.0 &&
          gz.dot(flat) < -1e-13 * std::max(1.0, gz.norm()) * flat.norm()) {
        p = z * flat;
        unbounded_dir = true;
      } else {
        Vector y = Vector::Zero(z.cols());
        for (Eigen::Index j = 0; j < ev.size(); ++j) {
          if (ev[j] > cut) y -= (coeff[j] / ev[j]) * v.col(j);
        }
        p = z * y;
      }
    }

    // A step is worth taking when it is not rounding noise: either it moves
    // x noticeably or the quadratic model predicts a real decrease.
    const double xscale = std::max(1.0, x.cwiseAbs().maxCoeff());
    const double decrease = -(grad.dot(p) + 0.5 * p.dot(h * p));
    const double fscale = std::max(1.0, std::abs(0.5 * x.dot(h * x) + f.dot(x)));
    if (unbounded_dir || (p.norm() > 1e-9 * xscale) || (p.norm() > 1e-13 * xscale && decrease > 1e-14 * fscale)) {
      double step = unbounded_dir ? kInf : 1.0;
      Eigen::Index block = -1;
      const Vector ap = a * p;
      const Vector ax = a * x;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (working[k] || ap[k] >= -1e-13 * row_norm[k] * p.norm()) continue;
        const double s = std::max(0.0, ax[k] - b[k]) / (-ap[k]);
        if (s < step) {
          step = s;
          block = k;
        }
      }
      if (!std::isfinite(step)) throw std::runtime_error("active_set: problem is unbounded below");
      x += step * p;
      if (block >= 0) working[block] = 1;
      continue;
    }

    // Stationary on the working set: multipliers from A_W' mu = grad.
    out.mu.setZero();
    if (na > 0) {
      const Vector mu_scaled = aw.transpose().completeOrthogonalDecomposition().solve(grad);
      for (Eigen::Index r = 0; r < na; ++r) out.mu[act[r]] = mu_scaled[r] / row_norm[act[r]];
    }
    Eigen::Index drop = -1;
    double most_negative = -tol;
    for (Eigen::Index k : act) {
      const double scaled = out.mu[k] * row_norm[k];
      if (scaled < most_negative) {
        most_negative = scaled;
        drop = k;
      }
    }
    if (drop < 0) {
      out.optimal = true;
      break;
    }
    working[drop] = 0;
  }
  out.iterations = it;
  out.x = std::move(x);
  return out;
}

enum class Role { plain, penalized, nonneg, fixed };

}  // namespace

FistaResult active_set_solve(const Matrix& q, const Vector& c, const FistaMasks& masks, const Matrix& g,
                             Vector z, double tol, int max_iter) {
  const Eigen::Index n = c.size();
  if (q.rows() != n || q.cols() != n || z.size() != n) throw std::invalid_argument("active_set: dimension mismatch");
  if (g.rows() > 0 && g.cols() != n) throw std::invalid_argument("active_set: constraint width mismatch");

  Vector w = Vector::Zero(n);
  std::vector<Role> role(n, Role::plain);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (masks.l1_weight.size() == n) w[i] = masks.l1_weight[i];
    if (!masks.fixed.empty() && masks.fixed[i]) {
      role[i] = Role::fixed;
      if (masks.fixed_values.size() == n) z[i] = masks.fixed_values[i];
    } else if (!masks.nonneg.empty() && masks.nonneg[i]) {
      role[i] = Role::nonneg;
      if (z[i] < 0.0) throw std::invalid_argument("active_set: infeasible start");
    } else if (w[i] > 0.0) {
      role[i] = Role::penalized;
    }
  }

  // Variables x: one per plain / nonneg coordinate, two (p, n) per penalized
  // coordinate; z = T x + z_fixed.
  std::vector<Eigen::Index> first(n, -1);
  Eigen::Index nx = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (role[i] == Role::fixed) continue;
    first[i] = nx;
    nx += role[i] == Role::penalized ? 2 : 1;
  }
  Matrix t = Matrix::Zero(n, nx);
  Vector z_fixed = Vector::Zero(n);
  Vector x(nx);
  Vector lin = Vector::Zero(nx);
  std::vector<Eigen::Index> bounded;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = first[i];
    switch (role[i]) {
      case Role::fixed:
        z_fixed[i] = z[i];
        break;
      case Role::plain:
        t(i, j) = 1.0;
        x[j] = z[i];
        break;
      case Role::nonneg:
        t(i, j) = 1.0;
        x[j] = z[i];
        lin[j] = w[i];
        bounded.push_back(j);
        break;
      case Role::penalized:
        t(i, j) = 1.0;
        t(i, j + 1) = -1.0;
        x[j] = std::max(0.0, z[i]);
        x[j + 1] = std::max(0.0, -z[i]);
        lin[j] = lin[j + 1] = w[i];
        bounded.push_back(j);
        bounded.push_back(j + 1);
        break;
    }
  }
  const Matrix h = t.transpose() * q * t;
  const Vector f = t.transpose() * (c + q * z_fixed) + lin;

  const Eigen::Index nb = static_cast<Eigen::Index>(bounded.size());
  const Eigen::Index ng = g.rows();
  Matrix a = Matrix::Zero(nb + ng, nx);
  Vector b = Vector::Zero(nb + ng);
  for (Eigen::Index r = 0; r < nb; ++r) a(r, bounded[r]) = 1.0;
  if (ng > 0) {
    a.bottomRows(ng) = g * t;
    b.tail(ng) = -(g * z_fixed);
  }
  const Vector slack = a * x - b;
  const double feas_tol = 1e-10 * std::max(1.0, x.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < slack.size(); ++k) {
    if (slack[k] < -feas_tol * std::max(1.0, a.row(k).norm())) throw std::invalid_argument("active_set: infeasible start");
  }
  // Bounds at zero start in the working set.
  std::vector<char> working(nb + ng, 0);
  for (Eigen::Index r = 0; r < nb; ++r) working[r] = x[bounded[r]] == 0.0 ? 1 : 0;

  const double scale = std::max({1.0, c.cwiseAbs().maxCoeff(), q.cwiseAbs().maxCoeff() * z.cwiseAbs().maxCoeff()});
  const int limit = max_iter > 0 ? max_iter : 10 * static_cast<int>(nx + nb + ng) + 50;
  const QpResult qp = primal_active_set(h, f, a, b, std::move(x), std::move(working), tol * scale, limit);

  FistaResult out;
  out.z = t * qp.x + z_fixed;
  // p and n of a penalized coordinate are never both positive at an optimum;
  // cancel any common part left by degenerate steps.
  const double xmax = std::max(1.0, qp.x.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (role[i] == Role::penalized && std::abs(out.z[i]) <= 1e-13 * xmax) out.z[i] = 0.0;
  }
  out.iterations = qp.iterations;
  out.objective = composite_objective(q, c, masks, out.z);

  // Composite optimality with the general-constraint multipliers.
  Vector red = q * out.z + c;
  if (ng > 0) red -= g.transpose() * qp.mu.tail(ng);
  double viol = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gi = red[i];
    const double zi = out.z[i];
    switch (role[i]) {
      case Role::fixed:
        break;
      case Role::plain:
        viol = std::max(viol, std::abs(gi));
        break;
      case Role::nonneg:
        viol = std::max(viol, zi > 0.0 ? std::abs(gi + w[i]) : std::max(0.0, -(gi + w[i])));
        break;
      case Role::penalized:
        viol = std::max(viol, zi != 0.0 ? std::abs(gi + std::copysign(w[i], zi)) : std::max(0.0, std::abs(gi) - w[i]));
        break;
    }
  }
  if (ng > 0) {
    viol = std::max(viol, std::max(0.0, -(g * out.z).minCoeff()));
    viol = std::max(viol, std::max(0.0, -qp.mu.tail(ng).minCoeff()));
  }
  out.kkt_violation = viol;
  out.converged = qp.optimal && viol <= 10.0 * tol * std::max(scale, 1.0);
  return out;
}

}  // namespace ttdioc::numerics
