#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ttdioc/numerics.hpp"
#include "ttdioc/simd.hpp"

namespace ttdioc::numerics {
namespace {

struct Coordinates {
  // Per coordinate: 0 free, 1 fixed.
  std::vector<char> fixed;
  std::vector<char> nonneg;
  Vector weight;
};

Coordinates normalize(const FistaMasks& masks, Eigen::Index n) {
  Coordinates out;
  out.fixed.assign(n, 0);
  out.nonneg.assign(n, 0);
  out.weight = Vector::Zero(n);
  const auto check = [n](std::size_t size, const char* what) {
    if (size != 0 && size != static_cast<std::size_t>(n)) {
      throw std::invalid_argument(std::string("fista: mask length mismatch: ") + what);
    }
  };
  check(static_cast<std::size_t>(masks.l1_weight.size()), "l1_weight");
  check(masks.nonneg.size(), "nonneg");
  check(masks.fixed.size(), "fixed");
  if (!masks.fixed.empty()) check(static_cast<std::size_t>(masks.fixed_values.size()), "fixed_values");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (masks.l1_weight.size() != 0) {
      if (masks.l1_weight[j] < 0.0) throw std::invalid_argument("fista: negative l1 weight");
      out.weight[j] = masks.l1_weight[j];
    }
    if (!masks.nonneg.empty()) out.nonneg[j] = masks.nonneg[j] ? 1 : 0;
    if (!masks.fixed.empty()) out.fixed[j] = masks.fixed[j] ? 1 : 0;
  }
  return out;
}

double coordinate_violation(double g, double z, double w, bool nonneg) {
  if (nonneg) {
    // Objective on z >= 0 is linear in the l1 term: w * z.
    const double gw = g + w;
    return z > 0.0 ? std::abs(gw) : std::max(0.0, -gw);
  }
  if (z != 0.0) return std::abs(g + std::copysign(w, z));
  return std::max(0.0, std::abs(g) - w);
}

double prox(double v, double threshold, bool nonneg) {
  double out = std::abs(v) <= threshold ? 0.0 : v - std::copysign(threshold, v);
  if (nonneg && out < 0.0) out = 0.0;
  return out;
}

double largest_eigenvalue(const Matrix& q) {
  const Eigen::Index n = q.rows();
  if (n == 0) return 0.0;
  Vector v = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vector w(n);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    symv(q, v, w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / norm;
    if (it > 10 && std::abs(next - lambda) <= 1e-6 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  // Power iteration approaches from below; Gershgorin caps the safety margin.
  double gersh = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) gersh = std::max(gersh, q.row(i).cwiseAbs().sum());
  return std::min(1.05 * lambda, gersh);
}


}  // namespace

void symv(const Matrix& q, const Vector& x, Vector& y) {
  y.resize(q.rows());
  simd::active().gemv(q.data(), static_cast<std::size_t>(q.rows()), static_cast<std::size_t>(q.cols()),
                      static_cast<std::size_t>(q.rows()), x.data(), y.data());
}

double composite_kkt_scale(const Matrix& q, const Vector& c, const Vector& z) {
  const double qmax = q.size() ? q.cwiseAbs().maxCoeff() : 0.0;
  const double zmax = z.size() ? z.cwiseAbs().maxCoeff() : 0.0;
  const double cmax = c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
  return std::max({1.0, cmax, qmax * zmax});
}

double composite_kkt_violation(const Matrix& q, const Vector& c, const FistaMasks& masks,
                               const Vector& z) {
  const Coordinates coords = normalize(masks, z.size());
  Vector g;
  symv(q, z, g);
  g += c;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (coords.fixed[j]) continue;
    worst = std::max(worst, coordinate_violation(g[j], z[j], coords.weight[j], coords.nonneg[j]));
  }
  return worst;
}

double composite_objective(const Matrix& q, const Vector& c, const FistaMasks& masks,
                           const Vector& z) {
  const Coordinates coords = normalize(masks, z.size());
  Vector qz;
  symv(q, z, qz);
  return 0.5 * z.dot(qz) + c.dot(z) + coords.weight.dot(z.cwiseAbs());
}

FistaResult fista_solve(const Matrix& q, const Vector& c, const FistaMasks& masks,
                        const FistaOptions& options) {
  const Eigen::Index n = c.size();
  if (q.rows() != n || q.cols() != n) throw std::invalid_argument("fista: Q/c dimension mismatch");
  const Coordinates coords = normalize(masks, n);

  // Reduce to the free coordinates.
  std::vector<Eigen::Index> free;
  Vector z_full = Vector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (coords.fixed[j]) {
      z_full[j] = masks.fixed_values[j];
    } else {
      free.push_back(j);
    }
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
  Matrix qf(nf, nf);
  Vector cf(nf), wf(nf), d(nf);
  std::vector<char> nn(nf);
  for (Eigen::Index a = 0; a < nf; ++a) {
    double shift = c[free[a]];
    for (Eigen::Index j = 0; j < n; ++j) {
      if (coords.fixed[j]) shift += q(free[a], j) * z_full[j];
    }
    cf[a] = shift;
    wf[a] = coords.weight[free[a]];
    nn[a] = coords.nonneg[free[a]];
    for (Eigen::Index b = 0; b < nf; ++b) qf(a, b) = q(free[a], free[b]);
    const double diag = qf(a, a);
    d[a] = diag > 0.0 ? 1.0 / std::sqrt(diag) : 1.0;
  }

  // Jacobi-scaled problem in y = z / d.
  const Matrix qs = d.asDiagonal() * qf * d.asDiagonal();
  const Vector cs = d.cwiseProduct(cf);
  const Vector ws = d.cwiseProduct(wf);
  const double lip = std::max(largest_eigenvalue(qs), std::numeric_limits<double>::min());
  const double step = 1.0 / lip;

  const auto objective = [&](const Vector& y, Vector& qy) {
    symv(qs, y, qy);
    return 0.5 * y.dot(qy) + cs.dot(y) + ws.dot(y.cwiseAbs());
  };
  const auto unscaled_violation = [&](const Vector& y, const Vector& qy) {
    double worst = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) {
      // Gradient in z coordinates is (Q' y + c')_a / d_a.
      const double g = (qy[a] + cs[a]) / d[a];
      worst = std::max(worst, coordinate_violation(g, y[a] * d[a], wf[a], nn[a]));
    }
    return worst;
  };
  const auto assemble = [&](const Vector& y) {
    Vector z = z_full;
    for (Eigen::Index a = 0; a < nf; ++a) z[free[a]] = y[a] * d[a];
    return z;
  };

  Vector y = Vector::Zero(nf);
  Vector y_prev = y;
  Vector mom = y;
  Vector qy(nf), qmom(nf), qnext(nf);
  double f_cur = objective(y, qy);
  double t = 1.0;
  FistaResult result;
  double tol_abs = options.tol * composite_kkt_scale(qf, cf, Vector::Zero(nf));

  Vector next(nf);
  int it = 0;
  for (; it < options.max_iter; ++it) {
    symv(qs, mom, qmom);
    for (Eigen::Index a = 0; a < nf; ++a) {
      next[a] = prox(mom[a] - step * (qmom[a] + cs[a]), step * ws[a], nn[a]);
    }
    const double f_next = objective(next, qnext);
    if (f_next > f_cur && t > 1.0) {
      // Momentum overshot: restart from the last iterate.
      t = 1.0;
      mom = y;
      continue;
    }
    y_prev = y;
    y = next;
    qy = qnext;
    f_cur = f_next;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    mom = y + ((t - 1.0) / t_next) * (y - y_prev);
    t = t_next;

    if (it % 10 == 0) {
      tol_abs = options.tol * composite_kkt_scale(qf, cf, y.cwiseProduct(d));
      if (unscaled_violation(y, qy) <= tol_abs) {
        ++it;
        break;
      }
    }
  }
  result.iterations = it;

  Vector z = assemble(y);
  double violation = composite_kkt_violation(q, c, masks, z);

  if (options.polish && nf > 0) {
    Vector zf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) zf[a] = y[a] * d[a];
    FistaMasks reduced;
    reduced.l1_weight = wf;
    reduced.nonneg.assign(nn.begin(), nn.end());
    for (Eigen::Index a = 0; a < nf; ++a) {
      if (nn[a] && zf[a] < 0.0) zf[a] = 0.0;
    }
    zf = active_set_solve(qf, cf, reduced, Matrix(0, nf), std::move(zf), options.tol).z;
    const Vector z_try = assemble(zf.cwiseQuotient(d));
    const double v_try = composite_kkt_violation(q, c, masks, z_try);
    if (v_try < violation) {
      z = z_try;
      violation = v_try;
    }
  }

  result.z = std::move(z);
  result.kkt_violation = violation;
  result.objective = composite_objective(q, c, masks, result.z);
  result.converged = violation <= options.tol * composite_kkt_scale(q, c, result.z);
  return result;
}

}  // namespace ttdioc::numerics
