#include <Eigen/QR>
#include <cmath>

#include "ttdioc/kktioc.hpp"
#include "ttdioc/numerics.hpp"
#include "ttdioc/parallel.hpp"

namespace ttdioc::kktioc {
namespace {

// Rollout of a segment's inputs with every input entry as a seed.
struct SeededRollout {
  dynamics::SystemModel model;
  int n, m, nv;
  std::vector<WideDual> x;  // current state
  std::vector<WideDual> u;  // current input
  std::vector<WideDual> next;

  SeededRollout(const IocModel& im, const TrajectorySegment& seg)
      : model(im.model.with_ts(seg.ts)), n(model.state_dim()), m(model.input_dim()) {
    if (seg.state_dim() != n || seg.input_dim() != m || seg.x.cols() != seg.horizon() + 1) {
      throw std::invalid_argument("segment does not match the model dimensions");
    }
    nv = seg.horizon() * m;
    if (static_cast<std::size_t>(nv) > WideDual::capacity) {
      throw std::invalid_argument("segment has too many inputs for the dual-number capacity");
    }
    x.resize(n);
    u.resize(m);
    next.resize(n);
    for (int r = 0; r < n; ++r) x[r] = WideDual(seg.x(r, 0));
  }

  void load_input(const TrajectorySegment& seg, int i) {
    for (int j = 0; j < m; ++j) u[j] = WideDual::variable(seg.u(j, i), nv, i * m + j);
  }

  void advance(const TrajectorySegment& seg, int i) {
    model.step<WideDual>(std::span<const WideDual>(x), std::span<const WideDual>(u), std::span<WideDual>(next));
    std::swap(x, next);
    for (int r = 0; r < n; ++r) {
      const double ref = seg.x(r, i + 1);
      if (!(std::abs(x[r].value() - ref) <= 1e-6 * std::max(1.0, std::abs(ref)))) {
        throw std::invalid_argument("segment states are not a rollout of its inputs");
      }
    }
  }

  std::span<const WideDual> xs() const { return x; }
  std::span<const WideDual> us() const { return u; }
};

void copy_derivatives(const WideDual& v, int nv, double* out) {
  for (int k = 0; k < nv; ++k) out[k] = v.d(k);
}

}  // namespace

SegmentSensitivity sensitivity(const IocModel& im, const TrajectorySegment& seg) {
  SeededRollout ro(im, seg);
  const int nn = seg.horizon(), n = ro.n, m = ro.m, nv = ro.nv;
  const int q = im.features.dim(), np = im.constraints.count();

  SegmentSensitivity s;
  s.horizon = nn;
  s.state_dim = n;
  s.input_dim = m;
  s.feature_dim = q;
  s.constraint_count = np;
  s.times.resize(nn);
  s.feature_grad.resize(nv, static_cast<Eigen::Index>(nn) * q);
  std::vector<Vector> cgrads;

  std::vector<WideDual> f(q), g(np);
  for (int i = 0; i < nn; ++i) {
    s.times[i] = seg.time(i);
    ro.load_input(seg, i);
    im.features(ro.xs(), ro.us(), std::span<WideDual>(f));
    for (int k = 0; k < q; ++k) copy_derivatives(f[k], nv, s.feature_grad.col(i * q + k).data());
    if (np > 0) {
      im.constraints.map()(ro.xs(), ro.us(), std::span<WideDual>(g));
      for (int p = 0; p < np; ++p) {
        if (g[p].value() >= -im.eps_act) {
          s.active.push_back({i, p});
          Vector col(nv);
          copy_derivatives(g[p], nv, col.data());
          cgrads.push_back(std::move(col));
        }
      }
    }
    ro.advance(seg, i);
  }
  s.terminal_jac_t.resize(nv, n);
  for (int r = 0; r < n; ++r) copy_derivatives(ro.x[r], nv, s.terminal_jac_t.col(r).data());
  s.constraint_grad.resize(nv, static_cast<Eigen::Index>(cgrads.size()));
  for (std::size_t a = 0; a < cgrads.size(); ++a) s.constraint_grad.col(a) = cgrads[a];
  return s;
}

std::vector<SegmentSensitivity> sensitivities(const IocModel& model, const std::vector<TrajectorySegment>& segments,
                                              int threads) {
  return parallel_map(segments.size(), threads, [&](std::size_t d) { return sensitivity(model, segments[d]); });
}

Vector stationarity_residual(const IocModel& im, const TrajectorySegment& seg, const cost::ThetaSchedule& theta,
                             const Matrix& lambda, const Vector& upsilon) {
  SeededRollout ro(im, seg);
  const int nn = seg.horizon(), n = ro.n;
  const int q = im.features.dim(), np = im.constraints.count();
  if (upsilon.size() != n || (np > 0 && (lambda.rows() != nn || lambda.cols() != np))) {
    throw std::invalid_argument("stationarity_residual: multiplier dimensions do not match");
  }

  WideDual lag(0.0);
  std::vector<WideDual> f(q), g(np);
  for (int i = 0; i < nn; ++i) {
    ro.load_input(seg, i);
    const Vector th = theta(seg.time(i));
    if (th.size() != q) throw std::invalid_argument("stationarity_residual: theta has wrong length");
    im.features(ro.xs(), ro.us(), std::span<WideDual>(f));
    for (int k = 0; k < q; ++k) lag += th[k] * f[k];
    if (np > 0) {
      im.constraints.map()(ro.xs(), ro.us(), std::span<WideDual>(g));
      for (int p = 0; p < np; ++p) lag += lambda(i, p) * g[p];
    }
    ro.advance(seg, i);
  }
  for (int r = 0; r < n; ++r) lag += upsilon[r] * (ro.x[r] - seg.x(r, nn));

  Vector out = Vector::Zero(ro.nv);
  for (int k = 0; k < ro.nv; ++k) out[k] = lag.d(k);
  return out;
}

namespace {

Vector theta_part(const SegmentSensitivity& s, const cost::ThetaSchedule& theta) {
  Vector r = Vector::Zero(s.feature_grad.rows());
  for (int i = 0; i < s.horizon; ++i) {
    const Vector th = theta(s.times[i]);
    r.noalias() += s.feature_grad.middleCols(static_cast<Eigen::Index>(i) * s.feature_dim, s.feature_dim) * th;
  }
  return r;
}

}  // namespace

MultiplierSet fit_multipliers(const std::vector<SegmentSensitivity>& sens, const cost::ThetaSchedule& theta) {
  MultiplierSet out;
  for (const SegmentSensitivity& s : sens) {
    const Vector r0 = theta_part(s, theta);
    const Eigen::Index na = s.constraint_grad.cols();
    Matrix j(r0.size(), na + s.state_dim);
    j << s.constraint_grad, s.terminal_jac_t;
    Vector z;
    if (na == 0) {
      z = j.completeOrthogonalDecomposition().solve(-r0);
    } else {
      numerics::FistaMasks masks;
      masks.nonneg.assign(na + s.state_dim, false);
      for (Eigen::Index a = 0; a < na; ++a) masks.nonneg[a] = true;
      z = numerics::fista_solve(j.transpose() * j, j.transpose() * r0, masks).z;
    }
    Matrix lam = Matrix::Zero(s.horizon, s.constraint_count);
    for (Eigen::Index a = 0; a < na; ++a) lam(s.active[a].stage, s.active[a].constraint) = z[a];
    out.lambda.push_back(std::move(lam));
    out.upsilon.push_back(z.tail(s.state_dim));
  }
  return out;
}

double residual_sum(const std::vector<SegmentSensitivity>& sens, const cost::ThetaSchedule& theta,
                    const MultiplierSet& multipliers) {
  double total = 0.0;
  for (std::size_t d = 0; d < sens.size(); ++d) {
    const SegmentSensitivity& s = sens[d];
    Vector r = theta_part(s, theta) + s.terminal_jac_t * multipliers.upsilon[d];
    for (std::size_t a = 0; a < s.active.size(); ++a) {
      r += multipliers.lambda[d](s.active[a].stage, s.active[a].constraint) * s.constraint_grad.col(a);
    }
    total += r.squaredNorm();
  }
  return total;
}

}  // namespace ttdioc::kktioc
