#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ttdioc/slidingwindow.hpp"

namespace ttdioc::slidingwindow {

void SlidingWindowConfig::validate(int input_dim, int feature_dim) const {
  if (window < 1) throw std::invalid_argument("kf: window length must be >= 1");
  if (window * input_dim < feature_dim) {
    throw std::invalid_argument("kf: window too short, need M m >= q");
  }
  if (!(process_var > 0.0) || !(measurement_var > 0.0) || !(initial_var > 0.0)) {
    throw std::invalid_argument("kf: noise scales must be positive");
  }
  if (anchor == 0.0 || !std::isfinite(anchor)) throw std::invalid_argument("kf: anchor must be nonzero");
}

Vector KfEstimate::at(double t) const {
  if (center.empty()) throw std::logic_error("kf: empty estimate");
  const auto it = std::lower_bound(center.begin(), center.end(), t);
  std::size_t k = static_cast<std::size_t>(it - center.begin());
  if (k == center.size()) {
    k = center.size() - 1;
  } else if (k > 0 && t - center[k - 1] <= center[k] - t) {
    --k;
  }
  return theta.col(static_cast<Eigen::Index>(k));
}

cost::ThetaSchedule KfEstimate::schedule() const {
  return [est = *this](double t) { return est.at(t); };
}

namespace {

int grid_index(double t, double ts) {
  const double k = t / ts;
  const double r = std::round(k);
  if (std::abs(k - r) > 1e-6) throw std::invalid_argument("kf: segment start is off the sampling grid");
  return static_cast<int>(r);
}

// Rows of one segment for stages [first, first + M): the Lagrangian gradient
// with Theta held constant over the segment, projected onto the orthogonal
// complement of the multiplier columns.
Matrix window_rows(const kktioc::SegmentSensitivity& s, int first, int window) {
  const int m = s.input_dim;
  const int q = s.feature_dim;
  const int r0 = first * m;
  const int nr = window * m;
  Matrix g = Matrix::Zero(nr, q);
  for (int i = 0; i < s.horizon; ++i) g += s.feature_grad.block(r0, i * q, nr, q);

  Matrix nuisance(nr, s.terminal_jac_t.cols() + s.constraint_grad.cols());
  nuisance << s.terminal_jac_t.middleRows(r0, nr), s.constraint_grad.middleRows(r0, nr);
  if (nuisance.cols() == 0) return g;
  Eigen::ColPivHouseholderQR<Matrix> qr(nuisance);
  qr.setThreshold(1e-12);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) return g;
  const Matrix basis = Matrix(qr.householderQ()).leftCols(rank);
  return g - basis * (basis.transpose() * g);
}

}  // namespace

KfEstimate kf_estimate(const std::vector<kktioc::SegmentSensitivity>& training, double ts,
                       const SlidingWindowConfig& config) {
  if (training.empty()) throw std::invalid_argument("kf: empty training set");
  if (!(ts > 0.0)) throw std::invalid_argument("kf: Ts must be positive");
  const int m = training.front().input_dim;
  const int q = training.front().feature_dim;
  config.validate(m, q);
  const int window = config.window;

  std::vector<int> first(training.size());
  int last = 0;
  for (std::size_t d = 0; d < training.size(); ++d) {
    const auto& s = training[d];
    if (s.input_dim != m || s.feature_dim != q) throw std::invalid_argument("kf: inconsistent segments");
    first[d] = grid_index(s.times.front(), ts);
    last = std::max(last, first[d] + s.horizon);
  }
  if (last < window) throw std::invalid_argument("kf: data shorter than one window");

  const int p = q - 1;
  KfEstimate out;
  out.ts = ts;
  out.window = window;
  const int count = last - window + 1;
  out.theta.resize(q, count);

  Vector mean = Vector::Zero(p);
  Matrix cov = config.initial_var * Matrix::Identity(p, p);
  for (int k = 0; k < count; ++k) {
    if (k > 0) cov.diagonal().array() += config.process_var;

    std::vector<Matrix> blocks;
    Eigen::Index rows = 0;
    for (std::size_t d = 0; d < training.size(); ++d) {
      const int local = k - first[d];
      if (local < 0 || local + window > training[d].horizon) continue;
      blocks.push_back(window_rows(training[d], local, window));
      rows += blocks.back().rows();
    }

    if (rows > 0 && p > 0) {
      Matrix h(rows, p);
      Vector y(rows);
      Eigen::Index at = 0;
      for (const Matrix& b : blocks) {
        h.middleRows(at, b.rows()) = b.rightCols(p);
        y.segment(at, b.rows()) = -config.anchor * b.col(0);
        at += b.rows();
      }
      Matrix s = h * cov * h.transpose();
      s.diagonal().array() += config.measurement_var;
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success) {
        s.diagonal().array() += 1e-10;
        llt.compute(s);
        out.regularized = true;
      }
      const Matrix gain = llt.solve(h * cov).transpose();  // P H' S^-1
      mean += gain * (y - h * mean);
      // Joseph form keeps the covariance symmetric positive definite.
      const Matrix ikh = Matrix::Identity(p, p) - gain * h;
      cov = ikh * cov * ikh.transpose() + config.measurement_var * gain * gain.transpose();
      cov = 0.5 * (cov + cov.transpose()).eval();
    }

    out.start.push_back(k);
    out.center.push_back((k + 0.5 * (window - 1)) * ts);
    out.theta(0, k) = config.anchor;
    out.theta.col(k).tail(p) = mean;
    out.covariance.push_back(cov);
    out.rows.push_back(static_cast<int>(rows));
  }
  return out;
}

}  // namespace ttdioc::slidingwindow
