#include <stdexcept>

#include "ttdioc/kktioc.hpp"
#include "ttdioc/simd.hpp"

namespace ttdioc::kktioc {

NormalSystem build_normal_system(const std::vector<SegmentSensitivity>& sens, std::span<const double> frequencies,
                                 const Vector& anchor, bool keep_jacobian) {
  if (sens.empty()) throw std::invalid_argument("build_normal_system: no training segments");
  const int rb = 2 * static_cast<int>(frequencies.size()) + 1;
  const int q = sens.front().feature_dim;
  if (anchor.size() != rb) throw std::invalid_argument("build_normal_system: anchor must have 2E+1 entries");

  NormalSystem ns;
  ns.basis_rows = rb;
  ns.feature_dim = q;
  ns.coefficient_count = rb * (q - 1);
  for (int s = 1; s < q; ++s) {
    for (int j = 0; j < rb; ++j) ns.index.push_back({ZSlot::Kind::coefficient, -1, j, s});
  }
  Eigen::Index rows = 0;
  for (std::size_t d = 0; d < sens.size(); ++d) {
    const SegmentSensitivity& s = sens[d];
    if (s.feature_dim != q) throw std::invalid_argument("build_normal_system: segments disagree on features");
    rows += s.feature_grad.rows();
    ns.lambda_offset.push_back(static_cast<int>(ns.index.size()));
    for (const ActiveEntry& a : s.active) {
      ns.index.push_back({ZSlot::Kind::lambda, static_cast<int>(d), a.stage, a.constraint});
    }
  }
  for (std::size_t d = 0; d < sens.size(); ++d) {
    ns.upsilon_offset.push_back(static_cast<int>(ns.index.size()));
    for (int r = 0; r < sens[d].state_dim; ++r) ns.index.push_back({ZSlot::Kind::upsilon, static_cast<int>(d), r, 0});
  }
  const auto cols = static_cast<Eigen::Index>(ns.index.size());

  Matrix j = Matrix::Zero(rows, cols);
  Vector r0(rows);
  Eigen::Index row0 = 0;
  for (std::size_t d = 0; d < sens.size(); ++d) {
    const SegmentSensitivity& s = sens[d];
    const Eigen::Index nv = s.feature_grad.rows();
    Matrix omega_mat(s.horizon, rb);
    for (int i = 0; i < s.horizon; ++i) omega_mat.row(i) = cost::omega(frequencies, s.times[i]).transpose();
    for (int f = 0; f < q; ++f) {
      // Columns i*q + f of feature_grad, i = 0..N-1.
      const Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> gf(s.feature_grad.data() + f * nv, nv, s.horizon,
                                                                 Eigen::OuterStride<>(q * nv));
      if (f == 0) {
        r0.segment(row0, nv).noalias() = gf * (omega_mat * anchor);
      } else {
        j.block(row0, (f - 1) * rb, nv, rb).noalias() = gf * omega_mat;
      }
    }
    if (!s.active.empty()) j.block(row0, ns.lambda_offset[d], nv, s.constraint_grad.cols()) = s.constraint_grad;
    j.block(row0, ns.upsilon_offset[d], nv, s.state_dim) = s.terminal_jac_t;
    row0 += nv;
  }

  const simd::KernelTable& k = simd::active();
  ns.q = Matrix::Zero(cols, cols);
  k.gram_upper(j.data(), static_cast<std::size_t>(rows), static_cast<std::size_t>(cols),
               static_cast<std::size_t>(rows), ns.q.data(), static_cast<std::size_t>(cols));
  ns.q.triangularView<Eigen::StrictlyLower>() = ns.q.transpose().eval();
  ns.c.resize(cols);
  for (Eigen::Index a = 0; a < cols; ++a) ns.c[a] = k.dot(j.col(a).data(), r0.data(), static_cast<std::size_t>(rows));
  ns.r0_squared = r0.squaredNorm();
  if (keep_jacobian) {
    ns.jacobian = std::move(j);
    ns.r0 = std::move(r0);
  }
  return ns;
}

Matrix coefficients_from_z(const NormalSystem& ns, const Vector& anchor, const Vector& z) {
  Matrix a(ns.basis_rows, ns.feature_dim);
  a.col(0) = anchor;
  for (int s = 1; s < ns.feature_dim; ++s) a.col(s) = z.segment((s - 1) * ns.basis_rows, ns.basis_rows);
  return a;
}

MultiplierSet multipliers_from_z(const NormalSystem& ns, const std::vector<SegmentSensitivity>& sens,
                                 const Vector& z) {
  MultiplierSet out;
  for (std::size_t d = 0; d < sens.size(); ++d) {
    const SegmentSensitivity& s = sens[d];
    Matrix lam = Matrix::Zero(s.horizon, s.constraint_count);
    for (std::size_t a = 0; a < s.active.size(); ++a) {
      lam(s.active[a].stage, s.active[a].constraint) = z[ns.lambda_offset[d] + static_cast<int>(a)];
    }
    out.lambda.push_back(std::move(lam));
    out.upsilon.push_back(z.segment(ns.upsilon_offset[d], s.state_dim));
  }
  return out;
}

}  // namespace ttdioc::kktioc
