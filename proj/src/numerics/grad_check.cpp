#include <algorithm>
#include <cmath>

#include "ttdioc/numerics.hpp"

namespace ttdioc::numerics {

double grad_check(const BoxedFunction& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  Vector grad(f.dimension);
  Vector scratch(f.dimension);
  const double f0 = f.evaluate(x, grad);
  if (!std::isfinite(f0)) throw EvaluationError("grad_check: non-finite function value");

  double worst = 0.0;
  Vector probe = x;
  for (Eigen::Index i = 0; i < f.dimension; ++i) {
    probe[i] = x[i] + h;
    const double fp = f.evaluate(probe, scratch);
    probe[i] = x[i] - h;
    const double fm = f.evaluate(probe, scratch);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("grad_check: non-finite function value");
    }
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace ttdioc::numerics
