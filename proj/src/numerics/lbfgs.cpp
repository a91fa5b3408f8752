#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "ttdioc/numerics.hpp"

namespace ttdioc::numerics {
namespace {

struct Trial {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative at alpha
  Vector x;
  Vector g;
};

class LineSearch {
 public:
  LineSearch(const BoxedFunction& f, const LbfgsOptions& options, int& evaluations)
      : f_(f), options_(options), evaluations_(evaluations) {}

  // Strong-Wolfe search along p from (x0, f0, g0). Returns the accepted
  // trial; throws StagnationError when none is found.
  Trial run(const Vector& x0, double f0, const Vector& g0, const Vector& p, double alpha0) {
    const double slope0 = g0.dot(p);
    Trial prev{0.0, f0, slope0, x0, g0};
    double alpha = alpha0;
    for (int i = 0; i < options_.max_line_search; ++i) {
      Trial cur = evaluate(x0, p, alpha);
      if (cur.f > f0 + options_.c1 * alpha * slope0 || (i > 0 && cur.f >= prev.f)) {
        return zoom(x0, f0, slope0, p, prev, cur);
      }
      if (std::abs(cur.slope) <= -options_.c2 * slope0) return cur;
      if (cur.slope >= 0.0) return zoom(x0, f0, slope0, p, cur, prev);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    throw StagnationError("lbfgs: objective appears unbounded below along the search direction",
                          prev.x, prev.f, prev.g.norm());
  }

 private:
  Trial evaluate(const Vector& x0, const Vector& p, double alpha) {
    Trial t;
    t.alpha = alpha;
    t.x = x0 + alpha * p;
    t.g.resize(x0.size());
    t.f = f_.evaluate(t.x, t.g);
    ++evaluations_;
    if (!std::isfinite(t.f)) {
      t.f = std::numeric_limits<double>::infinity();
      t.slope = std::numeric_limits<double>::infinity();
    } else {
      t.slope = t.g.dot(p);
    }
    return t;
  }

  Trial zoom(const Vector& x0, double f0, double slope0, const Vector& p, Trial lo, Trial hi) {
    for (int i = 0; i < options_.max_line_search; ++i) {
      const double a = std::min(lo.alpha, hi.alpha);
      const double b = std::max(lo.alpha, hi.alpha);
      double alpha = cubic_minimizer(lo, hi);
      const double margin = 0.1 * (b - a);
      if (!std::isfinite(alpha) || alpha < a + margin || alpha > b - margin) alpha = 0.5 * (a + b);
      if (b - a <= std::numeric_limits<double>::epsilon() * std::max(1.0, b)) break;

      Trial cur = evaluate(x0, p, alpha);
      if (cur.f > f0 + options_.c1 * alpha * slope0 || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -options_.c2 * slope0) return cur;
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    if (lo.alpha > 0.0 && lo.f < f0) return lo;  // sufficient decrease holds for lo
    throw StagnationError("lbfgs: line search failed to find an acceptable step", x0, f0,
                          std::numeric_limits<double>::quiet_NaN());
  }

  static double cubic_minimizer(const Trial& u, const Trial& v) {
    if (!std::isfinite(u.f) || !std::isfinite(v.f) || !std::isfinite(u.slope) ||
        !std::isfinite(v.slope)) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const double d1 = u.slope + v.slope - 3.0 * (u.f - v.f) / (u.alpha - v.alpha);
    const double disc = d1 * d1 - u.slope * v.slope;
    if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), v.alpha - u.alpha);
    return v.alpha - (v.alpha - u.alpha) * (v.slope + d2 - d1) / (v.slope - u.slope + 2.0 * d2);
  }

  const BoxedFunction& f_;
  const LbfgsOptions& options_;
  int& evaluations_;
};

}  // namespace

LbfgsResult lbfgs_minimize(const BoxedFunction& f, Vector x0, const LbfgsOptions& options) {
  if (!(options.tol_grad > 0.0)) throw std::invalid_argument("lbfgs: tol_grad must be positive");
  LbfgsResult result;
  result.x = std::move(x0);
  Vector g(f.dimension);
  result.f = f.evaluate(result.x, g);
  result.evaluations = 1;
  if (!std::isfinite(result.f)) throw EvaluationError("lbfgs: non-finite objective at x0");

  struct Pair {
    Vector s, y;
    double rho;
  };
  std::deque<Pair> history;
  LineSearch search(f, options, result.evaluations);
  Vector p(f.dimension);
  std::vector<double> alphas;

  for (result.iterations = 0;; ++result.iterations) {
    result.grad_norm = g.norm();
    if (result.grad_norm <= options.tol_grad) {
      result.status = LbfgsStatus::converged;
      return result;
    }
    if (result.iterations >= options.max_iter) {
      result.status = LbfgsStatus::max_iterations;
      return result;
    }

    // Two-loop recursion.
    p = -g;
    alphas.assign(history.size(), 0.0);
    for (std::size_t k = history.size(); k-- > 0;) {
      alphas[k] = history[k].rho * history[k].s.dot(p);
      p -= alphas[k] * history[k].y;
    }
    double alpha0 = 1.0;
    if (!history.empty()) {
      const Pair& last = history.back();
      p *= last.s.dot(last.y) / last.y.squaredNorm();
    } else {
      alpha0 = std::min(1.0, 1.0 / result.grad_norm);
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const double beta = history[k].rho * history[k].y.dot(p);
      p += (alphas[k] - beta) * history[k].s;
    }
    if (!(g.dot(p) < 0.0)) {  // lost descent: restart from steepest descent
      history.clear();
      p = -g;
      alpha0 = std::min(1.0, 1.0 / result.grad_norm);
    }

    Trial step;
    try {
      step = search.run(result.x, result.f, g, p, alpha0);
    } catch (const StagnationError& e) {
      throw StagnationError(e.what(), result.x, result.f, result.grad_norm);
    }

    Pair pair{step.x - result.x, step.g - g, 0.0};
    const double sy = pair.s.dot(pair.y);
    result.x = std::move(step.x);
    result.f = step.f;
    g = std::move(step.g);
    if (sy > std::numeric_limits<double>::epsilon() * pair.y.squaredNorm()) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }
  }
}

}  // namespace ttdioc::numerics
