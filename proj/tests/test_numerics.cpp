#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "ttdioc/numerics.hpp"

using namespace ttdioc::numerics;

namespace {

BoxedFunction rosenbrock() {
  return {2, [](const Vector& x, Vector& g) {
            const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
            g[0] = -2.0 * a - 400.0 * x[0] * b;
            g[1] = 200.0 * b;
            return a * a + 100.0 * b * b;
          }};
}

Matrix random_psd(int n, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Matrix j(rank, n);
  for (int r = 0; r < rank; ++r) {
    for (int c = 0; c < n; ++c) j(r, c) = d(rng);
  }
  return j.transpose() * j;
}

Vector random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

double soft(double v, double w) { return std::copysign(std::max(0.0, std::abs(v) - w), v); }

}  // namespace

TEST_CASE("grad_check accepts exact and rejects wrong gradients") {
  const BoxedFunction f = rosenbrock();
  CHECK(grad_check(f, Vector::Constant(2, 0.3), 1e-6) <= 1e-6);
  BoxedFunction wrong = f;
  wrong.evaluate = [f](const Vector& x, Vector& g) {
    const double v = f.evaluate(x, g);
    g[1] *= 1.01;
    return v;
  };
  CHECK(grad_check(wrong, Vector::Constant(2, 0.3), 1e-6) > 1e-3);
  CHECK_THROWS_AS(grad_check(f, Vector::Zero(2), 0.0), std::invalid_argument);
}

TEST_CASE("L-BFGS minimizes Rosenbrock") {
  const LbfgsResult r = lbfgs_minimize(rosenbrock(), Vector::Constant(2, -1.2));
  REQUIRE(r.converged());
  CHECK(r.grad_norm <= 1e-9);
  CHECK(std::abs(r.x[0] - 1.0) <= 1e-7);
  CHECK(std::abs(r.x[1] - 1.0) <= 1e-7);
}

TEST_CASE("L-BFGS on a convex quadratic matches the linear solve") {
  std::mt19937_64 rng(3);
  const Matrix q = random_psd(12, 20, rng) + Matrix::Identity(12, 12);
  const Vector c = random_vec(12, rng);
  const BoxedFunction f{12, [&](const Vector& x, Vector& g) {
                          g = q * x + c;
                          return 0.5 * x.dot(q * x) + c.dot(x);
                        }};
  const Vector exact = q.ldlt().solve(-c);
  // Near the optimum the decrease can drop below the rounding of f; the
  // solver then stops with its best iterate instead of converging.
  Vector x;
  try {
    const LbfgsResult r = lbfgs_minimize(f, Vector::Zero(12));
    CHECK(r.converged());
    x = r.x;
  } catch (const StagnationError& e) {
    CHECK(e.grad_norm <= 1e-7);
    x = e.best_x;
  }
  CHECK((x - exact).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("L-BFGS reports unbounded objectives") {
  const BoxedFunction f{1, [](const Vector& x, Vector& g) {
                          g[0] = 1.0;
                          return x[0];
                        }};
  CHECK_THROWS_AS(lbfgs_minimize(f, Vector::Zero(1)), StagnationError);
}

TEST_CASE("FISTA matches soft thresholding on a diagonal problem") {
  const Vector d = (Vector(5) << 1.0, 2.0, 0.5, 4.0, 3.0).finished();
  const Vector c = (Vector(5) << -2.0, 0.5, -0.1, 3.0, -1.0).finished();
  const Vector w = (Vector(5) << 0.5, 1.0, 0.2, 0.0, 4.0).finished();
  FistaMasks masks;
  masks.l1_weight = w;
  const FistaResult r = fista_solve(d.asDiagonal().toDenseMatrix(), c, masks);
  REQUIRE(r.converged);
  for (int i = 0; i < 5; ++i) CHECK(r.z[i] == doctest::Approx(soft(-c[i], w[i]) / d[i]).epsilon(1e-10));
}

TEST_CASE("FISTA honours nonnegative and fixed coordinates") {
  const Matrix q = Matrix::Identity(3, 3);
  const Vector c = (Vector(3) << 1.0, -2.0, 5.0).finished();
  FistaMasks masks;
  masks.nonneg = {true, true, false};
  masks.fixed = {false, false, true};
  masks.fixed_values = (Vector(3) << 0.0, 0.0, 0.25).finished();
  const FistaResult r = fista_solve(q, c, masks);
  REQUIRE(r.converged);
  CHECK(r.z[0] == 0.0);
  CHECK(r.z[1] == doctest::Approx(2.0));
  CHECK(r.z[2] == 0.25);
}

TEST_CASE("FISTA and the active-set method agree on random lasso problems") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const int n = 6 + trial % 7;
    // Rank-deficient for odd trials.
    const Matrix q = random_psd(n, trial % 2 ? n - 2 : n + 3, rng);
    // c in the range of Q keeps the rank-deficient problems bounded below.
    const Vector c = trial % 2 ? Vector(q * random_vec(n, rng)) : Vector(random_vec(n, rng) * 3.0);
    FistaMasks masks;
    masks.l1_weight = Vector::Constant(n, 0.8);
    masks.l1_weight[0] = 0.0;
    masks.nonneg.assign(n, false);
    masks.nonneg[1] = true;
    const FistaResult a = fista_solve(q, c, masks);
    const FistaResult b = active_set_solve(q, c, masks, Matrix(0, n), Vector::Zero(n));
    CHECK(a.converged);
    CHECK(b.converged);
    CHECK(std::abs(a.objective - b.objective) <= 1e-9 * std::max(1.0, std::abs(b.objective)));
    CHECK(composite_kkt_violation(q, c, masks, b.z) <= 1e-8);
  }
}

TEST_CASE("active-set method projects onto a halfspace") {
  // min 1/2 |z - a|^2 s.t. sum z >= 0: z = a + max(0, -sum a)/n * 1.
  const Vector a = (Vector(4) << 1.0, -3.0, 0.5, -2.0).finished();
  const Matrix g = Matrix::Ones(1, 4);
  const FistaResult r = active_set_solve(Matrix::Identity(4, 4), -a, FistaMasks{}, g, Vector::Constant(4, 1.0));
  REQUIRE(r.converged);
  const Vector expected = a + Vector::Constant(4, 3.5 / 4.0);
  CHECK((r.z - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(active_set_solve(Matrix::Identity(4, 4), -a, FistaMasks{}, g, Vector::Constant(4, -1.0)),
                  std::invalid_argument);
}

TEST_CASE("symv matches Eigen") {
  std::mt19937_64 rng(5);
  const Matrix q = random_psd(37, 40, rng);
  const Vector x = random_vec(37, rng);
  Vector y(37);
  symv(q, x, y);
  CHECK((y - q * x).cwiseAbs().maxCoeff() <= 1e-11);
}
