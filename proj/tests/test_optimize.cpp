#include <doctest.h>

#include "stgp/optimize.hpp"
#include "stgp/rng.hpp"

using namespace stgp;

namespace {

bool trace_non_increasing(const OptResult& r) {
  for (std::size_t i = 1; i < r.trace.size(); ++i)
    if (r.trace[i] > r.trace[i - 1]) return false;
  return true;
}

}  // namespace

TEST_CASE("convex quadratic converges to the origin") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * x;
    return x.squaredNorm();
  };
  Eigen::VectorXd x0(2);
  x0 << 3.0, 4.0;
  const OptResult r = minimize(f, x0, OptimizerConfig{});
  CHECK(r.status == OptStatus::Converged);
  CHECK(r.x_final.norm() < 1e-8);
  CHECK(trace_non_increasing(r));
}

TEST_CASE("rosenbrock reaches (1, 1)") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  OptimizerConfig cfg;
  cfg.grad_tol = 1e-10;
  cfg.f_tol = 1e-16;
  const OptResult r = minimize(f, x0, cfg);
  CHECK((r.x_final - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-6);
  CHECK(trace_non_increasing(r));
}

TEST_CASE("random positive-definite quadratics: minimum matches the linear solve") {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(19));
    Eigen::MatrixXd M(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) M(i, j) = rng.normal();
    const Eigen::MatrixXd A = M * M.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd b(d);
    for (int i = 0; i < d; ++i) b[i] = rng.normal();

    // f = 0.5 x'Ax + b'x, minimum value -0.5 b'A^{-1}b at x = -A^{-1}b.
    Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g = A * x + b;
      return 0.5 * x.dot(A * x) + b.dot(x);
    };
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(d);
    OptimizerConfig cfg;
    cfg.grad_tol = 1e-9;
    cfg.f_tol = 1e-15;
    const OptResult r = minimize(f, x0, cfg);
    const Eigen::VectorXd x_star = -A.llt().solve(b);
    CHECK(r.f_final == doctest::Approx(-0.5 * b.dot(-x_star)).epsilon(1e-8));
    CHECK((r.x_final - x_star).lpNorm<Eigen::Infinity>() < 1e-4);
    CHECK(trace_non_increasing(r));
  }
}

TEST_CASE("shift invariance: minimising f(x - c) recovers the shifted minimiser") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd c(3);
    for (int i = 0; i < 3; ++i) c[i] = rng.uniform(-5.0, 5.0);
    Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g = 2.0 * (x - c);
      return (x - c).squaredNorm();
    };
    const OptResult r = minimize(f, Eigen::VectorXd::Zero(3), OptimizerConfig{});
    CHECK((r.x_final - c).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("determinism: identical inputs give identical results") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 4.0 * x.array().pow(3).matrix() - 2.0 * x;
    return (x.array().pow(4) - x.array().pow(2)).sum();
  };
  Eigen::VectorXd x0(4);
  x0 << 0.3, -0.2, 0.9, -1.4;
  const OptResult a = minimize(f, x0, OptimizerConfig{});
  const OptResult b = minimize(f, x0, OptimizerConfig{});
  CHECK(a.x_final == b.x_final);
  CHECK(a.f_final == b.f_final);
  CHECK(a.iterations == b.iterations);
  CHECK(a.trace == b.trace);
}

TEST_CASE("non-finite trial values shrink the step instead of aborting") {
  // f explodes for x > 2; the minimiser at x = 1 is still reachable.
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    if (x[0] > 2.0) {
      g[0] = std::numeric_limits<double>::quiet_NaN();
      return std::numeric_limits<double>::infinity();
    }
    g[0] = 2.0 * (x[0] - 1.0);
    return (x[0] - 1.0) * (x[0] - 1.0);
  };
  Eigen::VectorXd x0(1);
  x0 << -30.0;
  const OptResult r = minimize(f, x0, OptimizerConfig{});
  CHECK(r.status == OptStatus::Converged);
  CHECK(r.x_final[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("descent to minus infinity reports divergence") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    g[0] = -std::exp(x[0]);
    return -std::exp(x[0]);
  };
  Eigen::VectorXd x0(1);
  x0 << 10.0;
  OptimizerConfig cfg;
  cfg.max_iters = 500;
  const OptResult r = minimize(f, x0, cfg);
  CHECK(r.status == OptStatus::Diverged);
}

TEST_CASE("finite differences: exact on linear, zero at a quadratic's origin") {
  Eigen::VectorXd c(3);
  c << 1.0, -2.0, 0.5;
  auto lin = [&](const Eigen::VectorXd& x) { return c.dot(x); };
  const Eigen::VectorXd g = finite_diff_grad(lin, Eigen::VectorXd::Zero(3), 1e-4);
  CHECK((g - c).lpNorm<Eigen::Infinity>() < 1e-10);

  auto quad = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  const Eigen::VectorXd g0 = finite_diff_grad(quad, Eigen::VectorXd::Zero(3), 1e-4);
  CHECK(g0.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("config validation") {
  OptimizerConfig bad;
  bad.wolfe_c1 = 0.95;  // violates c1 < c2
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x;
    return 0.5 * x.squaredNorm();
  };
  CHECK_THROWS_AS(minimize(f, Eigen::VectorXd::Zero(1), bad), DataError);
}
