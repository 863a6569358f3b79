#include "stgp/optimize.hpp"

#include <cmath>
#include <deque>

namespace stgp {

namespace {

constexpr double kDivergeLimit = 1e300;
constexpr int kMaxStepTrials = 50;

struct LineSearchResult {
  double alpha = 0.0;
  double f = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
  bool ok = false;
  bool diverged = false;
  bool saw_nonfinite = false;
};

double interpolate(double lo, double hi) {
  return 0.5 * (lo + hi);  // bisection; robust against wild objective values
}

// Strong-Wolfe line search (bracket then zoom). phi(a) = f(x + a*d).
LineSearchResult line_search(const Objective& objective, const Eigen::VectorXd& x, double f0,
                             const Eigen::VectorXd& g0, const Eigen::VectorXd& d,
                             const OptimizerConfig& cfg) {
  LineSearchResult res;
  const double dphi0 = g0.dot(d);
  const Eigen::Index n = x.size();

  Eigen::VectorXd xt(n), gt(n);
  int trials = 0;
  auto eval = [&](double a, double& f, double& dphi) -> bool {
    ++trials;
    xt = x + a * d;
    f = objective(xt, gt);
    if (std::isnan(f) || f >= kDivergeLimit) {
      // Blown-up trial: treat as "too far" so the search shrinks.
      res.saw_nonfinite = true;
      dphi = 0.0;
      return false;
    }
    if (f <= -kDivergeLimit) {
      // The objective is unbounded below along this ray.
      res.diverged = true;
      dphi = 0.0;
      return true;
    }
    dphi = gt.dot(d);
    return true;
  };

  auto accept = [&](double a, double f) {
    res.alpha = a;
    res.f = f;
    res.x = xt;
    res.grad = gt;
    res.ok = true;
  };

  // zoom keeps a bracket [lo, hi] where lo satisfies sufficient decrease and
  // the minimiser is between them.
  auto zoom = [&](double a_lo, double f_lo, double dphi_lo, double a_hi) -> bool {
    while (trials < kMaxStepTrials) {
      double a = interpolate(a_lo, a_hi);
      double f, dphi;
      if (!eval(a, f, dphi)) {
        a_hi = a;
        continue;
      }
      if (res.diverged) {
        accept(a, f);
        return true;
      }
      if (f > f0 + cfg.wolfe_c1 * a * dphi0 || f >= f_lo) {
        a_hi = a;
        continue;
      }
      if (std::abs(dphi) <= -cfg.wolfe_c2 * dphi0) {
        accept(a, f);
        return true;
      }
      if (dphi * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
      a_lo = a;
      f_lo = f;
      dphi_lo = dphi;
    }
    (void)dphi_lo;
    return false;
  };

  double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
  double a = 1.0;
  while (trials < kMaxStepTrials) {
    double f, dphi;
    if (!eval(a, f, dphi)) {
      // Too far out; shrink towards the last good point.
      if (zoom(a_prev, f_prev, dphi_prev, a)) return res;
      break;
    }
    if (res.diverged) {
      accept(a, f);
      return res;
    }
    if (f > f0 + cfg.wolfe_c1 * a * dphi0 || (a_prev > 0.0 && f >= f_prev)) {
      if (zoom(a_prev, f_prev, dphi_prev, a)) return res;
      break;
    }
    if (std::abs(dphi) <= -cfg.wolfe_c2 * dphi0) {
      accept(a, f);
      return res;
    }
    if (dphi >= 0.0) {
      if (zoom(a, f, dphi, a_prev)) return res;
      break;
    }
    a_prev = a;
    f_prev = f;
    dphi_prev = dphi;
    a *= 2.0;
  }
  return res;
}

}  // namespace

OptResult minimize(const Objective& objective, const Eigen::VectorXd& x0,
                   const OptimizerConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = x0.size();

  OptResult out;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd g(n);
  double f = objective(x, g);
  if (!std::isfinite(f) || !g.allFinite())
    throw NumericError("objective not finite at the starting point");

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  double gamma = 1.0;

  out.trace.push_back(f);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) {
      out.status = OptStatus::Converged;
      break;
    }

    // Two-loop recursion for d = -H g.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    q *= gamma;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd d = -q;

    if (g.dot(d) >= 0.0) {
      // History produced a non-descent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      gamma = 1.0;
      d = -g;
    }
    if (s_hist.empty()) {
      const double gn = g.lpNorm<Eigen::Infinity>();
      if (gn > 1.0) d /= gn;
    }

    LineSearchResult ls = line_search(objective, x, f, g, d, cfg);
    if (ls.diverged) {
      out.x_final = ls.ok ? ls.x : x;
      out.f_final = ls.ok ? ls.f : f;
      out.grad_norm = g.lpNorm<Eigen::Infinity>();
      out.iterations = iter;
      out.status = OptStatus::Diverged;
      return out;
    }
    if (!ls.ok || !(ls.f < f)) {
      out.status = OptStatus::LineSearchFailure;
      break;
    }

    Eigen::VectorXd s = ls.x - x;
    Eigen::VectorXd yv = ls.grad - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      gamma = sy / y_hist.back().squaredNorm();
    }

    const double f_prev = f;
    x = ls.x;
    f = ls.f;
    g = ls.grad;
    out.trace.push_back(f);
    out.iterations = iter + 1;

    if (std::abs(f_prev - f) <= cfg.f_tol * std::max(1.0, std::abs(f_prev))) {
      out.status = OptStatus::Converged;
      break;
    }
    if (iter + 1 == cfg.max_iters) out.status = OptStatus::MaxIters;
  }
  if (g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) out.status = OptStatus::Converged;

  out.x_final = x;
  out.f_final = f;
  out.grad_norm = g.lpNorm<Eigen::Infinity>();
  return out;
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw DataError("finite difference step must be positive");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

const char* to_string(OptStatus s) {
  switch (s) {
    case OptStatus::Converged: return "converged";
    case OptStatus::MaxIters: return "max_iters";
    case OptStatus::LineSearchFailure: return "line_search_failure";
    case OptStatus::Diverged: return "diverged";
  }
  return "unknown";
}

}  // namespace stgp
