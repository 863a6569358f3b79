#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "stgp/errors.hpp"

namespace stgp {

struct OptimizerConfig {
  int max_iters = 500;
  double grad_tol = 1e-5;  // infinity norm
  double f_tol = 1e-9;     // relative objective change between accepted steps
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int memory = 20;  // L-BFGS history length

  void validate() const {
    if (max_iters <= 0) throw DataError("max_iters must be positive");
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
      throw DataError("need 0 < wolfe_c1 < wolfe_c2 < 1");
    if (!(grad_tol > 0.0) || !(f_tol > 0.0)) throw DataError("tolerances must be positive");
    if (memory <= 0) throw DataError("memory must be positive");
  }
};

enum class OptStatus { Converged, MaxIters, LineSearchFailure, Diverged };

struct OptResult {
  Eigen::VectorXd x_final;
  double f_final = 0.0;
  double grad_norm = 0.0;  // infinity norm at x_final
  int iterations = 0;
  OptStatus status = OptStatus::MaxIters;
  std::vector<double> trace;  // objective after each accepted step, non-increasing
};

// Objective returning the value and writing the gradient.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// Limited-memory BFGS with a strong-Wolfe bracketing line search. Accepted
// steps strictly decrease the objective; a non-finite trial value shrinks
// the step instead of aborting.
OptResult minimize(const Objective& objective, const Eigen::VectorXd& x0,
                   const OptimizerConfig& cfg);

// Central-difference gradient, used as a test oracle.
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h);

const char* to_string(OptStatus s);

}  // namespace stgp
