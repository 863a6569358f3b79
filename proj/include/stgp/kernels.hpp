#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stgp/errors.hpp"

namespace stgp {

// Hyperparameters of one covariance leaf. Only the variance is ever trained
// (in log space); lengthscale and period stay fixed.
struct KernelParams {
  double variance = 1.0;
  double lengthscale = 1.0;  // hours for time leaves, km for space leaves
  double period = 24.0;      // hours, time leaves only
  bool trainable_variance = true;
};

// Covariance expression tree. Leaves read either the time coordinate or the
// two space coordinates of an input point (x_km, y_km, t_hours); Sum and
// Product combine children elementwise.
//
//   periodic time:  v * exp(-sin^2(pi (t - t') / T) / (2 l^2))
//   rbf space:      v * exp(-((dx^2 + dy^2)) / l^2)
//
// Note the space leaf divides by l^2, not 2 l^2; this differs from the usual
// squared-exponential convention and is intentional.
struct KernelExpr {
  enum class Kind { PeriodicTime, RbfSpace, Sum, Product };

  Kind kind = Kind::Sum;
  KernelParams params;               // leaves only
  std::vector<KernelExpr> children;  // Sum/Product only

  bool is_leaf() const { return kind == Kind::PeriodicTime || kind == Kind::RbfSpace; }

  static KernelExpr periodic_time(const KernelParams& p);
  static KernelExpr rbf_space(const KernelParams& p);
  static KernelExpr sum(std::vector<KernelExpr> children);
  static KernelExpr product(std::vector<KernelExpr> children);

  // The composed structure used by the model:
  //   k(x, x') = k_time(t,t') + k_space(s,s') + k_time_i(t,t') * k_space_i(s,s')
  // with four independent parameter sets.
  static KernelExpr composed(const KernelParams& time_marginal, const KernelParams& space_marginal,
                             const KernelParams& time_interaction,
                             const KernelParams& space_interaction);

  // composed() with the fixed defaults: T = 24 h, l_t = 8 h, l_s = 10 km,
  // all variances 1 and trainable.
  static KernelExpr composed_default();

  void validate() const;
};

// Trainable leaf variances in depth-first, left-to-right leaf order. This
// order is the contract for grad_variances and the packed parameter vector.
std::vector<double> trainable_variances(const KernelExpr& k);
void set_trainable_variances(KernelExpr& k, const std::vector<double>& values);
int count_trainable(const KernelExpr& k);

double eval_pair(const KernelExpr& k, const Eigen::Vector3d& a, const Eigen::Vector3d& b);

// K(A, B) with rows of A and B as points (x_km, y_km, t_hours).
Eigen::MatrixXd eval_matrix(const KernelExpr& k, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B);

Eigen::VectorXd eval_diag(const KernelExpr& k, const Eigen::MatrixXd& A);

// dK/dv for each trainable variance, in trainable_variances order. Every
// leaf is linear in its variance, so dK/dv = K_leaf / v pushed through any
// Product ancestors.
std::vector<Eigen::MatrixXd> grad_variances(const KernelExpr& k, const Eigen::MatrixXd& A,
                                            const Eigen::MatrixXd& B);
std::vector<Eigen::VectorXd> grad_variances_diag(const KernelExpr& k, const Eigen::MatrixXd& A);

inline Eigen::MatrixXd add_jitter(const Eigen::MatrixXd& M, double jitter) {
  if (M.rows() != M.cols()) throw DataError("add_jitter needs a square matrix");
  return M + jitter * Eigen::MatrixXd::Identity(M.rows(), M.cols());
}

inline double default_jitter(const Eigen::MatrixXd& M) {
  return 1e-6 * M.diagonal().mean();
}

// Unit-variance leaf matrices for a fixed pair of point sets. Lengthscales
// never change during training, so these are computed once per fold and the
// per-iteration kernel evaluation reduces to scalar combines.
struct KernelCache {
  std::vector<Eigen::MatrixXd> unit;  // one per leaf, depth-first order
};

KernelCache make_kernel_cache(const KernelExpr& k, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B);
Eigen::MatrixXd eval_matrix_cached(const KernelExpr& k, const KernelCache& cache);
std::vector<Eigen::MatrixXd> grad_variances_cached(const KernelExpr& k, const KernelCache& cache);

}  // namespace stgp
