#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "stgp/events.hpp"
#include "stgp/kernels.hpp"
#include "stgp/optimize.hpp"

namespace stgp {

// Sparse variational GP with an exponential link and Poisson counts: the
// latent function models the log expected count per training bin; the
// variational family is q(u) = N(m_u, L_S L_S^T) over the inducing values.
struct ModelConfig {
  KernelExpr kernel = KernelExpr::composed_default();
  int num_inducing = 180;
  // GP constant mean. NaN means "initialise from the data" (log mean count).
  double mean_const = std::numeric_limits<double>::quiet_NaN();
  double jitter = 1e-6;
  std::uint64_t seed = 0;
};

struct VariationalState {
  Eigen::MatrixXd Z;    // m x 3 inducing inputs, fixed after init
  Eigen::VectorXd m_u;  // variational mean
  Eigen::MatrixXd L_S;  // lower-triangular factor of S, positive diagonal
  KernelExpr kernel;    // current variances live in the leaves
  double mean_const = 0.0;
  double jitter = 1e-6;

  int num_inducing() const { return static_cast<int>(Z.rows()); }
  void validate() const;
};

// Per-point mean/variance of q(f_i).
struct QfMarginals {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  int clamped = 0;  // variances numerically below zero that were clamped
};

// Predicted intensity on a set of query points, km^-2 hour^-1.
struct RateField {
  Eigen::MatrixXd points;  // n x 3 (x_km, y_km, t_hours)
  Eigen::VectorXd rate;
  Eigen::VectorXd latent_mean;
  Eigen::VectorXd latent_var;
};

// Gradient of the ELBO with respect to the state (L_S entries directly; the
// softplus reparameterisation of the diagonal is applied by train()).
struct ElboGradient {
  double value = 0.0;  // the ELBO itself
  Eigen::VectorXd d_m_u;
  Eigen::MatrixXd d_L_S;  // only the lower triangle is meaningful
  Eigen::VectorXd d_log_variance;
  double d_mean_const = 0.0;
};

struct TrainResult {
  VariationalState state;
  double final_elbo = 0.0;
  OptResult opt;
  int jitter_escalations = 0;
};

// Inducing inputs are drawn uniformly without replacement from the training
// bin centres; they are never optimised afterwards.
VariationalState init_state(const ModelConfig& config, const BinnedCounts& training);

QfMarginals qf_marginals(const VariationalState& state, const Eigen::MatrixXd& X);

// E_{f ~ N(mean, var)}[log Poisson(y | exp(f))], which is analytic for the
// exponential link: y*mean - exp(mean + var/2) - log(y!).
double expected_poisson_loglik(std::int64_t y, double mean, double var);
void expected_poisson_loglik_grad(std::int64_t y, double mean, double var, double& d_mean,
                                  double& d_var);

// KL[q(u) || p(u)] with p(u) = N(mean_const * 1, K_zz + jitter I).
double kl_q_p(const VariationalState& state);

double elbo(const VariationalState& state, const BinnedCounts& training);
ElboGradient elbo_grad(const VariationalState& state, const BinnedCounts& training);

// Maximises the ELBO over (m_u, L_S, log kernel variances, mean_const) with
// the limited-memory BFGS optimiser. Deterministic given config.seed. On
// Cholesky failure the jitter is escalated by 10x up to three times.
TrainResult train(const ModelConfig& config, const BinnedCounts& training,
                  const OptimizerConfig& opt_cfg);

// rate = exp(mean + var/2) / bin_volume: the log-normal expectation of the
// per-bin count, rescaled from counts per training bin to a density.
RateField predict_rate(const VariationalState& state, const Eigen::MatrixXd& points,
                       double bin_volume);

// Versioned binary model file; round-trips bit-exactly on the same platform.
void save_model(const std::string& path, const VariationalState& state,
                const SpatioTemporalGrid& grid);
void load_model(const std::string& path, VariationalState& state, SpatioTemporalGrid& grid);

}  // namespace stgp
