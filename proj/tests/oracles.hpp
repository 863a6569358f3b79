#pragma once

// Independent reference implementations used only by tests. Everything here
// deliberately avoids the library's own computation paths.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "stgp/events.hpp"
#include "stgp/kernels.hpp"

namespace oracles {

struct Quadrature {
  Eigen::VectorXd nodes;    // roots of the Hermite polynomial
  Eigen::VectorXd weights;  // for integrals against exp(-x^2)
};

// Gauss-Hermite rule via the Golub-Welsch eigenvalue method.
Quadrature gauss_hermite(int n);

// E_{f ~ N(mean, var)}[log Poisson(y | exp(f))] by quadrature.
double gh_expected_poisson_loglik(std::int64_t y, double mean, double var, int n_nodes);

// Generic Gaussian KL using dense inverses and determinants only.
double dense_gaussian_kl(const Eigen::VectorXd& mu_q, const Eigen::MatrixXd& S_q,
                         const Eigen::VectorXd& mu_p, const Eigen::MatrixXd& S_p);

// log p(y) for a tiny LGCP by tensor-grid quadrature over the latent values
// (dimension = y.size(), intended for <= 3).
double dense_log_marginal(const Eigen::VectorXi& y, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& K, int nodes_per_dim);

// O(n * bins) membership scan against half-open bin edges.
Eigen::VectorXi brute_force_bin(const stgp::EventSet& events,
                                const stgp::SpatioTemporalGrid& grid);

// Brute-force gather-and-average reimplementation of the benchmark rule.
double brute_force_medic(const stgp::BinnedCounts& history, int ix, int iy, double t_center,
                         int weeks_back, int years_back, int* gathered = nullptr);

// Upper chi-square quantile via the Wilson-Hilferty cube approximation.
double chi_square_quantile(double p_upper_tail, double dof);

}  // namespace oracles
