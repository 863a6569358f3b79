#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <vector>

#include "stgp/events.hpp"
#include "stgp/math_util.hpp"
#include "stgp/svgp.hpp"

namespace stgp {

// Intensity in km^-2 hour^-1 at an arbitrary point.
using RateFn = std::function<double(double x_km, double y_km, double t_hours)>;

struct EvalConfig {
  int integration_nx = 50;
  int integration_ny = 50;
  double integration_t_bin = 4.0;            // hours
  double rate_floor = 1e-4;                  // km^-2 hour^-1, event-term clip

  void validate() const {
    if (integration_nx <= 0 || integration_ny <= 0 || !(integration_t_bin > 0.0))
      throw DataError("integration grid must be positive");
    if (!(rate_floor > 0.0)) throw DataError("rate floor must be positive");
  }
};

struct TimeWindow {
  double t_start = 0.0;
  double t_end = 0.0;
};

// Log-likelihood density of the events under an inhomogeneous Poisson
// process with the given rate:
//   sum_i log max(rate(s_i, t_i), floor) - integral(rate) - log k!
// The integral is a midpoint sum on the integration grid, restricted to
// cells of `grid` flagged as land.
double poisson_loglik(const RateFn& rate, const EventSet& events, const TimeWindow& window,
                      const SpatioTemporalGrid& grid, const LandMask& mask,
                      const EvalConfig& cfg);

// The event term and the integral separately; poisson_loglik combines them.
// Split out so backtest folds can be rescored from persisted pieces.
double poisson_loglik_event_term(const RateFn& rate, const EventSet& events,
                                 const TimeWindow& window, const SpatioTemporalGrid& grid,
                                 const LandMask& mask, const EvalConfig& cfg);
double poisson_rate_integral(const RateFn& rate, const TimeWindow& window,
                             const SpatioTemporalGrid& grid, const LandMask& mask,
                             const EvalConfig& cfg);

// Midpoint lattice behind the integral, exposed so the model can be
// evaluated on it in one batch. Row i of points is (x, y, t); the weight of
// a point is cell_area * dt[i].
struct IntegrationLattice {
  Eigen::MatrixXd points;
  double cell_area = 0.0;
  Eigen::VectorXd dt;
};
IntegrationLattice integration_lattice(const TimeWindow& window, const SpatioTemporalGrid& grid,
                                       const LandMask& mask, const EvalConfig& cfg);

// sum_i log max(rate_i, floor), the first term of the likelihood density.
double event_term_from_rates(const Eigen::VectorXd& rates, double rate_floor);

// Mean absolute error between predicted counts (rate * A * tau at each bin
// centre) and observed counts, over land bins only.
double mae(const RateField& rate, const BinnedCounts& actual, const LandMask& mask);

// As above but with predicted per-bin counts given directly.
double mae_counts(const Eigen::VectorXd& predicted_counts, const BinnedCounts& actual,
                  const LandMask& mask);

struct ResidualGroup {
  int observed = 0;  // events in the bin
  std::int64_t n = 0;
  double mean = 0.0;
  double q10 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q90 = 0.0;
};

struct ResidualBreakdown {
  std::map<int, ResidualGroup> by_count;  // keyed by observed bin count
  Eigen::MatrixXd cell_mean;              // ny x nx mean residual per cell (land only)
  double overall_mean = 0.0;
};

// Residual r = predicted count - observed count per land bin, summarised per
// observed-count value and per spatial cell.
ResidualBreakdown residual_breakdown(const Eigen::VectorXd& predicted_counts,
                                     const BinnedCounts& actual, const LandMask& mask);

struct FoldScore {
  double fold_start = 0.0;
  double fold_end = 0.0;
  std::int64_t n_events = 0;
  std::int64_t n_bins = 0;  // land bins scored
  double mae = 0.0;
  double loglik = 0.0;      // per-fold, with the fold's own log k! term
  double event_term = 0.0;
  double integral = 0.0;
};

// Everything needed to score one fold of the rolling scheme.
struct FoldInput {
  Eigen::VectorXd predicted_counts;  // at the fold grid's bin centres
  RateFn rate;
  BinnedCounts actual;  // fold events binned on the fold grid
  EventSet events;      // fold events (projected)
  TimeWindow window;
};

FoldScore score_fold(const FoldInput& fold, const LandMask& mask, const EvalConfig& cfg);

// One row per fold. The global MAE over all folds is the bin-count weighted
// mean of the weekly MAEs; the global log-likelihood recombines event terms
// and integrals with a single log k! over all events.
std::vector<FoldScore> weekly_scores(const std::vector<FoldInput>& folds, const LandMask& mask,
                                     const EvalConfig& cfg);
double aggregate_mae(const std::vector<FoldScore>& folds);
double aggregate_loglik(const std::vector<FoldScore>& folds);

}  // namespace stgp
