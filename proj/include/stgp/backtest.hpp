#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stgp/events.hpp"
#include "stgp/medic.hpp"
#include "stgp/metrics.hpp"
#include "stgp/svgp.hpp"

namespace stgp {

// Rolling weekly train/test scheme. Each fold trains the model on all bins
// before the fold start (clipped to a trailing training span), predicts one
// week ahead, and scores both the model and the MEDIC baseline.
struct BacktestConfig {
  // Hours since the configured epoch.
  double test_start = 0.0;
  double test_end = 0.0;
  double fold_length = 168.0;          // one week
  double max_training_span = 4380.0;   // six months (182.5 days)
  double elbo_threshold = -1.07e4;     // retrain when the final ELBO is below
  int max_retrains = 5;
  std::uint64_t master_seed = 0;
  int parallel_folds = 1;

  BoundingBox bbox;
  Projection proj;
  int grid_nx = 6;
  int grid_ny = 6;
  double t_bin = 4.0;
  bool emergencies_only = true;

  ModelConfig model;
  OptimizerConfig opt;
  MedicConfig medic;
  EvalConfig eval;
  LandMask mask;  // empty means all land

  void validate() const;
};

struct FoldRecord {
  int fold_index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  FoldScore stgp;
  FoldScore medic;
  double final_elbo = 0.0;
  int retrains = 0;
  bool flagged = false;  // every retrain attempt stayed below the threshold

  // Raw predictions, persisted so the summary can be recomputed exactly.
  Eigen::VectorXd pred_counts_stgp;   // per fold-grid bin
  Eigen::VectorXd pred_counts_medic;
  Eigen::VectorXd event_rate_stgp;    // per event in the fold
  Eigen::VectorXd event_rate_medic;
  EventSet fold_events;
  BinnedCounts fold_actual;
};

struct BacktestReport {
  std::vector<FoldRecord> folds;
  double mae_stgp = 0.0;
  double mae_medic = 0.0;
  double loglik_stgp = 0.0;
  double loglik_medic = 0.0;
  ResidualBreakdown residuals_stgp;
  ResidualBreakdown residuals_medic;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  double test_start = 0.0;
  double test_end = 0.0;
  double epoch_seconds = 0.0;
  double rate_floor = 1e-4;
  LandMask mask;
};

// Outcome of the retrain guard for one fold.
struct GuardResult {
  VariationalState state;
  double final_elbo = 0.0;
  int retrains = 0;
  bool flagged = false;
};

// Retrains with fresh seeds while the training ELBO stays below the
// threshold; keeps the first passing attempt, else the best one seen.
GuardResult retrain_guard(const std::function<TrainResult(std::uint64_t seed)>& train_fn,
                          double elbo_threshold, int max_retrains, std::uint64_t fold_seed);

// Bin-index layout of one fold on the global grid: training bins
// [train_begin, test_begin), test bins [test_begin, test_end_bin).
struct FoldPlan {
  int fold_index = 0;
  double t_start = 0.0;
  double t_end = 0.0;  // clamped at the test window end
  int train_begin = 0;
  int test_begin = 0;
  int test_end_bin = 0;
};

// The folds tile [test_start, effective_end) exactly; the last fold is
// clamped; training windows are clipped to max_training_span and always end
// at the fold start.
std::vector<FoldPlan> plan_folds(const BacktestConfig& cfg, double grid_t_start,
                                 double effective_end);

BacktestReport run_backtest(const BacktestConfig& cfg, const EventSet& raw_events);

// Writes summary.json, folds.csv, per-bin and per-event predictions,
// residual tables, the land mask and the resolved config text into out_dir.
void persist_report(const BacktestReport& report, const std::string& out_dir,
                    const std::string& resolved_config_text);

// Recomputes the global scores from the persisted raw prediction files;
// used by the report subcommand and the round-trip tests.
struct RescoredSummary {
  double mae_stgp = 0.0;
  double mae_medic = 0.0;
  double loglik_stgp = 0.0;
  double loglik_medic = 0.0;
  int n_folds = 0;
  std::int64_t n_events = 0;
};
RescoredSummary rescore_report(const std::string& out_dir);

}  // namespace stgp
