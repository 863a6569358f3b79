#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stgp/backtest.hpp"
#include "stgp/config.hpp"
#include "stgp/synth.hpp"

using namespace stgp;

namespace {

// Small, fast configuration over a 40 km box with a 3x3 grid.
BacktestConfig small_backtest(double test_start, double test_end) {
  BacktestConfig cfg;
  cfg.bbox = BoundingBox{-34.2, 18.3, -33.8, 18.8};
  cfg.proj = make_projection(cfg.bbox);
  cfg.grid_nx = 3;
  cfg.grid_ny = 3;
  cfg.t_bin = 4.0;
  cfg.test_start = test_start;
  cfg.test_end = test_end;
  cfg.max_training_span = 6.0 * 168.0;
  cfg.elbo_threshold = -1e18;  // retrain guard off unless a test flips it
  cfg.model.num_inducing = 12;
  cfg.model.jitter = 1e-6;
  cfg.opt.max_iters = 25;
  cfg.opt.f_tol = 1e-6;
  cfg.eval.integration_nx = 9;
  cfg.eval.integration_ny = 9;
  return cfg;
}

EventSet synth_events(double t_end, std::uint64_t seed) {
  IntensitySpec spec;
  spec.bbox = BoundingBox{-34.2, 18.3, -33.8, 18.8};
  spec.proj = make_projection(spec.bbox);
  spec.base_log_rate = std::log(2.5e-3);
  spec.diurnal_amplitude = 0.6;
  spec.phase = -2.356;
  spec.bumps.push_back({-5.0, -4.0, 10.0, 0.9});
  spec.t_start = 0.0;
  spec.t_end = t_end;
  spec.seed = seed;
  return sample_events(spec);
}

}  // namespace

TEST_CASE("fold planning: tiling, final clamp, training clip") {
  BacktestConfig cfg = small_backtest(8.0 * 168.0, 10.0 * 168.0);

  // Two whole weeks tile exactly.
  auto plans = plan_folds(cfg, 0.0, cfg.test_end);
  REQUIRE(plans.size() == 2);
  CHECK(plans[0].t_start == cfg.test_start);
  CHECK(plans[0].t_end == plans[1].t_start);
  CHECK(plans[1].t_end == cfg.test_end);

  // Ten days: folds of 7 and 3 days.
  cfg.test_end = cfg.test_start + 240.0;
  plans = plan_folds(cfg, 0.0, cfg.test_end);
  REQUIRE(plans.size() == 2);
  CHECK(plans[0].t_end - plans[0].t_start == 168.0);
  CHECK(plans[1].t_end - plans[1].t_start == 72.0);
  CHECK(plans[1].t_end == cfg.test_end);

  // Training clip: with a 6-week span and 8 weeks of history, the first
  // fold's training window starts 6 weeks before the fold.
  for (const auto& p : plans) {
    CHECK(p.test_begin - p.train_begin == static_cast<int>(6.0 * 168.0 / 4.0));
    CHECK(p.train_begin >= 0);
    // Anti-leakage at the plan level: training ends where the fold begins.
    CHECK(0.0 + p.test_begin * cfg.t_bin == p.t_start);
  }

  // Short history: the clip cannot reach below the grid start.
  plans = plan_folds(cfg, cfg.test_start - 2.0 * 168.0, cfg.test_end);
  CHECK(plans[0].train_begin == 0);
  CHECK(plans[0].test_begin == static_cast<int>(2.0 * 168.0 / 4.0));
}

TEST_CASE("retrain guard: accept, forced retries, trace of the rule") {
  std::vector<double> elbos;
  auto fake_train = [&](std::uint64_t seed) {
    TrainResult r;
    r.final_elbo = elbos[std::min(elbos.size() - 1, static_cast<std::size_t>(seed % 100))];
    return r;
  };
  // The guard derives a fresh seed per attempt; emulate a deterministic
  // sequence by popping from the front instead.
  std::size_t call = 0;
  auto seq_train = [&](std::uint64_t) {
    TrainResult r;
    r.final_elbo = elbos[std::min(call++, elbos.size() - 1)];
    return r;
  };
  (void)fake_train;

  // Above threshold: zero retrains.
  elbos = {-5000.0};
  call = 0;
  GuardResult g = retrain_guard(seq_train, -1.07e4, 5, 42);
  CHECK(g.retrains == 0);
  CHECK_FALSE(g.flagged);
  CHECK(g.final_elbo == -5000.0);

  // Threshold +inf: exactly max_retrains attempts, best kept, flagged.
  elbos = {-3.0, -1.0, -2.0, -5.0, -4.0};
  call = 0;
  g = retrain_guard(seq_train, std::numeric_limits<double>::infinity(), 5, 42);
  CHECK(call == 5);
  CHECK(g.retrains == 4);
  CHECK(g.flagged);
  CHECK(g.final_elbo == -1.0);

  // ELBOs [-2e4, -0.9e4] with threshold -1.07e4: second attempt accepted.
  elbos = {-2e4, -0.9e4};
  call = 0;
  g = retrain_guard(seq_train, -1.07e4, 5, 42);
  CHECK(call == 2);
  CHECK(g.retrains == 1);
  CHECK_FALSE(g.flagged);
  CHECK(g.final_elbo == -0.9e4);
}

TEST_CASE("run_backtest: boundary events stay in the test fold, scores recombine") {
  const double test_start = 8.0 * 168.0;
  const double test_end = 10.0 * 168.0;
  BacktestConfig cfg = small_backtest(test_start, test_end);
  EventSet events = synth_events(test_end, 5);

  // Adversarial: one event exactly at the fold boundary.
  CallRecord boundary;
  boundary.lat = cfg.proj.origin_lat;
  boundary.lon = cfg.proj.origin_lon;
  boundary.t = test_start;
  events.records.push_back(boundary);

  const BacktestReport report = run_backtest(cfg, events);
  REQUIRE(report.folds.size() == 2);

  // The boundary event is among the first fold's events.
  bool found = false;
  for (const auto& r : report.folds[0].fold_events.records)
    found = found || r.t == test_start;
  CHECK(found);

  // Fold tiling of windows.
  CHECK(report.folds[0].t_start == test_start);
  CHECK(report.folds[0].t_end == report.folds[1].t_start);
  CHECK(report.folds[1].t_end == test_end);

  // Global scores recombine from the per-fold scores.
  std::vector<FoldScore> stgp_rows, medic_rows;
  for (const auto& f : report.folds) {
    stgp_rows.push_back(f.stgp);
    medic_rows.push_back(f.medic);
  }
  CHECK(aggregate_mae(stgp_rows) == doctest::Approx(report.mae_stgp).epsilon(1e-12));
  CHECK(aggregate_mae(medic_rows) == doctest::Approx(report.mae_medic).epsilon(1e-12));
  CHECK(aggregate_loglik(stgp_rows) == doctest::Approx(report.loglik_stgp).epsilon(1e-12));
  CHECK(aggregate_loglik(medic_rows) == doctest::Approx(report.loglik_medic).epsilon(1e-12));

  // No test data in training: retraining on a truncated event set that ends
  // at the boundary gives the same fold-0 model predictions.
  EventSet history_only;
  history_only.epoch_seconds = events.epoch_seconds;
  for (const auto& r : events.records)
    if (r.t < test_start) history_only.records.push_back(r);
  BacktestConfig cfg1 = cfg;
  cfg1.test_end = test_start + 168.0;
  const BacktestReport partial = run_backtest(cfg1, events);
  const BacktestReport partial_censored = [&] {
    // Same fold but with all at-or-after-boundary events removed from the
    // input; training data is identical, so the model must be too.
    EventSet mixed = history_only;
    for (const auto& r : events.records)
      if (r.t >= test_start && r.t < test_start + 168.0) mixed.records.push_back(r);
    return run_backtest(cfg1, mixed);
  }();
  CHECK(partial.folds[0].pred_counts_stgp == partial_censored.folds[0].pred_counts_stgp);
}

TEST_CASE("run_backtest: insufficient history is rejected") {
  BacktestConfig cfg = small_backtest(8.0 * 168.0, 9.0 * 168.0);
  EventSet late;
  CallRecord r;
  r.lat = cfg.proj.origin_lat;
  r.lon = cfg.proj.origin_lon;
  r.t = 8.0 * 168.0 + 1.0;
  late.records.push_back(r);
  CHECK_THROWS_AS(run_backtest(cfg, late), InsufficientHistory);
}

TEST_CASE("bit-exact reproducibility and persistence round trip") {
  namespace fs = std::filesystem;
  BacktestConfig cfg = small_backtest(8.0 * 168.0, 9.0 * 168.0);
  cfg.master_seed = 17;
  const EventSet events = synth_events(9.0 * 168.0, 23);

  const BacktestReport a = run_backtest(cfg, events);
  const BacktestReport b = run_backtest(cfg, events);
  CHECK(a.mae_stgp == b.mae_stgp);
  CHECK(a.mae_medic == b.mae_medic);
  CHECK(a.loglik_stgp == b.loglik_stgp);
  CHECK(a.loglik_medic == b.loglik_medic);
  REQUIRE(a.folds.size() == b.folds.size());
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    CHECK(a.folds[i].pred_counts_stgp == b.folds[i].pred_counts_stgp);
    CHECK(a.folds[i].pred_counts_medic == b.folds[i].pred_counts_medic);
    CHECK(a.folds[i].final_elbo == b.folds[i].final_elbo);
  }

  // Persist, reload, rescore: identical global numbers.
  const std::string dir = (fs::temp_directory_path() / "stgp_report_test").string();
  fs::remove_all(dir);
  persist_report(a, dir, "synthetic-test-config\n");
  const RescoredSummary s = rescore_report(dir);
  CHECK(s.n_folds == static_cast<int>(a.folds.size()));
  CHECK(s.mae_stgp == a.mae_stgp);
  CHECK(s.mae_medic == a.mae_medic);
  CHECK(s.loglik_stgp == a.loglik_stgp);
  CHECK(s.loglik_medic == a.loglik_medic);

  // The summary file reflects the same values.
  std::ifstream in(dir + "/summary.json");
  REQUIRE(in.good());
}

TEST_CASE("config: canonical form, hash contract, override parsing") {
  Config cfg;
  const std::uint64_t h0 = cfg.hash();
  CHECK(cfg.hash() == h0);  // stable

  Config other = cfg;
  apply_override(other, "grid.nx=7");
  CHECK(other.grid_nx == 7);
  CHECK(other.hash() != h0);

  // Round trip through the canonical text.
  const Config parsed = parse_config(cfg.save());
  CHECK(parsed.hash() == h0);
  CHECK(parsed.save() == cfg.save());

  CHECK_THROWS_AS(apply_override(other, "no.such.key=1"), DataError);
  CHECK_THROWS_AS(apply_override(other, "grid.nx"), DataError);

  // The paper-preset window: 26 whole weeks.
  const double span = cfg.hours_since_epoch(cfg.test_end) -
                      cfg.hours_since_epoch(cfg.test_start);
  CHECK(span == 26.0 * 168.0);

  // Backtest config carries the derived projection.
  const BacktestConfig bc = cfg.backtest_config();
  CHECK(bc.proj.km_per_deg_lon < bc.proj.km_per_deg_lat);
  CHECK(bc.model.num_inducing == 180);
}
