#include "stgp/backtest.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "stgp/rng.hpp"

namespace stgp {

namespace {

using nlohmann::json;

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Time-range slice of a binned tensor, bins [b0, b1).
BinnedCounts slice_time(const BinnedCounts& all, int b0, int b1) {
  BinnedCounts out;
  out.grid = all.grid;
  out.grid.t_start = all.grid.t_start + b0 * all.grid.t_bin;
  out.grid.t_end = all.grid.t_start + b1 * all.grid.t_bin;
  const int ns = all.grid.n_space();
  out.counts = all.counts.segment(static_cast<Eigen::Index>(b0) * ns,
                                  static_cast<Eigen::Index>(b1 - b0) * ns);
  return out;
}

EventSet events_in_window(const EventSet& events, double t0, double t1) {
  EventSet out;
  out.epoch_seconds = events.epoch_seconds;
  for (const auto& r : events.records)
    if (r.t >= t0 && r.t < t1) out.records.push_back(r);
  return out;
}

}  // namespace

void BacktestConfig::validate() const {
  bbox.validate();
  proj.validate();
  if (!(test_start < test_end)) throw DataError("test_start must precede test_end");
  if (!(fold_length > 0.0)) throw DataError("fold_length must be positive");
  if (max_retrains < 0) throw DataError("max_retrains must be non-negative");
  if (!(t_bin > 0.0)) throw DataError("t_bin must be positive");
  const double ratio = fold_length / t_bin;
  if (std::abs(ratio - std::llround(ratio)) > 1e-9)
    throw DataError("fold_length must be a whole number of time bins");
  opt.validate();
  medic.validate();
  eval.validate();
}

GuardResult retrain_guard(const std::function<TrainResult(std::uint64_t seed)>& train_fn,
                          double elbo_threshold, int max_retrains, std::uint64_t fold_seed) {
  const int max_attempts = std::max(1, max_retrains);
  GuardResult best;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t seed = derive_seed(fold_seed, 0, static_cast<std::uint64_t>(attempt));
    TrainResult r = train_fn(seed);
    const bool passed = r.final_elbo >= elbo_threshold;
    if (attempt == 0 || r.final_elbo > best.final_elbo) {
      best.state = std::move(r.state);
      best.final_elbo = r.final_elbo;
    }
    best.retrains = attempt;
    if (passed) {
      best.flagged = false;
      return best;
    }
    best.flagged = true;
  }
  return best;
}

std::vector<FoldPlan> plan_folds(const BacktestConfig& cfg, double grid_t_start,
                                 double effective_end) {
  const int n_folds = static_cast<int>(
      std::ceil((effective_end - cfg.test_start) / cfg.fold_length - 1e-12));
  const int clip_bins = static_cast<int>(std::floor(cfg.max_training_span / cfg.t_bin + 1e-9));
  std::vector<FoldPlan> plans;
  plans.reserve(static_cast<std::size_t>(n_folds));
  for (int f = 0; f < n_folds; ++f) {
    FoldPlan p;
    p.fold_index = f;
    p.t_start = cfg.test_start + f * cfg.fold_length;
    p.t_end = std::min(p.t_start + cfg.fold_length, effective_end);
    p.test_begin = static_cast<int>(std::llround((p.t_start - grid_t_start) / cfg.t_bin));
    p.test_end_bin = static_cast<int>(std::llround((p.t_end - grid_t_start) / cfg.t_bin));
    p.train_begin = std::max(0, p.test_begin - clip_bins);
    plans.push_back(p);
  }
  return plans;
}

namespace {

FoldRecord run_fold(const BacktestConfig& cfg, const BinnedCounts& all, const EventSet& events,
                    const FoldPlan& plan) {
  const SpatioTemporalGrid& grid = all.grid;
  const int fold_index = plan.fold_index;
  const double f_start = plan.t_start;
  const double f_end = plan.t_end;

  if (plan.test_begin - plan.train_begin <= 0)
    throw InsufficientHistory("no training bins before fold " + std::to_string(fold_index));

  const BinnedCounts training = slice_time(all, plan.train_begin, plan.test_begin);
  if (training.grid.t_end > f_start + 1e-9)
    throw std::logic_error("training window leaks into the fold");

  FoldRecord rec;
  rec.fold_index = fold_index;
  rec.t_start = f_start;
  rec.t_end = f_end;
  rec.fold_actual = slice_time(all, plan.test_begin, plan.test_end_bin);
  rec.fold_events = events_in_window(events, f_start, f_end);

  // Model: train with the retrain guard, then one batched prediction per
  // surface (bin centres, event locations, integration lattice).
  const std::uint64_t fold_seed =
      derive_seed(cfg.master_seed, static_cast<std::uint64_t>(fold_index), 0);
  auto train_fn = [&](std::uint64_t seed) {
    ModelConfig mc = cfg.model;
    mc.seed = seed;
    return train(mc, training, cfg.opt);
  };
  const GuardResult guard =
      retrain_guard(train_fn, cfg.elbo_threshold, cfg.max_retrains, fold_seed);
  rec.final_elbo = guard.final_elbo;
  rec.retrains = guard.retrains;
  rec.flagged = guard.flagged;

  const double volume = grid.bin_volume();
  const Eigen::MatrixXd test_centers = rec.fold_actual.grid.bin_centers();
  rec.pred_counts_stgp = predict_rate(guard.state, test_centers, volume).rate * volume;

  const TimeWindow window{f_start, f_end};
  const IntegrationLattice lat = integration_lattice(window, grid, cfg.mask, cfg.eval);

  Eigen::MatrixXd event_pts(rec.fold_events.size(), 3);
  for (std::size_t i = 0; i < rec.fold_events.size(); ++i) {
    const auto& r = rec.fold_events.records[i];
    event_pts.row(static_cast<Eigen::Index>(i)) << r.x, r.y, r.t;
  }
  rec.event_rate_stgp = event_pts.rows() > 0
                            ? predict_rate(guard.state, event_pts, volume).rate
                            : Eigen::VectorXd();
  const Eigen::VectorXd lat_rates_stgp =
      lat.points.rows() > 0 ? predict_rate(guard.state, lat.points, volume).rate
                            : Eigen::VectorXd();

  // MEDIC: full history before the fold, no training-span clip.
  const BinnedCounts history = slice_time(all, 0, plan.test_begin);
  std::vector<BinQuery> queries;
  queries.reserve(static_cast<std::size_t>(rec.fold_actual.counts.size()));
  const SpatioTemporalGrid& fgrid = rec.fold_actual.grid;
  for (int it = 0; it < fgrid.n_time(); ++it)
    for (int iy = 0; iy < fgrid.ny; ++iy)
      for (int ix = 0; ix < fgrid.nx; ++ix)
        queries.push_back({ix, iy, fgrid.t_center(it)});
  rec.pred_counts_medic = medic_predict(history, queries, cfg.medic).counts;

  auto medic_rate_at = [&](double x, double y, double t) {
    int it, iy, ix;
    if (!fgrid.locate(x, y, t, it, iy, ix)) return 0.0;
    return rec.pred_counts_medic[fgrid.flat_index(it, iy, ix)] / volume;
  };
  rec.event_rate_medic.resize(event_pts.rows());
  for (Eigen::Index i = 0; i < event_pts.rows(); ++i)
    rec.event_rate_medic[i] = medic_rate_at(event_pts(i, 0), event_pts(i, 1), event_pts(i, 2));

  // Per-fold scores.
  const std::int64_t k = static_cast<std::int64_t>(rec.fold_events.size());
  const int n_time_bins = fgrid.n_time();

  rec.stgp.fold_start = rec.medic.fold_start = f_start;
  rec.stgp.fold_end = rec.medic.fold_end = f_end;
  rec.stgp.n_events = rec.medic.n_events = k;
  rec.stgp.n_bins = rec.medic.n_bins =
      static_cast<std::int64_t>(n_time_bins) * cfg.mask.count_land();

  rec.stgp.mae = mae_counts(rec.pred_counts_stgp, rec.fold_actual, cfg.mask);
  rec.medic.mae = mae_counts(rec.pred_counts_medic, rec.fold_actual, cfg.mask);

  rec.stgp.event_term = event_term_from_rates(rec.event_rate_stgp, cfg.eval.rate_floor);
  rec.medic.event_term = event_term_from_rates(rec.event_rate_medic, cfg.eval.rate_floor);

  rec.stgp.integral = lat_rates_stgp.size() > 0
                          ? (lat_rates_stgp.array() * lat.dt.array()).sum() * lat.cell_area
                          : 0.0;
  double medic_integral = 0.0;
  for (Eigen::Index i = 0; i < lat.points.rows(); ++i)
    medic_integral +=
        medic_rate_at(lat.points(i, 0), lat.points(i, 1), lat.points(i, 2)) * lat.dt[i];
  rec.medic.integral = medic_integral * lat.cell_area;

  const double logfact_k = log_factorial(k);
  rec.stgp.loglik = rec.stgp.event_term - rec.stgp.integral - logfact_k;
  rec.medic.loglik = rec.medic.event_term - rec.medic.integral - logfact_k;
  return rec;
}

}  // namespace

BacktestReport run_backtest(const BacktestConfig& cfg, const EventSet& raw_events) {
  cfg.validate();

  const EventSet filtered = filter_events(raw_events, cfg.bbox, cfg.emergencies_only);
  if (filtered.empty()) throw EmptyInput("no events inside the study region");
  const EventSet events = project_events(filtered, cfg.proj);

  double min_t = std::numeric_limits<double>::infinity();
  for (const auto& r : events.records) min_t = std::min(min_t, r.t);
  if (min_t >= cfg.test_start)
    throw InsufficientHistory("no events before the test window");

  // Time lattice anchored at test_start, covering the history and the test
  // window (the end pushed out to a whole bin if needed).
  const int n_hist = static_cast<int>(std::ceil((cfg.test_start - min_t) / cfg.t_bin - 1e-9));
  const double t0 = cfg.test_start - n_hist * cfg.t_bin;
  const int n_test = static_cast<int>(std::ceil((cfg.test_end - cfg.test_start) / cfg.t_bin - 1e-9));
  const double effective_end = cfg.test_start + n_test * cfg.t_bin;
  if (effective_end != cfg.test_end)
    std::cerr << "note: test_end pushed to the next bin edge (" << fmt_g17(effective_end)
              << " h)\n";

  const SpatioTemporalGrid grid =
      make_grid(cfg.bbox, cfg.proj, cfg.grid_nx, cfg.grid_ny, t0, effective_end, cfg.t_bin);
  const BinnedCounts all = bin_events(events, grid);

  BacktestReport report;
  report.master_seed = cfg.master_seed;
  report.test_start = cfg.test_start;
  report.test_end = effective_end;
  report.epoch_seconds = events.epoch_seconds;
  report.rate_floor = cfg.eval.rate_floor;
  report.mask = cfg.mask.land.empty() ? LandMask::all_land(grid.nx, grid.ny) : cfg.mask;
  if (report.mask.nx != grid.nx || report.mask.ny != grid.ny)
    throw ShapeMismatch("land mask does not match the grid");

  BacktestConfig cfg_resolved = cfg;
  cfg_resolved.mask = report.mask;

  const std::vector<FoldPlan> plans = plan_folds(cfg, grid.t_start, effective_end);
  const int n_folds = static_cast<int>(plans.size());

  std::vector<FoldRecord> folds(static_cast<std::size_t>(n_folds));
  const int workers = std::max(1, cfg.parallel_folds);
  if (workers == 1) {
    for (int f = 0; f < n_folds; ++f)
      folds[static_cast<std::size_t>(f)] = run_fold(cfg_resolved, all, events, plans[f]);
  } else {
    std::vector<std::future<FoldRecord>> pending;
    for (int f = 0; f < n_folds; ++f)
      pending.push_back(std::async(std::launch::async, [&, f] {
        return run_fold(cfg_resolved, all, events, plans[static_cast<std::size_t>(f)]);
      }));
    for (int f = 0; f < n_folds; ++f) folds[static_cast<std::size_t>(f)] = pending[f].get();
  }
  report.folds = std::move(folds);

  // Global scores, accumulated in fold order over the raw predictions so the
  // persisted files rescore to exactly these numbers.
  double abs_stgp = 0.0, abs_medic = 0.0;
  std::int64_t n_land_bins = 0;
  double et_stgp = 0.0, et_medic = 0.0, int_stgp = 0.0, int_medic = 0.0;
  std::int64_t k_total = 0;
  std::vector<double> all_pred_stgp, all_pred_medic;
  std::vector<int> all_actual;
  for (const auto& rec : report.folds) {
    const SpatioTemporalGrid& fg = rec.fold_actual.grid;
    for (int it = 0; it < fg.n_time(); ++it)
      for (int iy = 0; iy < fg.ny; ++iy)
        for (int ix = 0; ix < fg.nx; ++ix) {
          const std::int64_t b = fg.flat_index(it, iy, ix);
          all_pred_stgp.push_back(rec.pred_counts_stgp[b]);
          all_pred_medic.push_back(rec.pred_counts_medic[b]);
          all_actual.push_back(rec.fold_actual.counts[b]);
          if (!report.mask.is_land(iy, ix)) continue;
          abs_stgp += std::abs(rec.pred_counts_stgp[b] - rec.fold_actual.counts[b]);
          abs_medic += std::abs(rec.pred_counts_medic[b] - rec.fold_actual.counts[b]);
          ++n_land_bins;
        }
    et_stgp += event_term_from_rates(rec.event_rate_stgp, cfg.eval.rate_floor);
    et_medic += event_term_from_rates(rec.event_rate_medic, cfg.eval.rate_floor);
    int_stgp += rec.stgp.integral;
    int_medic += rec.medic.integral;
    k_total += rec.stgp.n_events;
  }
  if (n_land_bins == 0) throw DataError("no land bins in the test window");
  report.mae_stgp = abs_stgp / static_cast<double>(n_land_bins);
  report.mae_medic = abs_medic / static_cast<double>(n_land_bins);
  const double logfact_total = log_factorial(k_total);
  report.loglik_stgp = et_stgp - int_stgp - logfact_total;
  report.loglik_medic = et_medic - int_medic - logfact_total;

  // Residual breakdowns over the whole test window.
  BinnedCounts test_all;
  test_all.grid = grid;
  test_all.grid.t_start = cfg.test_start;
  test_all.grid.t_end = effective_end;
  test_all.counts.resize(static_cast<Eigen::Index>(all_actual.size()));
  Eigen::VectorXd pred_stgp(test_all.counts.size()), pred_medic(test_all.counts.size());
  for (std::size_t i = 0; i < all_actual.size(); ++i) {
    test_all.counts[static_cast<Eigen::Index>(i)] = all_actual[i];
    pred_stgp[static_cast<Eigen::Index>(i)] = all_pred_stgp[i];
    pred_medic[static_cast<Eigen::Index>(i)] = all_pred_medic[i];
  }
  report.residuals_stgp = residual_breakdown(pred_stgp, test_all, report.mask);
  report.residuals_medic = residual_breakdown(pred_medic, test_all, report.mask);
  return report;
}

void persist_report(const BacktestReport& report, const std::string& out_dir,
                    const std::string& resolved_config_text) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());

  auto open = [&](const std::string& name) {
    std::ofstream out(out_dir + "/" + name);
    if (!out) throw IoError("cannot write '" + out_dir + "/" + name + "'");
    return out;
  };

  const std::uint64_t config_hash = fnv1a_64(resolved_config_text);

  {
    auto out = open("config_resolved.cfg");
    out << resolved_config_text;
  }
  {
    auto out = open("mask.txt");
    for (int iy = 0; iy < report.mask.ny; ++iy) {
      for (int ix = 0; ix < report.mask.nx; ++ix)
        out << (ix ? " " : "") << (report.mask.is_land(iy, ix) ? 1 : 0);
      out << "\n";
    }
  }
  {
    auto out = open("folds.csv");
    out << "fold,t_start,t_end,n_events,mae_stgp,mae_medic,event_term_stgp,event_term_medic,"
           "integral_stgp,integral_medic,ll_stgp,ll_medic,final_elbo,retrains,flagged\n";
    for (const auto& f : report.folds) {
      out << f.fold_index << ',' << fmt_g17(f.t_start) << ',' << fmt_g17(f.t_end) << ','
          << f.stgp.n_events << ',' << fmt_g17(f.stgp.mae) << ',' << fmt_g17(f.medic.mae) << ','
          << fmt_g17(f.stgp.event_term) << ',' << fmt_g17(f.medic.event_term) << ','
          << fmt_g17(f.stgp.integral) << ',' << fmt_g17(f.medic.integral) << ','
          << fmt_g17(f.stgp.loglik) << ',' << fmt_g17(f.medic.loglik) << ','
          << fmt_g17(f.final_elbo) << ',' << f.retrains << ',' << (f.flagged ? 1 : 0) << "\n";
    }
  }
  {
    auto out = open("predictions_bins.csv");
    out << "fold,t_center,iy,ix,land,actual,pred_stgp,pred_medic\n";
    for (const auto& f : report.folds) {
      const SpatioTemporalGrid& fg = f.fold_actual.grid;
      for (int it = 0; it < fg.n_time(); ++it)
        for (int iy = 0; iy < fg.ny; ++iy)
          for (int ix = 0; ix < fg.nx; ++ix) {
            const std::int64_t b = fg.flat_index(it, iy, ix);
            out << f.fold_index << ',' << fmt_g17(fg.t_center(it)) << ',' << iy << ',' << ix
                << ',' << (report.mask.is_land(iy, ix) ? 1 : 0) << ','
                << f.fold_actual.counts[b] << ',' << fmt_g17(f.pred_counts_stgp[b]) << ','
                << fmt_g17(f.pred_counts_medic[b]) << "\n";
          }
    }
  }
  {
    auto out = open("predictions_events.csv");
    out << "fold,t,x_km,y_km,rate_stgp,rate_medic\n";
    for (const auto& f : report.folds) {
      for (std::size_t i = 0; i < f.fold_events.size(); ++i) {
        const auto& r = f.fold_events.records[i];
        out << f.fold_index << ',' << fmt_g17(r.t) << ',' << fmt_g17(r.x) << ',' << fmt_g17(r.y)
            << ',' << fmt_g17(f.event_rate_stgp[static_cast<Eigen::Index>(i)]) << ','
            << fmt_g17(f.event_rate_medic[static_cast<Eigen::Index>(i)]) << "\n";
      }
    }
  }
  auto write_residuals = [&](const std::string& name, const ResidualBreakdown& rb) {
    {
      auto out = open("residuals_by_count_" + name + ".csv");
      out << "observed,n,mean,q10,q25,q50,q75,q90\n";
      for (const auto& [count, g] : rb.by_count)
        out << count << ',' << g.n << ',' << fmt_g17(g.mean) << ',' << fmt_g17(g.q10) << ','
            << fmt_g17(g.q25) << ',' << fmt_g17(g.q50) << ',' << fmt_g17(g.q75) << ','
            << fmt_g17(g.q90) << "\n";
    }
    {
      auto out = open("residuals_spatial_" + name + ".csv");
      for (int iy = 0; iy < rb.cell_mean.rows(); ++iy) {
        for (int ix = 0; ix < rb.cell_mean.cols(); ++ix)
          out << (ix ? "," : "") << fmt_g17(rb.cell_mean(iy, ix));
        out << "\n";
      }
    }
  };
  write_residuals("stgp", report.residuals_stgp);
  write_residuals("medic", report.residuals_medic);

  {
    json j;
    j["config_hash"] = config_hash;
    j["master_seed"] = report.master_seed;
    j["epoch_seconds"] = report.epoch_seconds;
    j["test_start_hours"] = report.test_start;
    j["test_end_hours"] = report.test_end;
    j["n_folds"] = report.folds.size();
    std::int64_t k = 0;
    for (const auto& f : report.folds) k += f.stgp.n_events;
    j["n_events"] = k;
    j["rate_floor"] = report.rate_floor;
    j["stgp"] = {{"mae", report.mae_stgp}, {"loglik", report.loglik_stgp}};
    j["medic"] = {{"mae", report.mae_medic}, {"loglik", report.loglik_medic}};
    json flagged = json::array();
    for (const auto& f : report.folds)
      if (f.flagged) flagged.push_back(f.fold_index);
    j["flagged_folds"] = flagged;
    auto out = open("summary.json");
    out << j.dump(2) << "\n";
  }
  {
    auto out = open("summary.txt");
    out << "method   mae        loglik\n";
    char line[128];
    std::snprintf(line, sizeof line, "stgp     %-10.4g %.6g\n", report.mae_stgp,
                  report.loglik_stgp);
    out << line;
    std::snprintf(line, sizeof line, "medic    %-10.4g %.6g\n", report.mae_medic,
                  report.loglik_medic);
    out << line;
  }
}

RescoredSummary rescore_report(const std::string& out_dir) {
  auto open = [&](const std::string& name) {
    std::ifstream in(out_dir + "/" + name);
    if (!in) throw IoError("cannot read '" + out_dir + "/" + name + "'");
    return in;
  };

  double rate_floor = 1e-4;
  {
    auto in = open("summary.json");
    json j = json::parse(in);
    rate_floor = j.at("rate_floor").get<double>();
  }

  RescoredSummary out;
  {
    auto in = open("predictions_bins.csv");
    std::string line;
    std::getline(in, line);  // header
    double abs_stgp = 0.0, abs_medic = 0.0;
    std::int64_t n = 0;
    while (std::getline(in, line)) {
      int fold, iy, ix, land, actual;
      double t, ps, pm;
      if (std::sscanf(line.c_str(), "%d,%lf,%d,%d,%d,%d,%lf,%lf", &fold, &t, &iy, &ix, &land,
                      &actual, &ps, &pm) != 8)
        throw IoError("corrupt predictions_bins.csv row: " + line);
      if (!land) continue;
      abs_stgp += std::abs(ps - actual);
      abs_medic += std::abs(pm - actual);
      ++n;
    }
    if (n == 0) throw EmptyInput("predictions_bins.csv has no land rows");
    out.mae_stgp = abs_stgp / static_cast<double>(n);
    out.mae_medic = abs_medic / static_cast<double>(n);
  }
  double et_stgp = 0.0, et_medic = 0.0;
  {
    auto in = open("predictions_events.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      int fold;
      double t, x, y, rs, rm;
      if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &fold, &t, &x, &y, &rs, &rm) != 6)
        throw IoError("corrupt predictions_events.csv row: " + line);
      et_stgp += std::log(std::max(rs, rate_floor));
      et_medic += std::log(std::max(rm, rate_floor));
      ++out.n_events;
    }
  }
  double int_stgp = 0.0, int_medic = 0.0;
  {
    auto in = open("folds.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      int fold, k, retrains, flagged;
      double t0, t1, mae_s, mae_m, ets, etm, is, im, lls, llm, elbo;
      if (std::sscanf(line.c_str(),
                      "%d,%lf,%lf,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%d,%d", &fold, &t0,
                      &t1, &k, &mae_s, &mae_m, &ets, &etm, &is, &im, &lls, &llm, &elbo,
                      &retrains, &flagged) != 15)
        throw IoError("corrupt folds.csv row: " + line);
      int_stgp += is;
      int_medic += im;
      ++out.n_folds;
    }
  }
  const double logfact_total = log_factorial(out.n_events);
  out.loglik_stgp = et_stgp - int_stgp - logfact_total;
  out.loglik_medic = et_medic - int_medic - logfact_total;
  return out;
}

}  // namespace stgp
