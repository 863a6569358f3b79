#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "stgp/backtest.hpp"
#include "stgp/config.hpp"
#include "stgp/synth.hpp"

namespace {

using namespace stgp;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "configuration file (key = value lines)");
  cmd->add_option("-s,--set", opts.overrides, "override one config key, e.g. grid.nx=6")
      ->take_all();
  cmd->add_option("--seed", opts.seed, "override the master seed (model.seed)");
}

Config resolve_config(const CommonOpts& opts) {
  Config cfg;
  if (!opts.config_path.empty()) cfg = load_config_file(opts.config_path);
  for (const auto& kv : opts.overrides) apply_override(cfg, kv);
  if (!opts.seed.empty()) apply_override(cfg, "model.seed=" + opts.seed);
  return cfg;
}

EventSet load_events(const Config& cfg, const std::string& path) {
  const IngestResult result = ingest_csv(path, cfg.csv, cfg.epoch_seconds());
  if (!result.issues.empty()) {
    std::cerr << "warning: " << result.issues.size() << " malformed rows skipped\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(result.issues.size(), 5); ++i)
      std::cerr << "  row " << result.issues[i].row << ": " << result.issues[i].reason << "\n";
  }
  return result.events;
}

// Filtered, projected events ready for binning or scoring.
EventSet prepare_events(const Config& cfg, const std::string& path) {
  return project_events(filter_events(load_events(cfg, path), cfg.bbox, cfg.emergencies_only),
                        cfg.projection());
}

int cmd_ingest(const Config& cfg, const std::string& input, const std::string& output) {
  const IngestResult result = ingest_csv(input, cfg.csv, cfg.epoch_seconds());
  std::cerr << "ingested " << result.events.size() << " events, " << result.issues.size()
            << " malformed rows\n";
  for (const auto& issue : result.issues)
    std::cerr << "  row " << issue.row << ": " << issue.reason << "\n";
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : result.events.records) {
    lo = std::min(lo, r.t);
    hi = std::max(hi, r.t);
  }
  std::cerr << "time range: " << format_iso8601_utc(lo * 3600.0 + result.events.epoch_seconds)
            << " .. " << format_iso8601_utc(hi * 3600.0 + result.events.epoch_seconds) << "\n";
  write_csv(result.events, output);
  std::cout << "wrote " << output << "\n";
  return 0;
}

int cmd_synth(const Config& cfg, const std::string& output) {
  EventSet events = sample_events(cfg.intensity_spec());
  events.epoch_seconds = cfg.epoch_seconds();
  write_csv(events, output);
  std::cout << "wrote " << events.size() << " events to " << output << "\n";
  return 0;
}

// Training window from config, or from the data when unset.
SpatioTemporalGrid training_grid(const Config& cfg, const EventSet& events) {
  double lo, hi;
  if (!cfg.train_start.empty() && !cfg.train_end.empty()) {
    lo = cfg.hours_since_epoch(cfg.train_start);
    hi = cfg.hours_since_epoch(cfg.train_end);
  } else {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const auto& r : events.records) {
      lo = std::min(lo, r.t);
      hi = std::max(hi, r.t);
    }
    lo = std::floor(lo / cfg.t_bin) * cfg.t_bin;
    hi += 1e-9;
  }
  return make_grid(cfg.bbox, cfg.projection(), cfg.grid_nx, cfg.grid_ny, lo, hi, cfg.t_bin);
}

int cmd_train(const Config& cfg, const std::string& events_path, const std::string& model_out) {
  const EventSet events = prepare_events(cfg, events_path);
  if (events.empty()) throw EmptyInput("no events inside the study region");
  const SpatioTemporalGrid grid = training_grid(cfg, events);
  const BinnedCounts binned = bin_events(events, grid);
  std::cerr << "training on " << binned.grid.n_bins() << " bins (" << binned.total()
            << " events, " << binned.dropped << " outside the grid)\n";
  const TrainResult result = train(cfg.model_config(), binned, cfg.opt);
  std::cout << "final elbo " << result.final_elbo << " after " << result.opt.iterations
            << " iterations (" << to_string(result.opt.status) << ")\n";
  save_model(model_out, result.state, grid);
  std::cout << "wrote " << model_out << "\n";
  return 0;
}

int cmd_predict(const Config& cfg, const std::string& model_path, const std::string& output,
                const std::string& start_iso, const std::string& end_iso) {
  VariationalState state;
  SpatioTemporalGrid grid;
  load_model(model_path, state, grid);
  if (!start_iso.empty()) grid.t_start = cfg.hours_since_epoch(start_iso);
  if (!end_iso.empty()) {
    const double end = cfg.hours_since_epoch(end_iso);
    const int n = std::max(1, static_cast<int>(std::ceil((end - grid.t_start) / grid.t_bin)));
    grid.t_end = grid.t_start + n * grid.t_bin;
  }
  grid.validate();

  const Eigen::MatrixXd points = grid.bin_centers();
  const RateField field = predict_rate(state, points, grid.bin_volume());
  const Projection proj = cfg.projection();

  std::ofstream out(output);
  if (!out) throw IoError("cannot open '" + output + "' for writing");
  out << "t_hours,x_km,y_km,lat,lon,rate_per_km2_hour,expected_count,latent_mean,latent_var\n";
  char buf[256];
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double lat, lon;
    proj.to_deg(points(i, 0), points(i, 1), lat, lon);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  points(i, 2), points(i, 0), points(i, 1), lat, lon, field.rate[i],
                  field.rate[i] * grid.bin_volume(), field.latent_mean[i], field.latent_var[i]);
    out << buf;
  }
  std::cout << "wrote " << points.rows() << " predictions to " << output << "\n";
  return 0;
}

int cmd_evaluate(const Config& cfg, const std::string& model_path,
                 const std::string& events_path) {
  VariationalState state;
  SpatioTemporalGrid grid;
  load_model(model_path, state, grid);

  const EventSet events = prepare_events(cfg, events_path);
  const double t0 = cfg.hours_since_epoch(cfg.test_start);
  const double t1 = cfg.hours_since_epoch(cfg.test_end);
  grid.t_start = t0;
  const int n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / grid.t_bin - 1e-9)));
  grid.t_end = t0 + n * grid.t_bin;

  EventSet window_events;
  window_events.epoch_seconds = events.epoch_seconds;
  for (const auto& r : events.records)
    if (r.t >= t0 && r.t < grid.t_end) window_events.records.push_back(r);

  const BinnedCounts actual = bin_events(window_events, grid);
  const LandMask mask = cfg.land_mask_path.empty()
                            ? LandMask::all_land(grid.nx, grid.ny)
                            : load_land_mask(cfg.land_mask_path, grid);

  const double volume = grid.bin_volume();
  const RateField at_bins = predict_rate(state, grid.bin_centers(), volume);
  const double mae_value = mae(at_bins, actual, mask);

  Eigen::MatrixXd event_pts(window_events.size(), 3);
  for (std::size_t i = 0; i < window_events.size(); ++i) {
    const auto& r = window_events.records[i];
    event_pts.row(static_cast<Eigen::Index>(i)) << r.x, r.y, r.t;
  }
  const TimeWindow window{grid.t_start, grid.t_end};
  const IntegrationLattice lat = integration_lattice(window, grid, mask, cfg.eval);
  const double event_term = event_term_from_rates(
      predict_rate(state, event_pts, volume).rate, cfg.eval.rate_floor);
  const Eigen::VectorXd lat_rates = predict_rate(state, lat.points, volume).rate;
  const double integral = (lat_rates.array() * lat.dt.array()).sum() * lat.cell_area;
  const double ll = event_term - integral -
                    log_factorial(static_cast<std::int64_t>(window_events.size()));

  std::cout << "events " << window_events.size() << "\n";
  std::cout << "mae " << mae_value << "\n";
  std::cout << "loglik " << ll << "\n";
  return 0;
}

int cmd_backtest(const Config& cfg, const std::string& events_path, const std::string& out_dir) {
  const EventSet events = load_events(cfg, events_path);
  BacktestConfig bc = cfg.backtest_config();
  if (!cfg.land_mask_path.empty()) {
    const SpatioTemporalGrid probe = make_grid(cfg.bbox, cfg.projection(), cfg.grid_nx,
                                               cfg.grid_ny, 0.0, cfg.t_bin, cfg.t_bin);
    bc.mask = load_land_mask(cfg.land_mask_path, probe);
  }
  BacktestReport report = run_backtest(bc, events);
  report.config_hash = cfg.hash();
  persist_report(report, out_dir, cfg.save());

  std::cout << "folds " << report.folds.size() << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "stgp   mae %.6g  loglik %.8g\n", report.mae_stgp,
                report.loglik_stgp);
  std::cout << line;
  std::snprintf(line, sizeof line, "medic  mae %.6g  loglik %.8g\n", report.mae_medic,
                report.loglik_medic);
  std::cout << line;
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir) {
  const RescoredSummary s = rescore_report(in_dir);
  std::cout << "folds " << s.n_folds << ", events " << s.n_events << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "stgp   mae %.6g  loglik %.8g\n", s.mae_stgp, s.loglik_stgp);
  std::cout << line;
  std::snprintf(line, sizeof line, "medic  mae %.6g  loglik %.8g\n", s.mae_medic,
                s.loglik_medic);
  std::cout << line;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatiotemporal ambulance demand forecasting"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string input, output, model_path, events_path, out_dir, start_iso, end_iso;

  auto* ingest = app.add_subcommand("ingest", "validate a raw CSV and write the canonical form");
  add_common(ingest, opts);
  ingest->add_option("-i,--input", input, "raw CSV of call records")->required();
  ingest->add_option("-o,--output", output, "canonical CSV to write")->required();

  auto* synth = app.add_subcommand("synth", "sample events from the configured intensity");
  add_common(synth, opts);
  synth->add_option("-o,--output", output, "CSV to write")->required();

  auto* train_cmd = app.add_subcommand("train", "fit the model on an event CSV");
  add_common(train_cmd, opts);
  train_cmd->add_option("-e,--events", events_path, "event CSV")->required();
  train_cmd->add_option("-o,--model-out", model_path, "model file to write")->required();

  auto* predict = app.add_subcommand("predict", "evaluate a trained model on a grid");
  add_common(predict, opts);
  predict->add_option("-m,--model", model_path, "model file")->required();
  predict->add_option("-o,--output", output, "rate table CSV to write")->required();
  predict->add_option("--start", start_iso, "window start (ISO-8601, defaults to model grid)");
  predict->add_option("--end", end_iso, "window end (ISO-8601)");

  auto* evaluate = app.add_subcommand("evaluate", "score a trained model against events");
  add_common(evaluate, opts);
  evaluate->add_option("-m,--model", model_path, "model file")->required();
  evaluate->add_option("-e,--events", events_path, "event CSV")->required();

  auto* backtest = app.add_subcommand("backtest", "run the rolling weekly train/test scheme");
  add_common(backtest, opts);
  backtest->add_option("-e,--events", events_path, "event CSV")->required();
  backtest->add_option("-o,--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand("report", "re-render scores from persisted predictions");
  report->add_option("-i,--in", out_dir, "backtest output directory")->required();

  try {
    app.parse(argc, argv);
    if (report->parsed()) return cmd_report(out_dir);

    const stgp::Config cfg = resolve_config(opts);
    if (ingest->parsed()) return cmd_ingest(cfg, input, output);
    if (synth->parsed()) return cmd_synth(cfg, output);
    if (train_cmd->parsed()) return cmd_train(cfg, events_path, model_path);
    if (predict->parsed()) return cmd_predict(cfg, model_path, output, start_iso, end_iso);
    if (evaluate->parsed()) return cmd_evaluate(cfg, model_path, events_path);
    if (backtest->parsed()) return cmd_backtest(cfg, events_path, out_dir);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const stgp::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const stgp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
