#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "stgp/backtest.hpp"
#include "stgp/synth.hpp"

namespace stgp {

// Everything the CLI can be told, in one flat key = value file. Every CLI
// --set option writes one of these keys; save() emits the canonical form
// that the config hash is computed over.
struct Config {
  // io
  CsvSchema csv;
  std::string epoch = "2012-01-01T00:00:00Z";  // t = 0 reference, ISO-8601 UTC
  std::string land_mask_path;

  // domain
  BoundingBox bbox = cape_town_bbox();
  bool emergencies_only = true;
  double km_per_deg_lat = 111.19;

  // grid
  int grid_nx = 6;
  int grid_ny = 6;
  double t_bin = 4.0;

  // kernel, one block per leaf of the composed covariance
  KernelParams k_time_marginal{1.0, 8.0, 24.0, true};
  KernelParams k_space_marginal{1.0, 10.0, 24.0, true};
  KernelParams k_time_interaction{1.0, 8.0, 24.0, true};
  KernelParams k_space_interaction{1.0, 10.0, 24.0, true};

  // model
  int num_inducing = 180;
  double jitter = 1e-6;
  double mean_const = std::numeric_limits<double>::quiet_NaN();  // NaN: from data
  std::uint64_t seed = 0;

  // optimizer
  OptimizerConfig opt;

  // medic
  MedicConfig medic;

  // eval
  EvalConfig eval;

  // backtest window (ISO-8601 in the epoch's clock)
  std::string test_start = "2015-03-17T00:00:00Z";
  std::string test_end = "2015-09-15T00:00:00Z";  // 14 September inclusive
  double fold_length_hours = 168.0;
  double max_training_span_hours = 4380.0;  // six months
  double elbo_threshold = -1.07e4;
  int max_retrains = 5;
  int parallel_folds = 1;

  // single-model train/evaluate window (ISO; empty = full data range)
  std::string train_start;
  std::string train_end;

  // synth
  double synth_base_log_rate = -5.0;
  double synth_diurnal_amplitude = 0.8;
  double synth_phase = -2.356194490192345;  // peak mid-afternoon
  std::string synth_bumps = "-8:-6:9:1.1;10:8:13:0.8";  // cx:cy:width:height;...
  double synth_t_start_hours = 0.0;
  double synth_duration_hours = 4368.0;  // 26 weeks
  std::uint64_t synth_seed = 7;

  double epoch_seconds() const { return parse_iso8601_utc(epoch); }
  double hours_since_epoch(const std::string& iso) const {
    return (parse_iso8601_utc(iso) - epoch_seconds()) / 3600.0;
  }

  KernelExpr kernel() const;
  ModelConfig model_config() const;
  Projection projection() const { return make_projection(bbox, km_per_deg_lat); }
  BacktestConfig backtest_config() const;  // mask left empty, caller loads it
  IntensitySpec intensity_spec() const;

  // Canonical text form (sorted keys, %.17g); the config hash is FNV-1a 64
  // over exactly this text.
  std::string save() const;
  std::uint64_t hash() const;
};

// Parses `key = value` lines ('#' starts a comment). Unknown keys are an
// error so typos do not silently fall back to defaults.
Config parse_config(const std::string& text);
Config load_config_file(const std::string& path);

// Applies one `key=value` override (the CLI --set option).
void apply_override(Config& cfg, const std::string& key_value);

}  // namespace stgp
