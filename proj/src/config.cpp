#include "stgp/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "stgp/rng.hpp"

namespace stgp {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "auto";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& key, const std::string& v) {
  if (v == "auto") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (errno != 0 || end != v.c_str() + v.size())
    throw DataError("config key '" + key + "': bad number '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  const double x = parse_num(key, v);
  const int i = static_cast<int>(std::llround(x));
  if (std::abs(x - i) > 1e-9) throw DataError("config key '" + key + "' must be an integer");
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size())
    throw DataError("config key '" + key + "': bad unsigned integer '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config key '" + key + "' must be true or false");
}

struct KeyDef {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define STR_KEY(name, field) \
  {name, [](const Config& c) { return c.field; }, \
   [](Config& c, const std::string& v) { c.field = v; }}
#define NUM_KEY(name, field) \
  {name, [](const Config& c) { return fmt(c.field); }, \
   [](Config& c, const std::string& v) { c.field = parse_num(name, v); }}
#define INT_KEY(name, field) \
  {name, [](const Config& c) { return std::to_string(c.field); }, \
   [](Config& c, const std::string& v) { c.field = parse_int(name, v); }}
#define U64_KEY(name, field) \
  {name, [](const Config& c) { return std::to_string(c.field); }, \
   [](Config& c, const std::string& v) { c.field = parse_u64(name, v); }}
#define BOOL_KEY(name, field) \
  {name, [](const Config& c) { return c.field ? "true" : "false"; }, \
   [](Config& c, const std::string& v) { c.field = parse_bool(name, v); }}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      STR_KEY("io.timestamp_col", csv.timestamp_col),
      STR_KEY("io.lat_col", csv.lat_col),
      STR_KEY("io.lon_col", csv.lon_col),
      STR_KEY("io.emergency_col", csv.emergency_col),
      STR_KEY("io.epoch", epoch),
      STR_KEY("io.land_mask", land_mask_path),
      NUM_KEY("domain.lat_min", bbox.lat_min),
      NUM_KEY("domain.lon_min", bbox.lon_min),
      NUM_KEY("domain.lat_max", bbox.lat_max),
      NUM_KEY("domain.lon_max", bbox.lon_max),
      BOOL_KEY("domain.emergencies_only", emergencies_only),
      NUM_KEY("domain.km_per_deg_lat", km_per_deg_lat),
      INT_KEY("grid.nx", grid_nx),
      INT_KEY("grid.ny", grid_ny),
      NUM_KEY("grid.t_bin_hours", t_bin),
      NUM_KEY("kernel.time_marginal.variance", k_time_marginal.variance),
      NUM_KEY("kernel.time_marginal.lengthscale_hours", k_time_marginal.lengthscale),
      NUM_KEY("kernel.time_marginal.period_hours", k_time_marginal.period),
      BOOL_KEY("kernel.time_marginal.trainable", k_time_marginal.trainable_variance),
      NUM_KEY("kernel.space_marginal.variance", k_space_marginal.variance),
      NUM_KEY("kernel.space_marginal.lengthscale_km", k_space_marginal.lengthscale),
      BOOL_KEY("kernel.space_marginal.trainable", k_space_marginal.trainable_variance),
      NUM_KEY("kernel.time_interaction.variance", k_time_interaction.variance),
      NUM_KEY("kernel.time_interaction.lengthscale_hours", k_time_interaction.lengthscale),
      NUM_KEY("kernel.time_interaction.period_hours", k_time_interaction.period),
      BOOL_KEY("kernel.time_interaction.trainable", k_time_interaction.trainable_variance),
      NUM_KEY("kernel.space_interaction.variance", k_space_interaction.variance),
      NUM_KEY("kernel.space_interaction.lengthscale_km", k_space_interaction.lengthscale),
      BOOL_KEY("kernel.space_interaction.trainable", k_space_interaction.trainable_variance),
      INT_KEY("model.num_inducing", num_inducing),
      NUM_KEY("model.jitter", jitter),
      NUM_KEY("model.mean_const", mean_const),
      U64_KEY("model.seed", seed),
      INT_KEY("optimizer.max_iters", opt.max_iters),
      NUM_KEY("optimizer.grad_tol", opt.grad_tol),
      NUM_KEY("optimizer.f_tol", opt.f_tol),
      NUM_KEY("optimizer.wolfe_c1", opt.wolfe_c1),
      NUM_KEY("optimizer.wolfe_c2", opt.wolfe_c2),
      INT_KEY("optimizer.memory", opt.memory),
      INT_KEY("medic.weeks_back", medic.weeks_back),
      INT_KEY("medic.years_back", medic.years_back),
      INT_KEY("eval.integration_nx", eval.integration_nx),
      INT_KEY("eval.integration_ny", eval.integration_ny),
      NUM_KEY("eval.integration_t_bin_hours", eval.integration_t_bin),
      NUM_KEY("eval.rate_floor", eval.rate_floor),
      STR_KEY("backtest.test_start", test_start),
      STR_KEY("backtest.test_end", test_end),
      NUM_KEY("backtest.fold_length_hours", fold_length_hours),
      NUM_KEY("backtest.max_training_span_hours", max_training_span_hours),
      NUM_KEY("backtest.elbo_threshold", elbo_threshold),
      INT_KEY("backtest.max_retrains", max_retrains),
      INT_KEY("backtest.parallel_folds", parallel_folds),
      STR_KEY("train.start", train_start),
      STR_KEY("train.end", train_end),
      NUM_KEY("synth.base_log_rate", synth_base_log_rate),
      NUM_KEY("synth.diurnal_amplitude", synth_diurnal_amplitude),
      NUM_KEY("synth.phase", synth_phase),
      STR_KEY("synth.bumps", synth_bumps),
      NUM_KEY("synth.t_start_hours", synth_t_start_hours),
      NUM_KEY("synth.duration_hours", synth_duration_hours),
      U64_KEY("synth.seed", synth_seed),
  };
  return table;
}

#undef STR_KEY
#undef NUM_KEY
#undef INT_KEY
#undef U64_KEY
#undef BOOL_KEY

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KernelExpr Config::kernel() const {
  return KernelExpr::composed(k_time_marginal, k_space_marginal, k_time_interaction,
                              k_space_interaction);
}

ModelConfig Config::model_config() const {
  ModelConfig m;
  m.kernel = kernel();
  m.num_inducing = num_inducing;
  m.mean_const = mean_const;
  m.jitter = jitter;
  m.seed = seed;
  return m;
}

BacktestConfig Config::backtest_config() const {
  BacktestConfig b;
  b.test_start = hours_since_epoch(test_start);
  b.test_end = hours_since_epoch(test_end);
  b.fold_length = fold_length_hours;
  b.max_training_span = max_training_span_hours;
  b.elbo_threshold = elbo_threshold;
  b.max_retrains = max_retrains;
  b.master_seed = seed;
  b.parallel_folds = parallel_folds;
  b.bbox = bbox;
  b.proj = projection();
  b.grid_nx = grid_nx;
  b.grid_ny = grid_ny;
  b.t_bin = t_bin;
  b.emergencies_only = emergencies_only;
  b.model = model_config();
  b.opt = opt;
  b.medic = medic;
  b.medic.t_bin = t_bin;
  b.eval = eval;
  return b;
}

IntensitySpec Config::intensity_spec() const {
  IntensitySpec spec;
  spec.base_log_rate = synth_base_log_rate;
  spec.diurnal_amplitude = synth_diurnal_amplitude;
  spec.phase = synth_phase;
  spec.bbox = bbox;
  spec.proj = projection();
  spec.t_start = synth_t_start_hours;
  spec.t_end = synth_t_start_hours + synth_duration_hours;
  spec.seed = synth_seed;

  std::stringstream ss(synth_bumps);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trimmed(item);
    if (item.empty()) continue;
    SpatialBump b;
    if (std::sscanf(item.c_str(), "%lf:%lf:%lf:%lf", &b.cx, &b.cy, &b.width, &b.height) != 4)
      throw DataError("synth.bumps entry '" + item + "' is not cx:cy:width:height");
    spec.bumps.push_back(b);
  }
  return spec;
}

std::string Config::save() const {
  std::vector<const KeyDef*> keys;
  for (const auto& k : key_table()) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(),
            [](const KeyDef* a, const KeyDef* b) { return a->key < b->key; });
  std::string out;
  for (const auto* k : keys) out += k->key + " = " + k->get(*this) + "\n";
  return out;
}

std::uint64_t Config::hash() const { return fnv1a_64(save()); }

Config parse_config(const std::string& text) {
  Config cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trimmed(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) + " is not 'key = value'");
    apply_override(cfg, trimmed(line.substr(0, eq)) + "=" + trimmed(line.substr(eq + 1)));
  }
  return cfg;
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(Config& cfg, const std::string& key_value) {
  const std::size_t eq = key_value.find('=');
  if (eq == std::string::npos) throw DataError("override '" + key_value + "' is not key=value");
  const std::string key = trimmed(key_value.substr(0, eq));
  const std::string value = trimmed(key_value.substr(eq + 1));
  for (const auto& k : key_table()) {
    if (k.key == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw DataError("unknown config key '" + key + "'");
}

}  // namespace stgp
