#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stgp/rng.hpp"
#include "stgp/synth.hpp"

using namespace stgp;

namespace {

// 40 km x 40 km box centred on the projection origin.
IntensitySpec base_spec() {
  IntensitySpec spec;
  spec.bbox = BoundingBox{-34.2, 18.3, -33.8, 18.8};
  spec.proj = make_projection(spec.bbox);
  const double half_y = 20.0 / spec.proj.km_per_deg_lat;
  const double half_x = 20.0 / spec.proj.km_per_deg_lon;
  spec.bbox = BoundingBox{spec.proj.origin_lat - half_y, spec.proj.origin_lon - half_x,
                          spec.proj.origin_lat + half_y, spec.proj.origin_lon + half_x};
  spec.t_start = 0.0;
  spec.t_end = 96.0;
  return spec;
}

// Per-bin integral of the intensity, which factorises into independent time
// and space pieces; each is integrated on a fine midpoint lattice.
double bin_integral(const IntensitySpec& spec, double x0, double x1, double y0, double y1,
                    double t0, double t1) {
  const int n = 40;
  double time_part = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = t0 + (t1 - t0) * (i + 0.5) / n;
    time_part += std::exp(spec.diurnal_amplitude *
                          std::sin(2.0 * M_PI * t / 24.0 + spec.phase));
  }
  time_part *= (t1 - t0) / n;
  double space_part = 0.0;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double x = x0 + (x1 - x0) * (ix + 0.5) / n;
      const double y = y0 + (y1 - y0) * (iy + 0.5) / n;
      double g = 0.0;
      for (const auto& b : spec.bumps)
        g += b.height *
             std::exp(-((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) /
                      (2.0 * b.width * b.width));
      space_part += std::exp(g);
    }
  space_part *= (x1 - x0) * (y1 - y0) / (n * n);
  return std::exp(spec.base_log_rate) * time_part * space_part;
}

}  // namespace

TEST_CASE("constant intensity: total counts follow the Poisson moments") {
  IntensitySpec spec = base_spec();
  spec.base_log_rate = std::log(2e-3);  // lambda = 2e-3 over 1600 km^2 x 96 h
  const double expected = 2e-3 * 1600.0 * 96.0;  // = 307.2

  double total = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    spec.seed = 1000 + rep;
    total += static_cast<double>(sample_events(spec).size());
  }
  const double mean = total / reps;
  const double sigma = std::sqrt(expected / reps);
  CHECK(std::abs(mean - expected) <= 3.0 * sigma);
}

TEST_CASE("vanishing intensity yields no events") {
  IntensitySpec spec = base_spec();
  spec.base_log_rate = -30.0;
  spec.seed = 3;
  CHECK(sample_events(spec).empty());
}

TEST_CASE("spatial split: left/right counts follow the binomial thinning ratio") {
  IntensitySpec spec = base_spec();
  spec.base_log_rate = std::log(2e-3);
  spec.bumps.push_back({-10.0, 0.0, 6.0, 1.5});  // mass concentrated left

  // Expected split from the integral of the intensity over each half.
  const double left = bin_integral(spec, -20.0, 0.0, -20.0, 20.0, 0.0, 96.0);
  const double right = bin_integral(spec, 0.0, 20.0, -20.0, 20.0, 0.0, 96.0);
  const double p = left / (left + right);
  CHECK(p > 0.6);  // the bump must actually skew the field

  double n_left = 0.0, n_total = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    spec.seed = 500 + rep;
    const EventSet ev = sample_events(spec);
    n_total += static_cast<double>(ev.size());
    for (const auto& r : ev.records) n_left += r.x < 0.0;
  }
  const double p_hat = n_left / n_total;
  const double sigma = std::sqrt(p * (1.0 - p) / n_total);
  CHECK(std::abs(p_hat - p) <= 3.0 * sigma);
}

TEST_CASE("seed determinism and CSV dog-fooding") {
  IntensitySpec spec = base_spec();
  spec.base_log_rate = std::log(3e-3);
  spec.diurnal_amplitude = 0.8;
  spec.phase = -2.356;
  spec.bumps.push_back({-8.0, -5.0, 9.0, 1.1});
  spec.seed = 11;

  const EventSet a = sample_events(spec);
  const EventSet b = sample_events(spec);
  CHECK(a == b);
  CHECK(a.size() > 100);

  // Emitted CSV re-ingests to the identical event set.
  const std::string path = "/tmp/stgp_synth_roundtrip.csv";
  write_csv(a, path);
  const IngestResult r = ingest_csv(path, CsvSchema{}, a.epoch_seconds);
  CHECK(r.issues.empty());
  CHECK(project_events(r.events, spec.proj) == a);

  // All samples respect the domain and are flagged as emergencies.
  for (const auto& rec : a.records) {
    CHECK(rec.lat > spec.bbox.lat_min);
    CHECK(rec.lat < spec.bbox.lat_max);
    CHECK(rec.t >= spec.t_start);
    CHECK(rec.t < spec.t_end);
    CHECK(rec.emergency);
  }
}

TEST_CASE("thinning correctness: chi-square fit of per-bin counts") {
  IntensitySpec spec = base_spec();
  spec.base_log_rate = std::log(4e-3);
  spec.diurnal_amplitude = 0.8;
  spec.phase = -2.356;
  spec.bumps.push_back({-8.0, -5.0, 9.0, 1.0});
  spec.t_end = 24.0;

  // 4 x 4 x 6 grid over the domain and one day.
  const int reps = 200;
  std::vector<std::vector<int>> histogram(96);  // per bin: counts over reps
  for (auto& h : histogram) h.assign(32, 0);
  for (int rep = 0; rep < reps; ++rep) {
    spec.seed = 9000 + rep;
    const EventSet ev = sample_events(spec);
    std::vector<int> counts(96, 0);
    for (const auto& r : ev.records) {
      const int ix = std::min(3, static_cast<int>((r.x + 20.0) / 10.0));
      const int iy = std::min(3, static_cast<int>((r.y + 20.0) / 10.0));
      const int it = std::min(5, static_cast<int>(r.t / 4.0));
      ++counts[(it * 4 + iy) * 4 + ix];
    }
    for (int b = 0; b < 96; ++b) ++histogram[b][std::min(counts[b], 31)];
  }

  // Pooled chi-square against Poisson(bin integral); categories are merged
  // upward until each expected count reaches 5, the final category holds the
  // whole remaining tail.
  double chi2 = 0.0;
  int dof = 0;
  for (int b = 0; b < 96; ++b) {
    const int ix = b % 4, iy = (b / 4) % 4, it = b / 16;
    const double mu = bin_integral(spec, -20.0 + 10.0 * ix, -10.0 + 10.0 * ix, -20.0 + 10.0 * iy,
                                   -10.0 + 10.0 * iy, 4.0 * it, 4.0 * (it + 1));
    std::vector<double> expected;
    std::vector<int> observed;
    double pmf = std::exp(-mu);
    double mass = 0.0;
    double cum_e = 0.0;
    int cum_o = 0;
    for (int k = 0; k <= 31; ++k) {
      if (k > 0) pmf *= mu / k;
      const double e_k = k == 31 ? reps * (1.0 - mass) : reps * pmf;
      if (k < 31) mass += pmf;
      cum_e += e_k;
      cum_o += histogram[b][k];
      if (cum_e >= 5.0 || k == 31) {
        expected.push_back(cum_e);
        observed.push_back(cum_o);
        cum_e = 0.0;
        cum_o = 0;
      }
    }
    while (expected.size() >= 2 && expected.back() < 5.0) {
      expected[expected.size() - 2] += expected.back();
      observed[observed.size() - 2] += observed.back();
      expected.pop_back();
      observed.pop_back();
    }
    if (expected.size() < 2) continue;  // too sparse for a per-bin test
    for (std::size_t c = 0; c < expected.size(); ++c)
      chi2 += (observed[c] - expected[c]) * (observed[c] - expected[c]) / expected[c];
    dof += static_cast<int>(expected.size()) - 1;
  }
  REQUIRE(dof > 30);
  const double critical = oracles::chi_square_quantile(0.001, dof);
  CHECK(chi2 < critical);
}

TEST_CASE("true_loglik delegates to the likelihood metric") {
  IntensitySpec spec = base_spec();
  spec.base_log_rate = std::log(2e-3);
  spec.seed = 21;
  const EventSet ev = sample_events(spec);

  SpatioTemporalGrid grid;
  grid.x_min = -20.0;
  grid.x_max = 20.0;
  grid.y_min = -20.0;
  grid.y_max = 20.0;
  grid.nx = 4;
  grid.ny = 4;
  grid.t_start = 0.0;
  grid.t_end = 96.0;
  grid.t_bin = 4.0;
  const LandMask mask = LandMask::all_land(4, 4);
  EvalConfig cfg;

  const double a = true_loglik(spec, ev, TimeWindow{0.0, 96.0}, grid, mask, cfg);
  const double b =
      poisson_loglik(intensity_fn(spec), ev, TimeWindow{0.0, 96.0}, grid, mask, cfg);
  CHECK(a == b);
}

TEST_CASE("the true intensity outscores a wrong one on average") {
  IntensitySpec truth = base_spec();
  truth.base_log_rate = std::log(3e-3);
  truth.diurnal_amplitude = 0.8;
  truth.phase = -2.356;
  truth.bumps.push_back({-8.0, -5.0, 9.0, 1.2});

  IntensitySpec wrong = truth;
  wrong.phase = truth.phase + M_PI;          // diurnal cycle inverted
  wrong.bumps[0].cx = 8.0;                   // bump on the wrong side
  wrong.bumps[0].cy = 5.0;

  SpatioTemporalGrid grid;
  grid.x_min = -20.0;
  grid.x_max = 20.0;
  grid.y_min = -20.0;
  grid.y_max = 20.0;
  grid.nx = 4;
  grid.ny = 4;
  grid.t_start = 0.0;
  grid.t_end = 96.0;
  grid.t_bin = 4.0;
  const LandMask mask = LandMask::all_land(4, 4);
  EvalConfig cfg;
  cfg.integration_nx = 30;
  cfg.integration_ny = 30;

  double margin = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    truth.seed = 40000 + rep;
    const EventSet ev = sample_events(truth);
    const TimeWindow w{0.0, 96.0};
    margin += true_loglik(truth, ev, w, grid, mask, cfg) -
              true_loglik(wrong, ev, w, grid, mask, cfg);
  }
  CHECK(margin / 50.0 > 0.0);
}

TEST_CASE("invalid specs are rejected") {
  IntensitySpec spec = base_spec();
  spec.bumps.push_back({0.0, 0.0, -1.0, 1.0});
  CHECK_THROWS_AS(sample_events(spec), DataError);
}
