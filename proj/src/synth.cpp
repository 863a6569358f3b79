#include "stgp/synth.hpp"

#include <cmath>
#include <limits>

#include "stgp/rng.hpp"

namespace stgp {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;
// Event times are multiples of 2^-20 hours (~3.4 ms) so that the hour ->
// epoch-second -> hour conversion through the CSV format is exact.
constexpr double kTimeQuantum = 9.5367431640625e-07;  // 2^-20

double log_intensity(const IntensitySpec& spec, double x, double y, double t) {
  double lg = spec.base_log_rate +
              spec.diurnal_amplitude * std::sin(kTwoPi * t / 24.0 + spec.phase);
  for (const auto& b : spec.bumps) {
    const double dx = x - b.cx;
    const double dy = y - b.cy;
    lg += b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
  }
  return lg;
}

}  // namespace

void IntensitySpec::validate() const {
  bbox.validate();
  proj.validate();
  if (!(t_end > t_start)) throw DataError("intensity spec needs t_end > t_start");
  if (!std::isfinite(base_log_rate) || !std::isfinite(diurnal_amplitude) ||
      !std::isfinite(phase))
    throw NonFiniteInput("intensity spec parameters");
  for (const auto& b : bumps) {
    if (!(b.width > 0.0)) throw DataError("bump width must be positive");
    if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.height))
      throw NonFiniteInput("bump parameters");
  }
}

double intensity(const IntensitySpec& spec, double x_km, double y_km, double t_hours) {
  return std::exp(log_intensity(spec, x_km, y_km, t_hours));
}

RateFn intensity_fn(const IntensitySpec& spec) {
  return [spec](double x, double y, double t) { return intensity(spec, x, y, t); };
}

double intensity_upper_bound(const IntensitySpec& spec) {
  spec.validate();
  double x_min, y_min, x_max, y_max;
  spec.proj.to_km(spec.bbox.lat_min, spec.bbox.lon_min, x_min, y_min);
  spec.proj.to_km(spec.bbox.lat_max, spec.bbox.lon_max, x_max, y_max);

  double max_log = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < 96; ++it) {
    const double t = 24.0 * (it + 0.5) / 96.0;
    // The diurnal term is independent of space: scan it once per time point
    // against the spatial maximum of the bump field.
    const double diurnal = spec.diurnal_amplitude * std::sin(kTwoPi * t / 24.0 + spec.phase);
    max_log = std::max(max_log, diurnal);
  }
  double max_spatial = -std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < 200; ++iy) {
    const double y = y_min + (y_max - y_min) * (iy + 0.5) / 200.0;
    for (int ix = 0; ix < 200; ++ix) {
      const double x = x_min + (x_max - x_min) * (ix + 0.5) / 200.0;
      double g = 0.0;
      for (const auto& b : spec.bumps) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        g += b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
      }
      max_spatial = std::max(max_spatial, g);
    }
  }
  const double bound = 1.05 * std::exp(spec.base_log_rate + max_log + max_spatial);
  if (!std::isfinite(bound) || !(bound > 0.0))
    throw UnboundedIntensity("could not bound the intensity over the domain");
  return bound;
}

EventSet sample_events(const IntensitySpec& spec) {
  spec.validate();
  const double lambda_max = intensity_upper_bound(spec);

  double x_min, y_min, x_max, y_max;
  spec.proj.to_km(spec.bbox.lat_min, spec.bbox.lon_min, x_min, y_min);
  spec.proj.to_km(spec.bbox.lat_max, spec.bbox.lon_max, x_max, y_max);
  const double volume = (x_max - x_min) * (y_max - y_min) * (spec.t_end - spec.t_start);

  Rng rng(spec.seed);
  const std::uint64_t n_candidates = rng.poisson(lambda_max * volume);

  EventSet out;
  out.records.reserve(n_candidates / 2);
  for (std::uint64_t i = 0; i < n_candidates; ++i) {
    CallRecord rec;
    const double xr = rng.uniform(x_min, x_max);
    const double yr = rng.uniform(y_min, y_max);
    double t = rng.uniform(spec.t_start, spec.t_end);
    t = std::round(t / kTimeQuantum) * kTimeQuantum;
    const double u = rng.uniform();

    // Store the point as it survives the lat/lon round trip, then thin at
    // the stored location.
    spec.proj.to_deg(xr, yr, rec.lat, rec.lon);
    spec.proj.to_km(rec.lat, rec.lon, rec.x, rec.y);
    rec.t = t;
    rec.emergency = true;
    if (u * lambda_max < intensity(spec, rec.x, rec.y, rec.t)) out.records.push_back(rec);
  }
  return out;
}

double true_loglik(const IntensitySpec& spec, const EventSet& events, const TimeWindow& window,
                   const SpatioTemporalGrid& grid, const LandMask& mask, const EvalConfig& cfg) {
  return poisson_loglik(intensity_fn(spec), events, window, grid, mask, cfg);
}

}  // namespace stgp
