#pragma once

#include <cstdint>
#include <vector>

#include "stgp/events.hpp"
#include "stgp/metrics.hpp"

namespace stgp {

struct SpatialBump {
  double cx = 0.0;      // km, projected
  double cy = 0.0;      // km
  double width = 1.0;   // km
  double height = 0.0;  // added to the log rate at the bump centre
};

// Closed-form ground-truth intensity, km^-2 hour^-1:
//   lambda(s, t) = exp(a + b sin(2 pi t / 24 + phase) + sum of Gaussian bumps)
struct IntensitySpec {
  double base_log_rate = 0.0;     // a
  double diurnal_amplitude = 0.0; // b
  double phase = 0.0;
  std::vector<SpatialBump> bumps;
  BoundingBox bbox;  // degrees; events are sampled over its projection
  Projection proj;
  double t_start = 0.0;  // hours
  double t_end = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

double intensity(const IntensitySpec& spec, double x_km, double y_km, double t_hours);
RateFn intensity_fn(const IntensitySpec& spec);

// Upper bound on the intensity over the domain: dense grid search over a
// 200x200 spatial lattice and 96 points of the 24 h cycle, times 1.05.
double intensity_upper_bound(const IntensitySpec& spec);

// Thinning sampler: homogeneous Poisson(lambda_max) candidates over the
// space-time volume, kept with probability lambda/lambda_max. Event times are
// snapped to a 2^-20 hour lattice so the CSV round trip is exact.
EventSet sample_events(const IntensitySpec& spec);

// The likelihood score an oracle that knows the true intensity would get;
// unbeatable in expectation.
double true_loglik(const IntensitySpec& spec, const EventSet& events, const TimeWindow& window,
                   const SpatioTemporalGrid& grid, const LandMask& mask, const EvalConfig& cfg);

}  // namespace stgp
