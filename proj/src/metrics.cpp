#include "stgp/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace stgp {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

// Land lookup for an integration-cell centre: the flag of the containing
// coarse grid cell.
bool on_land(const SpatioTemporalGrid& grid, const LandMask& mask, double x, double y) {
  int ix = static_cast<int>(std::floor((x - grid.x_min) / grid.cell_dx()));
  int iy = static_cast<int>(std::floor((y - grid.y_min) / grid.cell_dy()));
  ix = std::clamp(ix, 0, grid.nx - 1);
  iy = std::clamp(iy, 0, grid.ny - 1);
  return mask.is_land(iy, ix);
}

}  // namespace

double poisson_loglik_event_term(const RateFn& rate, const EventSet& events,
                                 const TimeWindow& window, const SpatioTemporalGrid& grid,
                                 const LandMask& mask, const EvalConfig& cfg) {
  cfg.validate();
  double total = 0.0;
  for (const auto& r : events.records) {
    if (std::isnan(r.x) || std::isnan(r.y))
      throw DataError("poisson_loglik needs projected events");
    if (r.t < window.t_start || r.t >= window.t_end || r.x < grid.x_min || r.x >= grid.x_max ||
        r.y < grid.y_min || r.y >= grid.y_max)
      throw EventOutsideDomain("event at t=" + std::to_string(r.t) + " is outside the window");
    total += std::log(std::max(rate(r.x, r.y, r.t), cfg.rate_floor));
  }
  (void)mask;
  return total;
}

IntegrationLattice integration_lattice(const TimeWindow& window, const SpatioTemporalGrid& grid,
                                       const LandMask& mask, const EvalConfig& cfg) {
  cfg.validate();
  const double dx = (grid.x_max - grid.x_min) / cfg.integration_nx;
  const double dy = (grid.y_max - grid.y_min) / cfg.integration_ny;
  const double span = window.t_end - window.t_start;
  const int n_t = std::max(1, static_cast<int>(std::ceil(span / cfg.integration_t_bin - 1e-12)));

  IntegrationLattice lat;
  lat.cell_area = dx * dy;
  std::vector<Eigen::Vector3d> pts;
  std::vector<double> dts;
  for (int it = 0; it < n_t; ++it) {
    const double t0 = window.t_start + it * cfg.integration_t_bin;
    const double dt = std::min(cfg.integration_t_bin, window.t_end - t0);
    const double tc = t0 + 0.5 * dt;
    for (int iy = 0; iy < cfg.integration_ny; ++iy) {
      const double y = grid.y_min + (iy + 0.5) * dy;
      for (int ix = 0; ix < cfg.integration_nx; ++ix) {
        const double x = grid.x_min + (ix + 0.5) * dx;
        if (!on_land(grid, mask, x, y)) continue;
        pts.emplace_back(x, y, tc);
        dts.push_back(dt);
      }
    }
  }
  lat.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  lat.dt.resize(static_cast<Eigen::Index>(dts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    lat.points.row(static_cast<Eigen::Index>(i)) = pts[i];
    lat.dt[static_cast<Eigen::Index>(i)] = dts[i];
  }
  return lat;
}

double event_term_from_rates(const Eigen::VectorXd& rates, double rate_floor) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < rates.size(); ++i)
    total += std::log(std::max(rates[i], rate_floor));
  return total;
}

double poisson_rate_integral(const RateFn& rate, const TimeWindow& window,
                             const SpatioTemporalGrid& grid, const LandMask& mask,
                             const EvalConfig& cfg) {
  const IntegrationLattice lat = integration_lattice(window, grid, mask, cfg);
  double total = 0.0;
  for (Eigen::Index i = 0; i < lat.points.rows(); ++i)
    total += rate(lat.points(i, 0), lat.points(i, 1), lat.points(i, 2)) * lat.cell_area *
             lat.dt[i];
  return total;
}

double poisson_loglik(const RateFn& rate, const EventSet& events, const TimeWindow& window,
                      const SpatioTemporalGrid& grid, const LandMask& mask,
                      const EvalConfig& cfg) {
  const double event_term = poisson_loglik_event_term(rate, events, window, grid, mask, cfg);
  const double integral = poisson_rate_integral(rate, window, grid, mask, cfg);
  return event_term - integral - log_factorial(static_cast<std::int64_t>(events.size()));
}

double mae_counts(const Eigen::VectorXd& predicted_counts, const BinnedCounts& actual,
                  const LandMask& mask) {
  const SpatioTemporalGrid& grid = actual.grid;
  if (predicted_counts.size() != actual.counts.size())
    throw ShapeMismatch("predicted counts do not match the bin count");
  if (mask.nx != grid.nx || mask.ny != grid.ny)
    throw ShapeMismatch("land mask does not match the grid");
  double total = 0.0;
  std::int64_t n = 0;
  for (int it = 0; it < grid.n_time(); ++it)
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int ix = 0; ix < grid.nx; ++ix) {
        if (!mask.is_land(iy, ix)) continue;
        const std::int64_t b = grid.flat_index(it, iy, ix);
        total += std::abs(predicted_counts[b] - actual.counts[b]);
        ++n;
      }
  if (n == 0) throw DataError("no land bins to score");
  return total / static_cast<double>(n);
}

double mae(const RateField& rate, const BinnedCounts& actual, const LandMask& mask) {
  if (rate.rate.size() != actual.counts.size())
    throw ShapeMismatch("rate field does not match the bin count");
  const double volume = actual.grid.bin_volume();
  return mae_counts(rate.rate * volume, actual, mask);
}

ResidualBreakdown residual_breakdown(const Eigen::VectorXd& predicted_counts,
                                     const BinnedCounts& actual, const LandMask& mask) {
  const SpatioTemporalGrid& grid = actual.grid;
  if (predicted_counts.size() != actual.counts.size())
    throw ShapeMismatch("predicted counts do not match the bin count");

  std::map<int, std::vector<double>> residuals;
  ResidualBreakdown out;
  out.cell_mean = Eigen::MatrixXd::Zero(grid.ny, grid.nx);
  Eigen::MatrixXd cell_n = Eigen::MatrixXd::Zero(grid.ny, grid.nx);
  double sum = 0.0;
  std::int64_t n = 0;
  for (int it = 0; it < grid.n_time(); ++it)
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int ix = 0; ix < grid.nx; ++ix) {
        if (!mask.is_land(iy, ix)) continue;
        const std::int64_t b = grid.flat_index(it, iy, ix);
        const double r = predicted_counts[b] - actual.counts[b];
        residuals[actual.counts[b]].push_back(r);
        out.cell_mean(iy, ix) += r;
        cell_n(iy, ix) += 1.0;
        sum += r;
        ++n;
      }
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix)
      if (cell_n(iy, ix) > 0.0) out.cell_mean(iy, ix) /= cell_n(iy, ix);
  out.overall_mean = n > 0 ? sum / static_cast<double>(n) : 0.0;

  for (auto& [count, values] : residuals) {
    std::sort(values.begin(), values.end());
    ResidualGroup g;
    g.observed = count;
    g.n = static_cast<std::int64_t>(values.size());
    g.mean = 0.0;
    for (double v : values) g.mean += v;
    g.mean /= static_cast<double>(values.size());
    g.q10 = quantile_sorted(values, 0.10);
    g.q25 = quantile_sorted(values, 0.25);
    g.q50 = quantile_sorted(values, 0.50);
    g.q75 = quantile_sorted(values, 0.75);
    g.q90 = quantile_sorted(values, 0.90);
    out.by_count[count] = g;
  }
  return out;
}

FoldScore score_fold(const FoldInput& fold, const LandMask& mask, const EvalConfig& cfg) {
  FoldScore s;
  s.fold_start = fold.window.t_start;
  s.fold_end = fold.window.t_end;
  s.n_events = static_cast<std::int64_t>(fold.events.size());
  s.mae = mae_counts(fold.predicted_counts, fold.actual, mask);
  const SpatioTemporalGrid& grid = fold.actual.grid;
  s.n_bins = static_cast<std::int64_t>(grid.n_time()) * mask.count_land();
  s.event_term =
      poisson_loglik_event_term(fold.rate, fold.events, fold.window, grid, mask, cfg);
  s.integral = poisson_rate_integral(fold.rate, fold.window, grid, mask, cfg);
  s.loglik = s.event_term - s.integral - log_factorial(s.n_events);
  return s;
}

std::vector<FoldScore> weekly_scores(const std::vector<FoldInput>& folds, const LandMask& mask,
                                     const EvalConfig& cfg) {
  std::vector<FoldScore> out;
  out.reserve(folds.size());
  for (const auto& f : folds) out.push_back(score_fold(f, mask, cfg));
  return out;
}

double aggregate_mae(const std::vector<FoldScore>& folds) {
  double total = 0.0;
  std::int64_t n = 0;
  for (const auto& f : folds) {
    total += f.mae * static_cast<double>(f.n_bins);
    n += f.n_bins;
  }
  if (n == 0) throw DataError("no bins scored");
  return total / static_cast<double>(n);
}

double aggregate_loglik(const std::vector<FoldScore>& folds) {
  double event_term = 0.0, integral = 0.0;
  std::int64_t k = 0;
  for (const auto& f : folds) {
    event_term += f.event_term;
    integral += f.integral;
    k += f.n_events;
  }
  return event_term - integral - log_factorial(k);
}

}  // namespace stgp
