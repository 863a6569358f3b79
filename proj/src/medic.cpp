#include "stgp/medic.hpp"

#include <cmath>

namespace stgp {

namespace {

constexpr double kHoursPerWeek = 168.0;
constexpr double kWeeksPerYear = 52.0;

}  // namespace

MedicPrediction medic_predict(const BinnedCounts& history, const std::vector<BinQuery>& queries,
                              const MedicConfig& cfg) {
  cfg.validate();
  const SpatioTemporalGrid& grid = history.grid;
  const int n_time = grid.n_time();

  // The deepest possible year stride still reaching into the history.
  int max_years = cfg.years_back;
  if (max_years < 0) {
    const double span_weeks = (grid.t_end - grid.t_start) / kHoursPerWeek;
    max_years = static_cast<int>(std::floor(span_weeks / kWeeksPerYear)) + 1;
  }

  MedicPrediction out;
  out.counts.resize(static_cast<Eigen::Index>(queries.size()));
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const BinQuery& q = queries[qi];
    if (q.ix < 0 || q.ix >= grid.nx || q.iy < 0 || q.iy >= grid.ny)
      throw DataError("query cell outside the grid");
    if (q.t_center < grid.t_end)
      throw LeakageError("query timebin overlaps the history window");

    double total = 0.0;
    int gathered = 0;
    for (int year = 0; year <= max_years; ++year) {
      for (int week = 1; week <= cfg.weeks_back; ++week) {
        const double t_slot =
            q.t_center - year * kWeeksPerYear * kHoursPerWeek - week * kHoursPerWeek;
        const double pos = (t_slot - grid.t_start) / grid.t_bin - 0.5;
        const int it = static_cast<int>(std::llround(pos));
        if (std::abs(pos - it) > 1e-6)
          throw DataError("query timebin is not aligned with the history grid");
        if (it < 0) continue;  // before the history starts: skip
        if (it >= n_time) throw LeakageError("lookback slot reaches past the history window");
        total += history.counts[grid.flat_index(it, q.iy, q.ix)];
        ++gathered;
      }
    }
    if (gathered == 0) {
      out.counts[static_cast<Eigen::Index>(qi)] = 0.0;
      ++out.no_history;
    } else {
      out.counts[static_cast<Eigen::Index>(qi)] = total / gathered;
    }
  }
  return out;
}

}  // namespace stgp
