#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stgp/events.hpp"

namespace stgp {

// Industry baseline: a bin's prediction is the average of the counts seen in
// the same timebin of the previous weeks, and of those weeks one or more
// years back. Missing lookback slots are skipped, not zero-filled.
struct MedicConfig {
  int weeks_back = 4;
  int years_back = -1;  // -1: as many 52-week strides as the history covers
  double t_bin = 4.0;   // hours

  void validate() const {
    if (weeks_back < 1) throw DataError("weeks_back must be at least 1");
  }
};

struct BinQuery {
  int ix = 0;
  int iy = 0;
  double t_center = 0.0;  // hours, same clock as the history grid
};

struct MedicPrediction {
  Eigen::VectorXd counts;  // one predicted count per query
  int no_history = 0;      // queries with zero gatherable values
};

// History must strictly precede every query; a lookback slot that lands at
// or past the end of the history window raises LeakageError.
MedicPrediction medic_predict(const BinnedCounts& history, const std::vector<BinQuery>& queries,
                              const MedicConfig& cfg);

}  // namespace stgp
