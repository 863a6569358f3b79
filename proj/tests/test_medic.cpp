#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stgp/medic.hpp"
#include "stgp/rng.hpp"

using namespace stgp;

namespace {

// History grid: one spatial column when nx = ny = 1 keeps the arithmetic
// visible; wider grids exercise the cell indexing.
BinnedCounts history_grid(int nx, int ny, int weeks, std::uint64_t seed, double mean = 0.8) {
  SpatioTemporalGrid g;
  g.x_min = 0.0;
  g.x_max = nx * 6.7;
  g.y_min = 0.0;
  g.y_max = ny * 6.7;
  g.nx = nx;
  g.ny = ny;
  g.t_start = 0.0;
  g.t_bin = 4.0;
  g.t_end = weeks * 168.0;
  BinnedCounts b;
  b.grid = g;
  b.counts.resize(g.n_bins());
  Rng rng(seed);
  for (Eigen::Index i = 0; i < b.counts.size(); ++i)
    b.counts[i] = static_cast<int>(rng.poisson(mean));
  return b;
}

}  // namespace

TEST_CASE("hand average over the four previous weeks") {
  BinnedCounts h = history_grid(1, 1, 5, 0, 0.0);
  h.counts.setZero();
  const auto& g = h.grid;
  // First test bin starts at t = 840 h; its same-timebin slots sit one to
  // four weeks earlier.
  const double t_q = 840.0 + 2.0;
  const int counts[4] = {2, 0, 1, 1};
  for (int w = 1; w <= 4; ++w) {
    const double slot = t_q - w * 168.0;
    const int it = static_cast<int>(std::floor((slot - g.t_start) / g.t_bin));
    h.counts[g.flat_index(it, 0, 0)] = counts[w - 1];
  }
  MedicConfig cfg;
  cfg.years_back = 0;
  const MedicPrediction p = medic_predict(h, {{0, 0, t_q}}, cfg);
  CHECK(p.counts[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.no_history == 0);
}

TEST_CASE("all-zero history predicts zero") {
  BinnedCounts h = history_grid(2, 2, 6, 0, 0.0);
  const MedicPrediction p = medic_predict(h, {{1, 1, 6 * 168.0 + 2.0}}, MedicConfig{});
  CHECK(p.counts[0] == 0.0);
}

TEST_CASE("brute-force gather-and-average oracle on random cases") {
  const BinnedCounts h = history_grid(4, 3, 120, 99);  // ~2.3 years
  MedicConfig cfg;
  cfg.weeks_back = 4;
  cfg.years_back = 5;

  Rng rng(7);
  std::vector<BinQuery> queries;
  for (int i = 0; i < 300; ++i) {
    BinQuery q;
    q.ix = static_cast<int>(rng.below(4));
    q.iy = static_cast<int>(rng.below(3));
    const int it = static_cast<int>(rng.below(42));  // one week of test bins
    q.t_center = h.grid.t_end + it * 4.0 + 2.0;
    queries.push_back(q);
  }
  const MedicPrediction p = medic_predict(h, queries, cfg);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const double want = oracles::brute_force_medic(h, q.ix, q.iy, q.t_center, 4, 5);
    CHECK(p.counts[static_cast<Eigen::Index>(i)] == want);  // exactly
  }
}

TEST_CASE("quantization: predictions are multiples of 1/G") {
  const BinnedCounts h = history_grid(2, 2, 60, 5);  // > 1 year
  MedicConfig cfg;
  cfg.weeks_back = 4;
  cfg.years_back = 5;
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    BinQuery q;
    q.ix = static_cast<int>(rng.below(2));
    q.iy = static_cast<int>(rng.below(2));
    q.t_center = h.grid.t_end + static_cast<double>(rng.below(42)) * 4.0 + 2.0;
    int gathered = 0;
    const double want =
        oracles::brute_force_medic(h, q.ix, q.iy, q.t_center, 4, 5, &gathered);
    REQUIRE(gathered > 0);
    const MedicPrediction p = medic_predict(h, {q}, cfg);
    const double scaled = p.counts[0] * gathered;
    CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
    CHECK(p.counts[0] == want);
    CHECK(p.counts[0] >= 0.0);
  }
}

TEST_CASE("shifting history counts by +c shifts full-history predictions by +c") {
  BinnedCounts h = history_grid(1, 1, 10, 3);
  MedicConfig cfg;
  cfg.years_back = 0;
  const double t_q = h.grid.t_end + 2.0;
  const MedicPrediction before = medic_predict(h, {{0, 0, t_q}}, cfg);
  h.counts.array() += 5;
  const MedicPrediction after = medic_predict(h, {{0, 0, t_q}}, cfg);
  CHECK(after.counts[0] == before.counts[0] + 5.0);
}

TEST_CASE("leakage detection") {
  const BinnedCounts h = history_grid(1, 1, 6, 4);
  // Query inside the history window.
  CHECK_THROWS_AS(medic_predict(h, {{0, 0, 500.0}}, MedicConfig{}), LeakageError);
  // Query so far past the history that the one-week lookback lands in the
  // test period.
  CHECK_THROWS_AS(medic_predict(h, {{0, 0, h.grid.t_end + 170.0}}, MedicConfig{}),
                  LeakageError);
}

TEST_CASE("no gatherable history increments the counter") {
  BinnedCounts h = history_grid(1, 1, 6, 4);
  // Truncate the history to half a week so one-week lookbacks miss it.
  h.grid.t_end = 84.0;
  h.counts = h.counts.head(static_cast<Eigen::Index>(21));
  MedicConfig cfg;
  cfg.years_back = 0;
  const MedicPrediction p = medic_predict(h, {{0, 0, 84.0 + 2.0}}, cfg);
  CHECK(p.counts[0] == 0.0);
  CHECK(p.no_history == 1);
}

TEST_CASE("misaligned query bins are rejected") {
  const BinnedCounts h = history_grid(1, 1, 6, 4);
  CHECK_THROWS_AS(medic_predict(h, {{0, 0, h.grid.t_end + 1.0}}, MedicConfig{}), DataError);
}
