#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "stgp/grid.hpp"

namespace stgp {

// One call-out. Time is in hours since the configured epoch; x/y are filled
// by project_events and are NaN until then.
struct CallRecord {
  double t = 0.0;    // hours since epoch
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  double x = std::numeric_limits<double>::quiet_NaN();  // km east of origin
  double y = std::numeric_limits<double>::quiet_NaN();  // km north of origin
  bool emergency = true;

  // Unprojected records compare equal on their NaN coordinates.
  bool operator==(const CallRecord& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return t == o.t && lat == o.lat && lon == o.lon && same(x, o.x) && same(y, o.y) &&
           emergency == o.emergency;
  }
};

struct EventSet {
  std::vector<CallRecord> records;
  double epoch_seconds = 0.0;  // Unix epoch offset of t = 0

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  bool operator==(const EventSet&) const = default;
};

// Column names in the input CSV; the timestamp may be ISO-8601 UTC or
// (fractional) epoch seconds. The emergency column is optional: when absent
// every event counts as an emergency.
struct CsvSchema {
  std::string timestamp_col = "timestamp";
  std::string lat_col = "lat";
  std::string lon_col = "lon";
  std::string emergency_col = "emergency";
};

struct RowIssue {
  std::size_t row = 0;  // 1-based data row index (header excluded)
  std::string reason;
};

struct IngestResult {
  EventSet events;
  std::vector<RowIssue> issues;
};

// Reads a CSV of call records. Malformed rows are collected in `issues`
// rather than aborting the ingest; an unreadable file throws IoError and a
// file with zero valid rows throws EmptyInput.
IngestResult ingest_csv(const std::string& path, const CsvSchema& schema, double epoch_seconds);

// Writes the canonical CSV format (timestamp as fractional epoch seconds).
void write_csv(const EventSet& events, const std::string& path);

// Keeps events strictly inside the box (boundary points are dropped) and,
// when emergencies_only is set, only emergency records. Order preserved.
EventSet filter_events(const EventSet& events, const BoundingBox& bbox, bool emergencies_only);

// Fills x/y via the projection. Inverse of Projection::to_deg to < 1e-9 km.
EventSet project_events(const EventSet& events, const Projection& proj);

// Per-bin event counts on a space-time grid.
struct BinnedCounts {
  SpatioTemporalGrid grid;
  Eigen::VectorXi counts;          // flat (t, y, x) order, see grid.flat_index
  std::int64_t dropped = 0;        // events outside the grid extent

  std::int64_t total() const { return counts.cast<std::int64_t>().sum(); }
};

// Counts projected events into grid bins; membership is half-open [low, high)
// on every axis, so an event on an interior edge lands in the higher cell.
BinnedCounts bin_events(const EventSet& events, const SpatioTemporalGrid& grid);

// Loads a 0/1 text raster (one row per grid row, row 0 southernmost). A
// missing file yields an all-land mask and a notice on stderr.
LandMask load_land_mask(const std::string& path, const SpatioTemporalGrid& grid);

}  // namespace stgp
