#include "stgp/events.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace stgp {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trimmed(s);
  if (t.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(t.c_str(), &end);
  return errno == 0 && end == t.c_str() + t.size();
}

// ISO-8601 if it contains a '-' past position 0, else epoch seconds.
bool parse_timestamp(const std::string& s, double& epoch_sec) {
  const std::string t = trimmed(s);
  if (t.find('-', 1) != std::string::npos && t.find(':') != std::string::npos) {
    epoch_sec = parse_iso8601_utc(t);
    return true;
  }
  if (t.find('-', 1) != std::string::npos && t.size() == 10) {
    epoch_sec = parse_iso8601_utc(t);
    return true;
  }
  return parse_double(t, epoch_sec);
}

}  // namespace

IngestResult ingest_csv(const std::string& path, const CsvSchema& schema, double epoch_seconds) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw EmptyInput("'" + path + "' has no header row");

  const auto header = split_csv_line(line);
  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trimmed(header[i]) == name) return static_cast<int>(i);
    return -1;
  };
  const int c_ts = find_col(schema.timestamp_col);
  const int c_lat = find_col(schema.lat_col);
  const int c_lon = find_col(schema.lon_col);
  const int c_emg = find_col(schema.emergency_col);
  if (c_ts < 0 || c_lat < 0 || c_lon < 0)
    throw DataError("'" + path + "' is missing required columns (" + schema.timestamp_col + ", " +
                    schema.lat_col + ", " + schema.lon_col + ")");

  IngestResult result;
  result.events.epoch_seconds = epoch_seconds;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trimmed(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const int needed = std::max({c_ts, c_lat, c_lon, c_emg});
    if (static_cast<int>(fields.size()) <= needed) {
      result.issues.push_back({row, "too few fields"});
      continue;
    }
    CallRecord rec;
    double ts;
    bool ok = true;
    std::string reason;
    try {
      if (!parse_timestamp(fields[c_ts], ts)) {
        ok = false;
        reason = "bad timestamp '" + fields[c_ts] + "'";
      }
    } catch (const DataError& e) {
      ok = false;
      reason = e.what();
    }
    if (ok && !parse_double(fields[c_lat], rec.lat)) {
      ok = false;
      reason = "bad latitude '" + fields[c_lat] + "'";
    }
    if (ok && !parse_double(fields[c_lon], rec.lon)) {
      ok = false;
      reason = "bad longitude '" + fields[c_lon] + "'";
    }
    if (ok && (rec.lat < -90.0 || rec.lat > 90.0 || rec.lon < -180.0 || rec.lon > 180.0)) {
      ok = false;
      reason = "coordinates out of range";
    }
    if (ok && c_emg >= 0) {
      const std::string e = trimmed(fields[c_emg]);
      if (e == "0" || e == "false") {
        rec.emergency = false;
      } else if (e == "1" || e == "true" || e.empty()) {
        rec.emergency = true;
      } else {
        ok = false;
        reason = "bad emergency flag '" + e + "'";
      }
    }
    if (ok) {
      rec.t = (ts - epoch_seconds) / 3600.0;
      if (!std::isfinite(rec.t)) {
        ok = false;
        reason = "non-finite timestamp";
      }
    }
    if (!ok) {
      result.issues.push_back({row, reason});
      continue;
    }
    result.events.records.push_back(rec);
  }
  if (result.events.empty()) throw EmptyInput("'" + path + "' contains no valid rows");
  return result;
}

void write_csv(const EventSet& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "timestamp,lat,lon,emergency\n";
  char buf[128];
  for (const auto& r : events.records) {
    const double ts = r.t * 3600.0 + events.epoch_seconds;
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d\n", ts, r.lat, r.lon,
                  r.emergency ? 1 : 0);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

EventSet filter_events(const EventSet& events, const BoundingBox& bbox, bool emergencies_only) {
  bbox.validate();
  EventSet out;
  out.epoch_seconds = events.epoch_seconds;
  for (const auto& r : events.records) {
    if (!(r.lat > bbox.lat_min && r.lat < bbox.lat_max && r.lon > bbox.lon_min &&
          r.lon < bbox.lon_max))
      continue;
    if (emergencies_only && !r.emergency) continue;
    out.records.push_back(r);
  }
  return out;
}

EventSet project_events(const EventSet& events, const Projection& proj) {
  proj.validate();
  EventSet out = events;
  for (auto& r : out.records) proj.to_km(r.lat, r.lon, r.x, r.y);
  return out;
}

BinnedCounts bin_events(const EventSet& events, const SpatioTemporalGrid& grid) {
  grid.validate();
  BinnedCounts out;
  out.grid = grid;
  out.counts = Eigen::VectorXi::Zero(grid.n_bins());
  for (const auto& r : events.records) {
    if (std::isnan(r.x) || std::isnan(r.y)) throw DataError("bin_events needs projected events");
    int it, iy, ix;
    if (grid.locate(r.x, r.y, r.t, it, iy, ix)) {
      out.counts[grid.flat_index(it, iy, ix)] += 1;
    } else {
      ++out.dropped;
    }
  }
  return out;
}

LandMask load_land_mask(const std::string& path, const SpatioTemporalGrid& grid) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "note: land mask '" << path << "' not found, treating all cells as land\n";
    return LandMask::all_land(grid.nx, grid.ny);
  }
  LandMask mask;
  mask.nx = grid.nx;
  mask.ny = grid.ny;
  mask.land.assign(static_cast<std::size_t>(grid.nx) * grid.ny, 0);
  std::string line;
  int iy = 0;
  while (std::getline(in, line)) {
    if (trimmed(line).empty()) continue;
    if (iy >= grid.ny) throw ShapeMismatch("land mask has more rows than the grid");
    std::istringstream ss(line);
    int v, ix = 0;
    while (ss >> v) {
      if (ix >= grid.nx) throw ShapeMismatch("land mask row has more cells than the grid");
      mask.land[static_cast<std::size_t>(iy) * grid.nx + ix] = v != 0;
      ++ix;
    }
    if (ix != grid.nx) throw ShapeMismatch("land mask row has too few cells");
    ++iy;
  }
  if (iy != grid.ny) throw ShapeMismatch("land mask has too few rows");
  return mask;
}

}  // namespace stgp
