#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stgp/errors.hpp"

namespace stgp {

// Axis-aligned geographic rectangle in degrees.
struct BoundingBox {
  double lat_min = 0.0;
  double lon_min = 0.0;
  double lat_max = 0.0;
  double lon_max = 0.0;

  void validate() const {
    if (!(lat_min < lat_max) || !(lon_min < lon_max))
      throw DataError("bounding box must have lat_min < lat_max and lon_min < lon_max");
  }
};

// Geographic limits used throughout as the default study region preset.
BoundingBox cape_town_bbox();

// Local equirectangular projection: x east, y north, in km from the origin.
struct Projection {
  double origin_lat = 0.0;
  double origin_lon = 0.0;
  double km_per_deg_lat = 111.19;
  double km_per_deg_lon = 111.19;

  void validate() const {
    if (!(km_per_deg_lat > 0.0) || !(km_per_deg_lon > 0.0))
      throw DataError("projection scale factors must be positive");
  }

  void to_km(double lat, double lon, double& x, double& y) const {
    x = (lon - origin_lon) * km_per_deg_lon;
    y = (lat - origin_lat) * km_per_deg_lat;
  }

  void to_deg(double x, double y, double& lat, double& lon) const {
    lon = origin_lon + x / km_per_deg_lon;
    lat = origin_lat + y / km_per_deg_lat;
  }
};

// Projection centred on the box centroid, with the east-west scale shrunk by
// cos(origin latitude).
Projection make_projection(const BoundingBox& bbox, double km_per_deg_lat = 111.19);

// Regular space-time lattice. Spatial extents are in projected km, time in
// hours. Cell membership is half-open [low, high) on every axis.
struct SpatioTemporalGrid {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  int nx = 0, ny = 0;
  double t_start = 0.0, t_end = 0.0;
  double t_bin = 0.0;

  int n_time() const { return static_cast<int>(std::llround((t_end - t_start) / t_bin)); }
  int n_space() const { return nx * ny; }
  std::int64_t n_bins() const { return static_cast<std::int64_t>(n_time()) * n_space(); }

  double cell_dx() const { return (x_max - x_min) / nx; }
  double cell_dy() const { return (y_max - y_min) / ny; }
  double cell_area() const { return cell_dx() * cell_dy(); }
  // Volume A*tau of one space-time bin, km^2 * hour.
  double bin_volume() const { return cell_area() * t_bin; }

  std::int64_t flat_index(int it, int iy, int ix) const {
    return (static_cast<std::int64_t>(it) * ny + iy) * nx + ix;
  }

  bool locate(double x, double y, double t, int& it, int& iy, int& ix) const;

  double x_center(int ix) const { return x_min + (ix + 0.5) * cell_dx(); }
  double y_center(int iy) const { return y_min + (iy + 0.5) * cell_dy(); }
  double t_center(int it) const { return t_start + (it + 0.5) * t_bin; }

  // All bin centres as rows (x, y, t), one row per flat index.
  Eigen::MatrixXd bin_centers() const;
  // Spatial cell centres only, ny*nx rows of (x, y).
  Eigen::MatrixXd cell_centers() const;

  void validate() const;
};

// Build a grid over the projected bbox. The end of the time range is pushed
// out to the next whole bin so t_bin always divides (t_end - t_start).
SpatioTemporalGrid make_grid(const BoundingBox& bbox, const Projection& proj, int nx, int ny,
                             double t_start, double t_end, double t_bin);

// True where a spatial cell covers any land. Cells flagged false are dropped
// from MAE and from the spatial part of the likelihood integral.
struct LandMask {
  int nx = 0, ny = 0;
  std::vector<std::uint8_t> land;  // row-major, row 0 southernmost

  static LandMask all_land(int nx, int ny) {
    LandMask m;
    m.nx = nx;
    m.ny = ny;
    m.land.assign(static_cast<std::size_t>(nx) * ny, 1);
    return m;
  }

  bool is_land(int iy, int ix) const {
    return land[static_cast<std::size_t>(iy) * nx + ix] != 0;
  }

  int count_land() const;
};

// Calendar helpers (ISO-8601, UTC only).
std::int64_t days_from_civil(int y, int m, int d);
// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.frac][Z]" (space separator also
// allowed); returns seconds since the Unix epoch.
double parse_iso8601_utc(const std::string& text);
std::string format_iso8601_utc(double epoch_seconds);

}  // namespace stgp
