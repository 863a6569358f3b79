#include "stgp/grid.hpp"

#include <cmath>
#include <cstdio>

namespace stgp {

BoundingBox cape_town_bbox() {
  // Rectangle with lower-left (-34.98, 17.09) and upper-right (-30.16, 24.27).
  return BoundingBox{-34.98, 17.09, -30.16, 24.27};
}

Projection make_projection(const BoundingBox& bbox, double km_per_deg_lat) {
  bbox.validate();
  Projection p;
  p.origin_lat = 0.5 * (bbox.lat_min + bbox.lat_max);
  p.origin_lon = 0.5 * (bbox.lon_min + bbox.lon_max);
  p.km_per_deg_lat = km_per_deg_lat;
  p.km_per_deg_lon = km_per_deg_lat * std::cos(p.origin_lat * M_PI / 180.0);
  p.validate();
  return p;
}

bool SpatioTemporalGrid::locate(double x, double y, double t, int& it, int& iy, int& ix) const {
  if (x < x_min || y < y_min || t < t_start) return false;
  ix = static_cast<int>(std::floor((x - x_min) / cell_dx()));
  iy = static_cast<int>(std::floor((y - y_min) / cell_dy()));
  it = static_cast<int>(std::floor((t - t_start) / t_bin));
  return ix >= 0 && ix < nx && iy >= 0 && iy < ny && it >= 0 && it < n_time();
}

Eigen::MatrixXd SpatioTemporalGrid::bin_centers() const {
  Eigen::MatrixXd out(n_bins(), 3);
  std::int64_t r = 0;
  for (int it = 0; it < n_time(); ++it)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix, ++r) {
        out(r, 0) = x_center(ix);
        out(r, 1) = y_center(iy);
        out(r, 2) = t_center(it);
      }
  return out;
}

Eigen::MatrixXd SpatioTemporalGrid::cell_centers() const {
  Eigen::MatrixXd out(static_cast<std::int64_t>(nx) * ny, 2);
  std::int64_t r = 0;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix, ++r) {
      out(r, 0) = x_center(ix);
      out(r, 1) = y_center(iy);
    }
  return out;
}

void SpatioTemporalGrid::validate() const {
  if (nx <= 0 || ny <= 0) throw DataError("grid needs positive cell counts");
  if (!(x_max > x_min) || !(y_max > y_min)) throw DataError("grid extents must be positive");
  if (!(t_bin > 0.0)) throw DataError("time bin length must be positive");
  if (!(t_end > t_start)) throw DataError("grid time range must be positive");
  const double bins = (t_end - t_start) / t_bin;
  if (std::abs(bins - std::llround(bins)) > 1e-9 * std::max(1.0, bins))
    throw DataError("time bin length must divide the grid time range");
}

SpatioTemporalGrid make_grid(const BoundingBox& bbox, const Projection& proj, int nx, int ny,
                             double t_start, double t_end, double t_bin) {
  bbox.validate();
  proj.validate();
  SpatioTemporalGrid g;
  proj.to_km(bbox.lat_min, bbox.lon_min, g.x_min, g.y_min);
  proj.to_km(bbox.lat_max, bbox.lon_max, g.x_max, g.y_max);
  g.nx = nx;
  g.ny = ny;
  g.t_start = t_start;
  g.t_bin = t_bin;
  const double n = std::ceil((t_end - t_start) / t_bin - 1e-12);
  g.t_end = t_start + std::max(1.0, n) * t_bin;
  g.validate();
  return g;
}

int LandMask::count_land() const {
  int c = 0;
  for (auto v : land) c += v != 0;
  return c;
}

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

namespace {

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

double parse_iso8601_utc(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  char sep = 0;
  int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n == 3) {
    // date only
  } else if (n == 7 && (sep == 'T' || sep == ' ')) {
    // full timestamp; a trailing 'Z' is ignored by sscanf
  } else {
    throw DataError("unparseable ISO-8601 timestamp: '" + text + "'");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0.0 ||
      s >= 61.0)
    throw DataError("ISO-8601 timestamp out of range: '" + text + "'");
  return static_cast<double>(days_from_civil(y, mo, d)) * 86400.0 + h * 3600.0 + mi * 60.0 + s;
}

std::string format_iso8601_utc(double epoch_seconds) {
  // Decompose on a microsecond lattice so rounding cannot spill into :60.
  std::int64_t micros = static_cast<std::int64_t>(std::llround(epoch_seconds * 1e6));
  std::int64_t sec = micros / 1000000;
  std::int64_t frac = micros % 1000000;
  if (frac < 0) {
    frac += 1000000;
    sec -= 1;
  }
  std::int64_t day = sec / 86400;
  std::int64_t rem = sec % 86400;
  if (rem < 0) {
    rem += 86400;
    day -= 1;
  }
  int y, m, d;
  civil_from_days(day, y, m, d);
  const int h = static_cast<int>(rem / 3600);
  const int mi = static_cast<int>((rem / 60) % 60);
  const int s = static_cast<int>(rem % 60);
  char buf[64];
  if (frac == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d, h, mi, s);
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06dZ", y, m, d, h, mi, s,
                  static_cast<int>(frac));
  }
  return buf;
}

}  // namespace stgp
