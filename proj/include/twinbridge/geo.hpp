#pragma once

// Geodetic to scene-coordinate conversion and adaptive level of detail.
//
// Axis convention (used everywhere in this library): scene x points east,
// y points up, z points north. Angles are radians unless a name says
// otherwise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace twinbridge::geo {

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct GeoPoint {
  double latitude = 0.0;   // radians, |lat| <= pi/2
  double longitude = 0.0;  // radians, |lon| <= pi
  double altitude = 0.0;   // meters

  static GeoPoint from_degrees(double lat_deg, double lon_deg, double alt_m = 0.0) {
    return {deg_to_rad(lat_deg), deg_to_rad(lon_deg), alt_m};
  }

  bool valid() const {
    return std::isfinite(latitude) && std::isfinite(longitude) && std::isfinite(altitude) &&
           std::abs(latitude) <= kPi / 2 && std::abs(longitude) <= kPi;
  }
};

struct LocalOffset {
  double east = 0.0;   // meters
  double up = 0.0;     // meters
  double north = 0.0;  // meters
};

struct SceneCoord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct EarthModel {
  double radius = 6371000.0;          // meters
  double area_threshold = 1.0e6;      // m^2; above this, great-circle distances are used

  void validate() const {
    if (!(radius > 0.0) || !(area_threshold > 0.0)) {
      throw std::invalid_argument("EarthModel: radius and area_threshold must be positive");
    }
  }
};

// Longitude difference wrapped to (-pi, pi].
inline double wrap_longitude_delta(double dlon) {
  double w = std::remainder(dlon, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

// Great-circle distance on a sphere (haversine form, atan2 evaluation).
inline double haversine_distance(const GeoPoint& a, const GeoPoint& b,
                                 const EarthModel& earth = {}) {
  const double dlat = b.latitude - a.latitude;
  const double dlon = b.longitude - a.longitude;
  const double s_lat = std::sin(dlat / 2.0);
  const double s_lon = std::sin(dlon / 2.0);
  double h = s_lat * s_lat + std::cos(a.latitude) * std::cos(b.latitude) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return earth.radius * 2.0 * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

// Flat-earth offset of `target` from `ref`. East uses cos(lat_ref), so the
// result is only meaningful for small separations.
inline LocalOffset tangent_plane_offset(const GeoPoint& ref, const GeoPoint& target,
                                        const EarthModel& earth = {}) {
  const double dlon = wrap_longitude_delta(target.longitude - ref.longitude);
  const double dlat = target.latitude - ref.latitude;
  return {earth.radius * std::cos(ref.latitude) * dlon, target.altitude - ref.altitude,
          earth.radius * dlat};
}

enum class ConversionMethod { Haversine, TangentPlane };

inline ConversionMethod select_method(double extent_m2, const EarthModel& earth = {}) {
  return extent_m2 > earth.area_threshold ? ConversionMethod::Haversine
                                          : ConversionMethod::TangentPlane;
}

// Signed east/north offsets measured along great circles from the
// reference, one axis at a time. The sign follows the direction of the
// target relative to the reference.
inline LocalOffset haversine_offset(const GeoPoint& ref, const GeoPoint& target,
                                    const EarthModel& earth = {}) {
  double east = haversine_distance(ref, {ref.latitude, target.longitude, 0.0}, earth);
  double north = haversine_distance(ref, {target.latitude, ref.longitude, 0.0}, earth);
  if (wrap_longitude_delta(target.longitude - ref.longitude) < 0.0) east = -east;
  if (target.latitude < ref.latitude) north = -north;
  return {east, target.altitude - ref.altitude, north};
}

inline LocalOffset local_offset(const GeoPoint& ref, const GeoPoint& target,
                                ConversionMethod method, const EarthModel& earth = {}) {
  return method == ConversionMethod::Haversine ? haversine_offset(ref, target, earth)
                                               : tangent_plane_offset(ref, target, earth);
}

inline SceneCoord scale_offset(const LocalOffset& d, double scale) {
  return {scale * d.east, scale * d.up, scale * d.north};
}

// Converts a geodetic target to scene coordinates relative to `ref`.
// `extent_m2` is the operating area, which picks the distance method.
inline SceneCoord gps_to_scene(const GeoPoint& ref, const GeoPoint& target, double scale,
                               const EarthModel& earth, double extent_m2) {
  if (!(scale > 0.0)) throw std::invalid_argument("gps_to_scene: scale must be positive");
  return scale_offset(local_offset(ref, target, select_method(extent_m2, earth), earth), scale);
}

// Inverse of gps_to_scene in the tangent-plane regime.
inline GeoPoint scene_to_gps(const GeoPoint& ref, const SceneCoord& u, double scale,
                             const EarthModel& earth = {}) {
  if (!(scale > 0.0)) throw std::invalid_argument("scene_to_gps: scale must be positive");
  GeoPoint p;
  p.latitude = ref.latitude + u.z / (scale * earth.radius);
  p.longitude = wrap_longitude_delta(ref.longitude + u.x / (scale * earth.radius * std::cos(ref.latitude)));
  p.altitude = ref.altitude + u.y / scale;
  return p;
}

// ---------------------------------------------------------------------------
// Level of detail

enum class LodLevel : unsigned char { Low = 0, Medium = 1, High = 2 };

struct CellIndex {
  int x = 0;
  int y = 0;
  int z = 0;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

class LodGrid {
 public:
  LodGrid() = default;
  LodGrid(int nx, int ny, int nz, double cell_size, double proximity_threshold)
      : nx_(nx), ny_(ny), nz_(nz), cell_size_(cell_size),
        proximity_threshold_(proximity_threshold) {
    if (nx < 0 || ny < 0 || nz < 0) throw std::invalid_argument("LodGrid: negative dimension");
    if (!(cell_size > 0.0)) throw std::invalid_argument("LodGrid: cell size must be positive");
    if (!(proximity_threshold >= 0.0)) {
      throw std::invalid_argument("LodGrid: proximity threshold must be non-negative");
    }
    cells_.assign(static_cast<std::size_t>(nx) * ny * nz, LodLevel::Low);
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  double cell_size() const { return cell_size_; }
  double proximity_threshold() const { return proximity_threshold_; }

  bool contains(const CellIndex& c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < nx_ && c.y < ny_ && c.z < nz_;
  }

  void add_critical(const CellIndex& c) {
    if (!contains(c)) throw std::out_of_range("LodGrid: critical cell outside grid");
    critical_.insert(c);
  }
  const std::set<CellIndex>& critical_regions() const { return critical_; }

  LodLevel at(const CellIndex& c) const { return cells_.at(linear(c)); }
  LodLevel& at(const CellIndex& c) { return cells_.at(linear(c)); }
  const std::vector<LodLevel>& cells() const { return cells_; }

 private:
  std::size_t linear(const CellIndex& c) const {
    if (!contains(c)) throw std::out_of_range("LodGrid: cell outside grid");
    return (static_cast<std::size_t>(c.z) * ny_ + c.y) * nx_ + c.x;
  }

  int nx_ = 0, ny_ = 0, nz_ = 0;
  double cell_size_ = 1.0;
  double proximity_threshold_ = 0.0;
  std::vector<LodLevel> cells_;
  std::set<CellIndex> critical_;
};

// Critical cells get High, cells whose center lies strictly closer than the
// proximity threshold to some critical cell center get Medium, the rest Low.
inline LodGrid assign_lod(LodGrid grid) {
  if (grid.empty()) return grid;
  for (int z = 0; z < grid.nz(); ++z)
    for (int y = 0; y < grid.ny(); ++y)
      for (int x = 0; x < grid.nx(); ++x) grid.at({x, y, z}) = LodLevel::Low;

  // Only cells inside the threshold sphere around each critical cell can
  // become Medium, so scan that bounding box instead of the whole grid.
  const double threshold_cells = grid.proximity_threshold() / grid.cell_size();
  const int reach = static_cast<int>(std::ceil(threshold_cells));
  const double limit2 = grid.proximity_threshold() * grid.proximity_threshold();
  for (const CellIndex& c : grid.critical_regions()) {
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const CellIndex n{c.x + dx, c.y + dy, c.z + dz};
          if (!grid.contains(n)) continue;
          const double d2 = grid.cell_size() * grid.cell_size() *
                            static_cast<double>(dx * dx + dy * dy + dz * dz);
          if (d2 < limit2 && grid.at(n) == LodLevel::Low) grid.at(n) = LodLevel::Medium;
        }
  }
  for (const CellIndex& c : grid.critical_regions()) grid.at(c) = LodLevel::High;
  return grid;
}

}  // namespace twinbridge::geo
