#pragma once

// 3D point cloud to 2D range scan: per azimuth bin, the nearest return
// inside a height band. Plus obstacle flagging and the packed payload
// formats used for bandwidth comparisons.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twinbridge/envelope.hpp"

namespace twinbridge::lidar {

struct PolarPoint {
  double r = 0.0;      // m
  double theta = 0.0;  // rad, azimuth
  double z = 0.0;      // m
};

inline double wrap_azimuth(double theta) {
  if (theta >= -std::numbers::pi && theta < std::numbers::pi) return theta;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  return w >= std::numbers::pi ? -std::numbers::pi : w;
}

struct PointCloud3D {
  std::vector<PolarPoint> points;

  void add_cartesian(double x, double y, double z) {
    points.push_back({std::hypot(x, y), wrap_azimuth(std::atan2(y, x)), z});
  }

  void validate() const {
    for (const auto& p : points)
      if (!(p.r >= 0.0) || !std::isfinite(p.r) || !std::isfinite(p.theta) || !std::isfinite(p.z))
        throw std::invalid_argument("PointCloud3D: ranges must be finite and >= 0");
  }
};

struct ZBand {
  double lo = -0.2;
  double hi = 1.0;
};

inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();

struct Scan2D {
  std::vector<double> ranges;  // kNoReturn where nothing was seen
  double obstacle_threshold = 0.5;

  std::size_t bins() const { return ranges.size(); }
  bool has_return(std::size_t i) const { return ranges[i] != kNoReturn; }

  double bin_width() const { return 2.0 * std::numbers::pi / static_cast<double>(ranges.size()); }
  double bin_center(std::size_t i) const { return -std::numbers::pi + (static_cast<double>(i) + 0.5) * bin_width(); }

  friend bool operator==(const Scan2D&, const Scan2D&) = default;
};

// Bin i covers [-pi + i w, -pi + (i+1) w).
inline std::size_t bin_index(double theta, std::size_t n_bins) {
  const double u = (wrap_azimuth(theta) + std::numbers::pi) / (2.0 * std::numbers::pi);
  const auto i = static_cast<std::size_t>(std::floor(u * static_cast<double>(n_bins)));
  return i < n_bins ? i : n_bins - 1;
}

// z is taken as a closed band, [lo, hi].
inline Scan2D project(const PointCloud3D& cloud, std::size_t n_bins, ZBand band = {},
                      double obstacle_threshold = 0.5) {
  if (n_bins < 1) throw std::invalid_argument("project: n_bins must be >= 1");
  if (!(band.lo < band.hi)) throw std::invalid_argument("project: z_lo must be < z_hi");
  cloud.validate();
  Scan2D s;
  s.ranges.assign(n_bins, kNoReturn);
  s.obstacle_threshold = obstacle_threshold;
  for (const auto& p : cloud.points) {
    if (p.z < band.lo || p.z > band.hi) continue;
    double& r = s.ranges[bin_index(p.theta, n_bins)];
    if (p.r < r) r = p.r;
  }
  return s;
}

struct Obstacle {
  std::size_t bin;
  double range;
  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

inline std::vector<Obstacle> flag_obstacles(const Scan2D& scan) {
  std::vector<Obstacle> out;
  for (std::size_t i = 0; i < scan.bins(); ++i)
    if (scan.has_return(i) && scan.ranges[i] < scan.obstacle_threshold) out.push_back({i, scan.ranges[i]});
  return out;
}

// ---------------------------------------------------------------------------
// Payloads: a scan is one float32 per bin (NoReturn as FLT_MAX), a cloud
// is three float32 per point (r, theta, z). All little-endian.

inline constexpr std::size_t kScanBytesPerBin = 4;
inline constexpr std::size_t kCloudBytesPerPoint = 12;
inline constexpr float kNoReturnWire = std::numeric_limits<float>::max();

inline std::size_t scan_payload_size(const Scan2D& s) { return s.bins() * kScanBytesPerBin; }
inline std::size_t cloud_payload_size(const PointCloud3D& c) { return c.points.size() * kCloudBytesPerPoint; }

struct PayloadComparison {
  std::size_t scan_bytes = 0;
  std::size_t cloud_bytes = 0;
  std::optional<double> reduction;  // 1 - scan/cloud; empty when the cloud is empty

  std::string reduction_text() const {
    if (!reduction) return "NoReduction";
    std::ostringstream o;
    o.precision(4);
    o << *reduction * 100.0 << "%";
    return o.str();
  }
};

inline PayloadComparison compare_payloads(std::size_t n_bins, std::size_t n_points) {
  PayloadComparison c;
  c.scan_bytes = n_bins * kScanBytesPerBin;
  c.cloud_bytes = n_points * kCloudBytesPerPoint;
  if (c.cloud_bytes > 0)
    c.reduction = 1.0 - static_cast<double>(c.scan_bytes) / static_cast<double>(c.cloud_bytes);
  return c;
}

inline PayloadComparison compare_payloads(const Scan2D& s, const PointCloud3D& c) {
  return compare_payloads(s.bins(), c.points.size());
}

inline void put_f32(std::vector<std::uint8_t>& out, float f) {
  wire::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
}
inline float get_f32(std::span<const std::uint8_t> in, std::size_t at) {
  return std::bit_cast<float>(wire::get_le<std::uint32_t>(in, at));
}

inline std::vector<std::uint8_t> encode_scan(const Scan2D& s) {
  std::vector<std::uint8_t> out;
  out.reserve(scan_payload_size(s));
  for (double r : s.ranges) put_f32(out, r == kNoReturn ? kNoReturnWire : static_cast<float>(r));
  return out;
}

inline Scan2D decode_scan(std::span<const std::uint8_t> bytes, double obstacle_threshold = 0.5) {
  if (bytes.empty() || bytes.size() % kScanBytesPerBin != 0)
    throw std::invalid_argument("decode_scan: size must be a positive multiple of 4");
  Scan2D s;
  s.obstacle_threshold = obstacle_threshold;
  for (std::size_t at = 0; at < bytes.size(); at += kScanBytesPerBin) {
    const float f = get_f32(bytes, at);
    s.ranges.push_back(f == kNoReturnWire ? kNoReturn : static_cast<double>(f));
  }
  return s;
}

inline std::vector<std::uint8_t> encode_cloud(const PointCloud3D& c) {
  std::vector<std::uint8_t> out;
  out.reserve(cloud_payload_size(c));
  for (const auto& p : c.points) {
    put_f32(out, static_cast<float>(p.r));
    put_f32(out, static_cast<float>(p.theta));
    put_f32(out, static_cast<float>(p.z));
  }
  return out;
}

inline PointCloud3D decode_cloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCloudBytesPerPoint != 0)
    throw std::invalid_argument("decode_cloud: size must be a multiple of 12");
  PointCloud3D c;
  for (std::size_t at = 0; at < bytes.size(); at += kCloudBytesPerPoint)
    c.points.push_back({get_f32(bytes, at), get_f32(bytes, at + 4), get_f32(bytes, at + 8)});
  return c;
}

// "r,theta,z" rows; a non-numeric first line is taken as a header.
inline PointCloud3D parse_cloud_csv(const std::string& text) {
  PointCloud3D c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v[3];
    std::size_t start = 0;
    bool ok = true;
    for (int k = 0; k < 3 && ok; ++k) {
      const std::size_t end = k < 2 ? line.find(',', start) : line.size();
      if (end == std::string::npos) {
        ok = false;
        break;
      }
      try {
        std::size_t used = 0;
        const std::string cell = line.substr(start, end - start);
        v[k] = std::stod(cell, &used);
        if (used != cell.size()) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
      start = end + 1;
    }
    if (!ok) {
      if (line_no == 1) continue;
      throw std::invalid_argument("parse_cloud_csv: bad row at line " + std::to_string(line_no));
    }
    c.points.push_back({v[0], v[1], v[2]});
  }
  c.validate();
  return c;
}

}  // namespace twinbridge::lidar
