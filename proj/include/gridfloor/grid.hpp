#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace gridfloor {

/// Physical layout of the sensor floor. Nodes form an n_strips x nodes_per_strip
/// grid spread evenly over the hall rectangle.
struct GridSpec {
  int n_strips = 23;
  int nodes_per_strip = 15;
  double hall_length = 30.0;  // meters, along strips
  double hall_width = 15.0;   // meters, along nodes

  int node_count() const { return n_strips * nodes_per_strip; }
  void validate() const;

  /// Desk-scale grid keeping the default cell spacing.
  static GridSpec scaled(int strips, int nodes);

  bool operator==(const GridSpec&) const = default;
};

/// 1-based (strip, node) pair as used in topics and file headers.
struct NodeId {
  int strip = 1;
  int node = 1;

  auto operator<=>(const NodeId&) const = default;
};

bool is_valid(const GridSpec& grid, NodeId id);

/// 0-based row-major index: (strip-1) * nodes_per_strip + (node-1).
std::size_t node_index(const GridSpec& grid, NodeId id);
NodeId node_at(const GridSpec& grid, std::size_t index);

/// All node ids ordered by strip then node.
std::vector<NodeId> all_nodes(const GridSpec& grid);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

Point2 node_position(const GridSpec& grid, NodeId id);

/// Chebyshev-distance-1 neighbours clipped at the grid edges, excluding `id`.
std::vector<NodeId> neighbors(const GridSpec& grid, NodeId id);

inline constexpr std::size_t kFeaturesPerNode = 10;

/// One node reading in fixed order [ax, ay, az, gx, gy, gz, mx, my, mz, rssi].
/// Units: m/s^2, deg/s, uT, dBm.
struct Measurement {
  std::array<double, kFeaturesPerNode> values{};

  bool all_finite() const;
  bool operator==(const Measurement&) const = default;
};

enum class Channel : std::size_t { ax, ay, az, gx, gy, gz, mx, my, mz, rssi };

/// Ground-truth tracker sample: position in millimeters, rotation in radians.
struct GroundTruthSample {
  double t = 0.0;
  std::array<double, 3> pos_mm{};
  std::array<double, 3> rot_rad{};
};

std::string to_string(NodeId id);

}  // namespace gridfloor
