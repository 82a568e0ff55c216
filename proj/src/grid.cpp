#include "gridfloor/grid.hpp"

#include <cmath>

#include "gridfloor/error.hpp"

namespace gridfloor {

void GridSpec::validate() const {
  if (n_strips < 1 || nodes_per_strip < 1) {
    throw InvalidNodeError("grid needs at least one strip and one node per strip");
  }
  if (!(hall_length > 0.0) || !(hall_width > 0.0)) {
    throw InvalidNodeError("hall dimensions must be positive");
  }
}

GridSpec GridSpec::scaled(int strips, int nodes) {
  GridSpec defaults;
  GridSpec g;
  g.n_strips = strips;
  g.nodes_per_strip = nodes;
  g.hall_length = defaults.hall_length / defaults.n_strips * strips;
  g.hall_width = defaults.hall_width / defaults.nodes_per_strip * nodes;
  g.validate();
  return g;
}

bool is_valid(const GridSpec& grid, NodeId id) {
  return id.strip >= 1 && id.strip <= grid.n_strips && id.node >= 1 &&
         id.node <= grid.nodes_per_strip;
}

static void require_valid(const GridSpec& grid, NodeId id) {
  if (!is_valid(grid, id)) {
    throw InvalidNodeError("node " + to_string(id) + " outside " +
                           std::to_string(grid.n_strips) + "x" +
                           std::to_string(grid.nodes_per_strip) + " grid");
  }
}

std::size_t node_index(const GridSpec& grid, NodeId id) {
  require_valid(grid, id);
  return static_cast<std::size_t>(id.strip - 1) * grid.nodes_per_strip +
         static_cast<std::size_t>(id.node - 1);
}

NodeId node_at(const GridSpec& grid, std::size_t index) {
  if (index >= static_cast<std::size_t>(grid.node_count())) {
    throw InvalidNodeError("node index " + std::to_string(index) + " out of range");
  }
  return NodeId{static_cast<int>(index / grid.nodes_per_strip) + 1,
                static_cast<int>(index % grid.nodes_per_strip) + 1};
}

std::vector<NodeId> all_nodes(const GridSpec& grid) {
  std::vector<NodeId> ids;
  ids.reserve(grid.node_count());
  for (int s = 1; s <= grid.n_strips; ++s) {
    for (int n = 1; n <= grid.nodes_per_strip; ++n) ids.push_back({s, n});
  }
  return ids;
}

Point2 node_position(const GridSpec& grid, NodeId id) {
  require_valid(grid, id);
  const double dx = grid.hall_length / grid.n_strips;
  const double dy = grid.hall_width / grid.nodes_per_strip;
  return {(id.strip - 0.5) * dx, (id.node - 0.5) * dy};
}

std::vector<NodeId> neighbors(const GridSpec& grid, NodeId id) {
  require_valid(grid, id);
  std::vector<NodeId> out;
  out.reserve(8);
  for (int ds = -1; ds <= 1; ++ds) {
    for (int dn = -1; dn <= 1; ++dn) {
      if (ds == 0 && dn == 0) continue;
      NodeId other{id.strip + ds, id.node + dn};
      if (is_valid(grid, other)) out.push_back(other);
    }
  }
  return out;
}

bool Measurement::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string to_string(NodeId id) {
  return "(" + std::to_string(id.strip) + "," + std::to_string(id.node) + ")";
}

}  // namespace gridfloor
