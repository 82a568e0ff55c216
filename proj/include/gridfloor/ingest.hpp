#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gridfloor/grid.hpp"

namespace gridfloor::ingest {

/// One flushed node buffer: the samples B^i and the poll time t^i.
struct BufferBatch {
  NodeId node;
  double t = 0.0;
  std::vector<Measurement> samples;
};

using BatchMap = std::map<NodeId, std::vector<BufferBatch>>;

struct TimedMeasurement {
  Measurement m;
  double t = 0.0;
};

struct InterpolatedSeries {
  NodeId node;
  std::vector<TimedMeasurement> items;
  std::size_t skipped_empty = 0;
};

struct LabeledMeasurement {
  Measurement m;
  Point2 label;  // meters
  double t = 0.0;
};

struct MergedSeries {
  NodeId node;
  std::vector<LabeledMeasurement> items;
};

/// Floor-wide snapshot: one measurement per node in node_index order.
struct Frame {
  double t = 0.0;
  Point2 label;
  std::vector<Measurement> nodes;

  bool operator==(const Frame&) const = default;
};

struct FrameDataset {
  GridSpec grid;
  std::vector<Frame> frames;

  std::size_t feature_width() const { return grid.node_count() * kFeaturesPerNode; }
  bool operator==(const FrameDataset&) const = default;
};

/// Parses "/imu_reader/<strip>/<node>" into a NodeId.
NodeId parse_topic(std::string_view topic);

/// Batches grouped per node and sorted by poll time. Errors carry the 1-based
/// line number.
BatchMap parse_payload_log(std::span<const std::string> lines, const GridSpec& grid);

std::vector<GroundTruthSample> parse_ground_truth_log(std::span<const std::string> lines);

/// Element j (1-based) of batch i lands at t^{i-1} + j * (t^i - t^{i-1}) / |B^i|;
/// the first batch uses t^{-1} = t^0 - rtt. Empty batches are counted and skipped.
InterpolatedSeries interpolate_timestamps(std::span<const BufferBatch> batches, double rtt);

/// Index of the sample closest in time to t; ties go to the earlier sample.
/// `times` must be sorted ascending and nonempty.
std::size_t nearest_index(std::span<const double> times, double t);

/// Labels each item with the nearest ground-truth position (mm -> m, z and
/// rotation dropped).
MergedSeries merge_with_ground_truth(const InterpolatedSeries& series,
                                     std::span<const GroundTruthSample> gt);

/// Assembles frames around the shortest series, then trims frames whose
/// reference time falls outside the range covered by every node.
FrameDataset generate_frames(const GridSpec& grid, const std::map<NodeId, MergedSeries>& nodes);

/// Whole chain for one recorded run.
FrameDataset build_dataset(const GridSpec& grid, std::span<const std::string> payload_lines,
                           std::span<const std::string> gt_lines, double rtt);

std::vector<std::string> dataset_header(const GridSpec& grid);
void write_dataset(const FrameDataset& ds, const std::filesystem::path& path);
FrameDataset read_dataset(const std::filesystem::path& path);

}  // namespace gridfloor::ingest
