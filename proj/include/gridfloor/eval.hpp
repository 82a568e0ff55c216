#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gridfloor/grid.hpp"
#include "gridfloor/ingest.hpp"

namespace gridfloor::eval {

double euclid_error(Point2 truth, Point2 predicted);

inline constexpr int kHistogramBins = 50;

struct ErrorReport {
  std::vector<double> errors;
  double mean = 0;
  double median = 0;
  double variance = 0;  // population
  std::vector<double> bin_edges;  // kHistogramBins + 1 edges over [0, max]
  std::vector<long> bin_counts;
};

/// Throws ReportError on an empty list.
ErrorReport summarize(std::span<const double> errors);

/// Per-frame errors of `predicted` against `truth`; lengths must match.
std::vector<double> frame_errors(std::span<const Point2> truth, std::span<const Point2> predicted);

struct ModelTrack {
  std::string name;
  std::vector<Point2> points;
};

struct NamedReport {
  std::string name;
  ErrorReport report;
};

/// Scalable-vector-graphics overlay of the ground truth and each model's track.
std::string trajectory_svg(const GridSpec& grid, std::span<const Point2> truth,
                           std::span<const ModelTrack> models);

/// Bird's-eye RSSI heatmaps for `frame_indices`, green (weak) to white
/// (strong), one cell per node, with the labelled robot position marked.
std::string heatmap_svg(const ingest::FrameDataset& ds, std::span<const std::size_t> frame_indices);

/// model,mean,median,variance rows.
std::string comparison_csv(std::span<const NamedReport> reports);

/// Emits trajectory.svg, heatmap.svg and comparison.csv into `out_dir`.
/// Every track must have one point per dataset frame.
void render_outputs(const ingest::FrameDataset& ds, std::span<const ModelTrack> models,
                    const std::filesystem::path& out_dir);

}  // namespace gridfloor::eval
