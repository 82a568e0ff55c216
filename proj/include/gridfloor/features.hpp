#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "gridfloor/grid.hpp"
#include "gridfloor/ingest.hpp"
#include "gridfloor/nn/tensor.hpp"

namespace gridfloor::features {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Frames as rows; columns are node-major (node_index order), then channel.
struct FeatureTable {
  GridSpec grid;
  std::size_t channels = kFeaturesPerNode;
  RowMatrix values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t width() const { return grid.node_count() * channels; }
};

/// Magnetometer and RSSI channels kept by both estimators.
inline constexpr std::size_t kSelectedChannels = 4;

FeatureTable from_dataset(const ingest::FrameDataset& ds);
Eigen::MatrixX2d labels_of(const ingest::FrameDataset& ds);
Eigen::VectorXd times_of(const ingest::FrameDataset& ds);

/// Keeps [mx, my, mz, rssi] per node. Only accepts full 10-channel tables.
FeatureTable select_channels(const FeatureTable& table);

struct MinMaxParams {
  std::vector<double> mins;
  std::vector<double> maxs;
};

MinMaxParams fit_minmax(const FeatureTable& train);
/// (x - min) / (max - min) per column; constant columns map to 0. No clipping.
FeatureTable apply_minmax(const MinMaxParams& params, const FeatureTable& table);

/// Each node's features become its own plus the unweighted sum over its grid
/// neighbours.
FeatureTable aggregate_neighborhood(const FeatureTable& table);

struct ZNormParams {
  std::vector<double> means;  // per channel
  std::vector<double> sds;    // population standard deviation
};

ZNormParams fit_znorm(const FeatureTable& train);
/// (x - mean) / sd per channel; zero-sd channels map to 0.
FeatureTable apply_znorm(const ZNormParams& params, const FeatureTable& table);

/// Row `row` as a strips x nodes x channels tensor.
nn::Tensor to_grid_tensor(const FeatureTable& table, std::size_t row);
/// Inverse of to_grid_tensor for a single frame.
Eigen::RowVectorXd from_grid_tensor(const nn::Tensor& tensor, const GridSpec& grid);

/// Sidecar with fields mins, maxs, means, sds (any may be empty).
struct PrepParams {
  MinMaxParams minmax;
  ZNormParams znorm;
};

void write_params(const PrepParams& params, const std::filesystem::path& path);
PrepParams read_params(const std::filesystem::path& path);

}  // namespace gridfloor::features
