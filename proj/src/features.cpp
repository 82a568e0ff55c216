#include "gridfloor/features.hpp"

#include <cmath>

#include "gridfloor/error.hpp"
#include "gridfloor/io.hpp"
#include "json.hpp"

namespace gridfloor::features {

namespace {

constexpr std::size_t kKeep[kSelectedChannels] = {
    static_cast<std::size_t>(Channel::mx), static_cast<std::size_t>(Channel::my),
    static_cast<std::size_t>(Channel::mz), static_cast<std::size_t>(Channel::rssi)};

void require_width(const FeatureTable& t) {
  if (static_cast<std::size_t>(t.values.cols()) != t.width()) {
    throw SchemaError("feature table has " + std::to_string(t.values.cols()) +
                      " columns, grid expects " + std::to_string(t.width()));
  }
}

}  // namespace

FeatureTable from_dataset(const ingest::FrameDataset& ds) {
  FeatureTable t;
  t.grid = ds.grid;
  t.channels = kFeaturesPerNode;
  t.values.resize(static_cast<Eigen::Index>(ds.frames.size()), static_cast<Eigen::Index>(t.width()));
  for (std::size_t r = 0; r < ds.frames.size(); ++r) {
    const auto& nodes = ds.frames[r].nodes;
    if (nodes.size() != static_cast<std::size_t>(ds.grid.node_count())) {
      throw SchemaError("frame " + std::to_string(r) + " is missing nodes");
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t k = 0; k < kFeaturesPerNode; ++k) {
        t.values(r, i * kFeaturesPerNode + k) = nodes[i].values[k];
      }
    }
  }
  return t;
}

Eigen::MatrixX2d labels_of(const ingest::FrameDataset& ds) {
  Eigen::MatrixX2d y(ds.frames.size(), 2);
  for (std::size_t r = 0; r < ds.frames.size(); ++r) {
    y(r, 0) = ds.frames[r].label.x;
    y(r, 1) = ds.frames[r].label.y;
  }
  return y;
}

Eigen::VectorXd times_of(const ingest::FrameDataset& ds) {
  Eigen::VectorXd t(ds.frames.size());
  for (std::size_t r = 0; r < ds.frames.size(); ++r) t(r) = ds.frames[r].t;
  return t;
}

FeatureTable select_channels(const FeatureTable& table) {
  if (table.channels != kFeaturesPerNode) {
    throw SchemaError("channel selection needs 10 channels per node, table has " +
                      std::to_string(table.channels));
  }
  require_width(table);
  FeatureTable out;
  out.grid = table.grid;
  out.channels = kSelectedChannels;
  const std::size_t n_nodes = table.grid.node_count();
  out.values.resize(table.values.rows(), static_cast<Eigen::Index>(out.width()));
  for (std::size_t i = 0; i < n_nodes; ++i) {
    for (std::size_t c = 0; c < kSelectedChannels; ++c) {
      out.values.col(i * kSelectedChannels + c) = table.values.col(i * kFeaturesPerNode + kKeep[c]);
    }
  }
  return out;
}

MinMaxParams fit_minmax(const FeatureTable& train) {
  require_width(train);
  if (train.values.rows() < 1) throw FitError("min-max scaling needs at least one frame");
  MinMaxParams p;
  p.mins.resize(train.values.cols());
  p.maxs.resize(train.values.cols());
  for (Eigen::Index c = 0; c < train.values.cols(); ++c) {
    p.mins[c] = train.values.col(c).minCoeff();
    p.maxs[c] = train.values.col(c).maxCoeff();
  }
  return p;
}

FeatureTable apply_minmax(const MinMaxParams& params, const FeatureTable& table) {
  require_width(table);
  if (params.mins.size() != static_cast<std::size_t>(table.values.cols()) ||
      params.maxs.size() != params.mins.size()) {
    throw SchemaError("min-max parameters do not match the feature width");
  }
  FeatureTable out = table;
  for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
    const double range = params.maxs[c] - params.mins[c];
    if (range > 0) {
      out.values.col(c) = (table.values.col(c).array() - params.mins[c]) / range;
    } else {
      out.values.col(c).setZero();
    }
  }
  return out;
}

FeatureTable aggregate_neighborhood(const FeatureTable& table) {
  require_width(table);
  FeatureTable out = table;
  const auto& grid = table.grid;
  const auto ch = static_cast<Eigen::Index>(table.channels);
  for (const auto& id : all_nodes(grid)) {
    const auto self = static_cast<Eigen::Index>(node_index(grid, id)) * ch;
    for (const auto& nb : neighbors(grid, id)) {
      const auto other = static_cast<Eigen::Index>(node_index(grid, nb)) * ch;
      out.values.middleCols(self, ch) += table.values.middleCols(other, ch);
    }
  }
  return out;
}

ZNormParams fit_znorm(const FeatureTable& train) {
  require_width(train);
  if (train.values.rows() < 2) throw FitError("z-normalization needs at least two frames");
  const std::size_t ch = train.channels;
  const std::size_t n_nodes = train.grid.node_count();
  ZNormParams p;
  p.means.assign(ch, 0.0);
  p.sds.assign(ch, 0.0);
  const double count = static_cast<double>(train.values.rows()) * static_cast<double>(n_nodes);
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0;
    for (std::size_t i = 0; i < n_nodes; ++i) sum += train.values.col(i * ch + c).sum();
    const double mean = sum / count;
    double ss = 0;
    for (std::size_t i = 0; i < n_nodes; ++i) {
      ss += (train.values.col(i * ch + c).array() - mean).square().sum();
    }
    p.means[c] = mean;
    p.sds[c] = std::sqrt(ss / count);
  }
  return p;
}

FeatureTable apply_znorm(const ZNormParams& params, const FeatureTable& table) {
  require_width(table);
  const std::size_t ch = table.channels;
  if (params.means.size() != ch || params.sds.size() != ch) {
    throw SchemaError("z-normalization parameters do not match the channel count");
  }
  FeatureTable out = table;
  for (std::size_t i = 0; i < static_cast<std::size_t>(table.grid.node_count()); ++i) {
    for (std::size_t c = 0; c < ch; ++c) {
      auto col = out.values.col(i * ch + c);
      if (params.sds[c] > 0) {
        col = (table.values.col(i * ch + c).array() - params.means[c]) / params.sds[c];
      } else {
        col.setZero();
      }
    }
  }
  return out;
}

nn::Tensor to_grid_tensor(const FeatureTable& table, std::size_t row) {
  require_width(table);
  if (row >= table.rows()) throw ShapeError("frame index out of range");
  const auto& g = table.grid;
  // Row-major node order (strip, node, channel) is already the HWC layout.
  std::vector<double> v(table.values.row(row).data(), table.values.row(row).data() + table.width());
  return nn::Tensor({g.n_strips, g.nodes_per_strip, static_cast<int>(table.channels)}, std::move(v));
}

Eigen::RowVectorXd from_grid_tensor(const nn::Tensor& tensor, const GridSpec& grid) {
  if (tensor.rank() != 3 || tensor.dim(0) != grid.n_strips || tensor.dim(1) != grid.nodes_per_strip) {
    throw ShapeError("tensor " + tensor.shape_string() + " does not match the grid");
  }
  return Eigen::Map<const Eigen::RowVectorXd>(tensor.data(), static_cast<Eigen::Index>(tensor.size()));
}

void write_params(const PrepParams& params, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["mins"] = params.minmax.mins;
  j["maxs"] = params.minmax.maxs;
  j["means"] = params.znorm.means;
  j["sds"] = params.znorm.sds;
  io::write_file_atomic(path, j.dump() + "\n");
}

PrepParams read_params(const std::filesystem::path& path) {
  PrepParams p;
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    p.minmax.mins = j.at("mins").get<std::vector<double>>();
    p.minmax.maxs = j.at("maxs").get<std::vector<double>>();
    p.znorm.means = j.at("means").get<std::vector<double>>();
    p.znorm.sds = j.at("sds").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return p;
}

}  // namespace gridfloor::features
