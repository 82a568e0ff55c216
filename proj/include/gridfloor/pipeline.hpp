#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gridfloor/features.hpp"
#include "gridfloor/grid.hpp"
#include "gridfloor/ingest.hpp"
#include "gridfloor/io.hpp"

namespace gridfloor::pipeline {

namespace fs = std::filesystem;

/// Resolved settings for one stage invocation.
struct StageContext {
  std::string stage;
  fs::path in;
  fs::path out;
  io::Config config;  // every key resolved (defaults, file, flags)
  std::uint64_t seed = 0;
  GridSpec grid;
  std::string model;

  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  const std::string& text(const std::string& key) const;
};

struct StageResult {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;  // relative to StageContext::out
};

/// Config keys (with defaults) accepted by each stage.
const io::Config& default_config(const std::string& stage);
const std::vector<std::string>& stage_names();

StageResult run_stage(const StageContext& ctx);

/// Stage manifest: config hash, seed, inputs and per-output content hashes.
void write_manifest(const StageContext& ctx, const StageResult& result);
/// True when every output listed in the manifest exists with the recorded hash.
bool verify_manifest(const fs::path& manifest_path, std::string* why = nullptr);
std::string config_hash(const StageContext& ctx);

// Shared preparation used by stages and tests.

struct RunData {
  std::string label;
  ingest::FrameDataset ds;
};

/// Datasets <dir>/<prefix>*.csv in name order.
std::vector<RunData> load_runs(const fs::path& dir, const std::string& prefix);

/// Magnetometer + RSSI, min-max scaled, neighbourhood summed; column-major.
Eigen::MatrixXd forest_features(const ingest::FrameDataset& ds, const features::MinMaxParams& mm);
/// Magnetometer + RSSI, z-normalised, one grid tensor per frame.
std::vector<nn::Tensor> cnn_inputs(const ingest::FrameDataset& ds, const features::ZNormParams& z);

GridSpec parse_grid(const std::string& text);

}  // namespace gridfloor::pipeline
