#pragma once

#include <cstdint>
#include <vector>

#include "gridfloor/grid.hpp"
#include "gridfloor/nn/network.hpp"

namespace gridfloor::nn {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 200;
  int patience = 10;  // epochs without validation improvement
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledTensors {
  std::vector<Tensor> inputs;
  std::vector<Point2> labels;

  std::size_t size() const { return inputs.size(); }
};

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0;
  double val_nll = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;  // epoch 0 is the untrained network
  int best_epoch = 0;
  double best_val_nll = 0;
};

/// Mean per-sample loss.
double mean_loss(const Network& net, const LabeledTensors& data);

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the mean batch loss. The network
/// is initialised from `config.seed`, the mu/sigma output biases start at the
/// training label centroid and log spread, and the weights of the best
/// validation epoch are left in `net`. Throws DivergenceError on a non-finite
/// loss.
TrainResult train(Network& net, const LabeledTensors& train_set, const LabeledTensors& val_set,
                  const TrainConfig& config);

}  // namespace gridfloor::nn
