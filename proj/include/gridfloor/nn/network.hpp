#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gridfloor/nn/layers.hpp"
#include "gridfloor/nn/tensor.hpp"

namespace gridfloor::nn {

enum class LayerKind { conv, avg_pool, flatten, dense };
enum class Activation { none, elu, custom };

struct LayerSpec {
  LayerKind kind;
  int units = 0;  // kernels for conv, units for dense
  Activation activation = Activation::none;

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;

  /// Three blocks of [conv64-elu x3, avg-pool], flatten, dense128-elu x2,
  /// dense6-custom.
  static NetworkSpec standard();
  /// Small variant for gradient checks.
  static NetworkSpec tiny(int kernels = 2, int dense_units = 8);

  bool operator==(const NetworkSpec&) const = default;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind layer_kind_from(std::string_view s);
Activation activation_from(std::string_view s);

struct HeadOutput {
  std::array<double, 6> raw{};        // mu_x, mu_y, sigma_x, sigma_y, r_x, r_y before activation
  std::array<double, 6> activated{};  // after the custom activation
};

/// Activations of one forward pass, kept for the backward pass.
struct Trace {
  std::vector<Tensor> values;  // values[0] is the input, values[i+1] the output of layer i
};

class Network {
 public:
  Network(NetworkSpec spec, std::vector<int> input_shape);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  /// Parameter slice owned by layer i.
  std::span<const double> layer_params(std::size_t i) const;

  void init(std::uint64_t seed);

  Trace forward_trace(const Tensor& input) const;
  HeadOutput forward(const Tensor& input) const;

  /// Loss = NLL_x + NLL_y for one sample; parameter gradients (scaled by
  /// `weight`) are added to `grad`.
  double loss_and_grad(const Tensor& input, double label_x, double label_y,
                       std::span<double> grad, double weight = 1.0) const;
  double loss(const Tensor& input, double label_x, double label_y) const;

  /// Per-layer L2 norms of the parameters, for diagnostics.
  std::vector<std::pair<std::string, double>> layer_norms() const;

  /// Weights as flat little-endian float64 plus a JSON manifest.
  void save(const std::filesystem::path& weights_path, const std::filesystem::path& manifest_path,
            std::uint64_t seed, const std::string& normalization_ref) const;
  static Network load(const std::filesystem::path& manifest_path);

 private:
  NetworkSpec spec_;
  std::vector<int> input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> offsets_;
  AlignedVector params_;
};

/// Loss over the two head coordinates for activated outputs.
double head_loss(const std::array<double, 6>& activated, double label_x, double label_y);

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t n_params = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Relative error |a - n| / max(|a|, |n|, floor), floor = 1e-6.
double grad_rel_error(double analytic, double numeric);

/// Central finite differences (step 1e-5) against backprop on every parameter,
/// using seeded random weights, input and label.
GradCheckReport grad_check(const NetworkSpec& spec, std::vector<int> input_shape, std::uint64_t seed);
GradCheckReport grad_check(const Network& net, const Tensor& input, double label_x, double label_y);

}  // namespace gridfloor::nn
