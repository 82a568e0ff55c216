#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gridfloor/nn/tensor.hpp"
#include "gridfloor/rng.hpp"

namespace gridfloor::nn {

// Primitive ops on H x W x C tensors.

/// 3x3 zero-padded convolution. `kernels` is laid out [kh][kw][cin][cout].
Tensor conv2d_same(const Tensor& input, std::span<const double> kernels,
                   std::span<const double> bias, int out_channels);
Tensor elu(const Tensor& x);
double elu(double x);
/// Non-overlapping 2x2 average, ceil mode; edge windows average the cells present.
Tensor avg_pool_2x2(const Tensor& input);

inline constexpr double kUncertaintyFloor = 0.001;
/// Head activation: mu passes through, sigma and r become exp(raw) + 0.001.
std::array<double, 6> custom_activation(const std::array<double, 6>& raw);

/// Network stage operating on a slice of the flat parameter vector. Layers are
/// stateless, so one network can serve concurrent forward passes.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string name() const = 0;
  virtual std::vector<int> output_shape() const = 0;
  virtual std::size_t param_count() const { return 0; }
  virtual void init(std::span<double> /*params*/, Rng& /*rng*/) const {}
  virtual void forward(std::span<const double> params, const Tensor& in, Tensor& out) const = 0;
  /// Accumulates parameter gradients into `grad_params`; writes `grad_in` when
  /// it is non-null.
  virtual void backward(std::span<const double> params, const Tensor& in, const Tensor& out,
                        const Tensor& grad_out, Tensor* grad_in,
                        std::span<double> grad_params) const = 0;
};

std::unique_ptr<Layer> make_conv(std::vector<int> in_shape, int out_channels);
std::unique_ptr<Layer> make_dense(std::vector<int> in_shape, int units);
std::unique_ptr<Layer> make_elu(std::vector<int> in_shape);
std::unique_ptr<Layer> make_avg_pool(std::vector<int> in_shape);
std::unique_ptr<Layer> make_flatten(std::vector<int> in_shape);
std::unique_ptr<Layer> make_custom_head(std::vector<int> in_shape);

}  // namespace gridfloor::nn
