#include "gridfloor/nn/tensor.hpp"

#include <cmath>

#include "gridfloor/error.hpp"

namespace gridfloor::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
  if (shape_.size() > 4) throw ShapeError("tensors have at most four dimensions");
}

Tensor::Tensor(std::vector<int> shape, const std::vector<double>& values)
    : Tensor(std::move(shape), AlignedVector(values.begin(), values.end())) {}

Tensor::Tensor(std::vector<int> shape, AlignedVector values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 4) throw ShapeError("tensors have at most four dimensions");
  if (shape_size(shape_) != values_.size()) {
    throw ShapeError("tensor " + shape_string() + " given " + std::to_string(values_.size()) +
                     " values");
  }
}

void Tensor::reshape(std::vector<int> shape) {
  if (shape_size(shape) != values_.size()) throw ShapeError("reshape changes element count");
  shape_ = std::move(shape);
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::string s;
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape_[i]);
  }
  return s.empty() ? "scalar" : s;
}

}  // namespace gridfloor::nn
