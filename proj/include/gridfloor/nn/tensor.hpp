#pragma once

#include <cstddef>
#include <new>
#include <string>
#include <vector>

namespace gridfloor::nn {

/// Cache-line aligned storage. Eigen's vectorised reductions peel a scalar
/// head that depends on the start address, so buffers handed to Eigen maps
/// need a fixed alignment for results to be bit-reproducible across runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of doubles with up to four dimensions. Spatial
/// tensors use height x width x channels layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, const std::vector<double>& values);
  Tensor(std::vector<int> shape, AlignedVector values);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  AlignedVector& values() { return values_; }
  const AlignedVector& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Element (h, w, c) of a rank-3 tensor.
  double& at(int h, int w, int c) { return values_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c]; }
  double at(int h, int w, int c) const { return values_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c]; }

  void reshape(std::vector<int> shape);
  bool all_finite() const;
  std::string shape_string() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  AlignedVector values_;
};

std::size_t shape_size(const std::vector<int>& shape);

}  // namespace gridfloor::nn
