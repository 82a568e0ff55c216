#include "gridfloor/nn/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "gridfloor/error.hpp"

namespace gridfloor::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank3(const Tensor& t, const char* who) {
  if (t.rank() != 3) throw ShapeError(std::string(who) + ": expected HxWxC input, got " + t.shape_string());
}

// Rows are output pixels, columns [kh][kw][cin].
void im2col(const Tensor& in, AlignedVector& cols) {
  const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
  const std::size_t K = 9 * static_cast<std::size_t>(C);
  cols.assign(static_cast<std::size_t>(H) * W * K, 0.0);
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      double* row = cols.data() + (static_cast<std::size_t>(h) * W + w) * K;
      for (int kh = 0; kh < 3; ++kh) {
        const int sh = h + kh - 1;
        if (sh < 0 || sh >= H) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int sw = w + kw - 1;
          if (sw < 0 || sw >= W) continue;
          const double* src = in.data() + (static_cast<std::size_t>(sh) * W + sw) * C;
          std::copy(src, src + C, row + (kh * 3 + kw) * C);
        }
      }
    }
  }
}

void col2im_add(const AlignedVector& cols, Tensor& grad_in) {
  const int H = grad_in.dim(0), W = grad_in.dim(1), C = grad_in.dim(2);
  const std::size_t K = 9 * static_cast<std::size_t>(C);
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const double* row = cols.data() + (static_cast<std::size_t>(h) * W + w) * K;
      for (int kh = 0; kh < 3; ++kh) {
        const int sh = h + kh - 1;
        if (sh < 0 || sh >= H) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int sw = w + kw - 1;
          if (sw < 0 || sw >= W) continue;
          double* dst = grad_in.data() + (static_cast<std::size_t>(sh) * W + sw) * C;
          const double* src = row + (kh * 3 + kw) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void glorot(std::span<double> w, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

}  // namespace

Tensor conv2d_same(const Tensor& input, std::span<const double> kernels,
                   std::span<const double> bias, int out_channels) {
  require_rank3(input, "conv2d");
  const int H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const std::size_t K = 9 * static_cast<std::size_t>(C);
  if (kernels.size() != K * out_channels || bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ShapeError("conv2d: kernel bank does not match " + std::to_string(C) + " input channels");
  }
  thread_local AlignedVector cols;
  im2col(input, cols);
  Tensor out({H, W, out_channels});
  MapMat o(out.data(), H * W, out_channels);
  o.noalias() = ConstMapMat(cols.data(), H * W, K) * ConstMapMat(kernels.data(), K, out_channels);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), out_channels);
  return out;
}

double elu(double x) { return x > 0 ? x : std::expm1(x); }

Tensor elu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = elu(v);
  return y;
}

Tensor avg_pool_2x2(const Tensor& input) {
  require_rank3(input, "avg_pool");
  const int H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor out({Ho, Wo, C});
  for (int h = 0; h < Ho; ++h) {
    for (int w = 0; w < Wo; ++w) {
      const int h1 = std::min(2 * h + 2, H), w1 = std::min(2 * w + 2, W);
      const double inv = 1.0 / ((h1 - 2 * h) * (w1 - 2 * w));
      for (int c = 0; c < C; ++c) {
        double s = 0;
        for (int a = 2 * h; a < h1; ++a) {
          for (int b = 2 * w; b < w1; ++b) s += input.at(a, b, c);
        }
        out.at(h, w, c) = s * inv;
      }
    }
  }
  return out;
}

std::array<double, 6> custom_activation(const std::array<double, 6>& raw) {
  return {raw[0],
          raw[1],
          std::exp(raw[2]) + kUncertaintyFloor,
          std::exp(raw[3]) + kUncertaintyFloor,
          std::exp(raw[4]) + kUncertaintyFloor,
          std::exp(raw[5]) + kUncertaintyFloor};
}

namespace {

class Conv final : public Layer {
 public:
  Conv(std::vector<int> in, int cout) : in_(std::move(in)), cout_(cout) {
    if (in_.size() != 3) throw ShapeError("conv2d needs an HxWxC input");
    if (cout_ < 1) throw ShapeError("conv2d needs at least one kernel");
  }
  std::string name() const override { return "conv2d_" + std::to_string(cout_); }
  std::vector<int> output_shape() const override { return {in_[0], in_[1], cout_}; }
  std::size_t param_count() const override { return k() * cout_ + cout_; }
  void init(std::span<double> p, Rng& rng) const override {
    glorot(p.first(k() * cout_), 9.0 * in_[2], 9.0 * cout_, rng);
    std::fill(p.begin() + k() * cout_, p.end(), 0.0);
  }
  void forward(std::span<const double> p, const Tensor& in, Tensor& out) const override {
    check(in);
    out = conv2d_same(in, p.first(k() * cout_), p.subspan(k() * cout_), cout_);
  }
  void backward(std::span<const double> p, const Tensor& in, const Tensor&, const Tensor& gout,
                Tensor* gin, std::span<double> gp) const override {
    const int HW = in_[0] * in_[1];
    const auto K = static_cast<Eigen::Index>(k());
    thread_local AlignedVector cols;
    im2col(in, cols);
    ConstMapMat g(gout.data(), HW, cout_);
    MapMat(gp.data(), K, cout_).noalias() += ConstMapMat(cols.data(), HW, K).transpose() * g;
    Eigen::Map<Eigen::RowVectorXd>(gp.data() + K * cout_, cout_) += g.colwise().sum();
    if (gin) {
      cols.resize(static_cast<std::size_t>(HW) * K);
      MapMat(cols.data(), HW, K).noalias() = g * ConstMapMat(p.data(), K, cout_).transpose();
      *gin = Tensor(in_);
      col2im_add(cols, *gin);
    }
  }

 private:
  std::size_t k() const { return 9 * static_cast<std::size_t>(in_[2]); }
  void check(const Tensor& in) const {
    if (in.shape() != in_) {
      throw ShapeError(name() + ": expected input " + Tensor(in_).shape_string() + ", got " +
                       in.shape_string());
    }
  }
  std::vector<int> in_;
  int cout_;
};

class Dense final : public Layer {
 public:
  Dense(std::vector<int> in, int units) : in_(std::move(in)), units_(units) {
    if (in_.size() != 1) throw ShapeError("dense needs a flat input, got rank " + std::to_string(in_.size()));
    if (units_ < 1) throw ShapeError("dense needs at least one unit");
  }
  std::string name() const override { return "dense_" + std::to_string(units_); }
  std::vector<int> output_shape() const override { return {units_}; }
  std::size_t param_count() const override { return n() * units_ + units_; }
  void init(std::span<double> p, Rng& rng) const override {
    glorot(p.first(n() * units_), static_cast<double>(n()), units_, rng);
    std::fill(p.begin() + n() * units_, p.end(), 0.0);
  }
  void forward(std::span<const double> p, const Tensor& in, Tensor& out) const override {
    if (in.shape() != in_) {
      throw ShapeError(name() + ": expected " + std::to_string(n()) + " inputs, got " + in.shape_string());
    }
    const auto N = static_cast<Eigen::Index>(n());
    out = Tensor({units_});
    Eigen::Map<Eigen::RowVectorXd> y(out.data(), units_);
    y.noalias() = Eigen::Map<const Eigen::RowVectorXd>(in.data(), N) * ConstMapMat(p.data(), N, units_);
    y += Eigen::Map<const Eigen::RowVectorXd>(p.data() + N * units_, units_);
  }
  void backward(std::span<const double> p, const Tensor& in, const Tensor&, const Tensor& gout,
                Tensor* gin, std::span<double> gp) const override {
    const auto N = static_cast<Eigen::Index>(n());
    Eigen::Map<const Eigen::RowVectorXd> x(in.data(), N);
    Eigen::Map<const Eigen::RowVectorXd> g(gout.data(), units_);
    MapMat(gp.data(), N, units_).noalias() += x.transpose() * g;
    Eigen::Map<Eigen::RowVectorXd>(gp.data() + N * units_, units_) += g;
    if (gin) {
      *gin = Tensor(in_);
      Eigen::Map<Eigen::RowVectorXd>(gin->data(), N).noalias() =
          g * ConstMapMat(p.data(), N, units_).transpose();
    }
  }

 private:
  std::size_t n() const { return static_cast<std::size_t>(in_[0]); }
  std::vector<int> in_;
  int units_;
};

class Elu final : public Layer {
 public:
  explicit Elu(std::vector<int> in) : in_(std::move(in)) {}
  std::string name() const override { return "elu"; }
  std::vector<int> output_shape() const override { return in_; }
  void forward(std::span<const double>, const Tensor& in, Tensor& out) const override { out = elu(in); }
  void backward(std::span<const double>, const Tensor& in, const Tensor& out, const Tensor& gout,
                Tensor* gin, std::span<double>) const override {
    if (!gin) return;
    *gin = gout;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (!(in[i] > 0)) (*gin)[i] *= out[i] + 1.0;
    }
  }

 private:
  std::vector<int> in_;
};

class AvgPool final : public Layer {
 public:
  explicit AvgPool(std::vector<int> in) : in_(std::move(in)) {
    if (in_.size() != 3) throw ShapeError("avg_pool needs an HxWxC input");
  }
  std::string name() const override { return "avg_pool_2x2"; }
  std::vector<int> output_shape() const override { return {(in_[0] + 1) / 2, (in_[1] + 1) / 2, in_[2]}; }
  void forward(std::span<const double>, const Tensor& in, Tensor& out) const override {
    if (in.shape() != in_) throw ShapeError(name() + ": unexpected input " + in.shape_string());
    out = avg_pool_2x2(in);
  }
  void backward(std::span<const double>, const Tensor&, const Tensor&, const Tensor& gout,
                Tensor* gin, std::span<double>) const override {
    if (!gin) return;
    const int H = in_[0], W = in_[1], C = in_[2];
    *gin = Tensor(in_);
    for (int h = 0; h < H; ++h) {
      const int oh = h / 2;
      const int hn = std::min(2 * oh + 2, H) - 2 * oh;
      for (int w = 0; w < W; ++w) {
        const int ow = w / 2;
        const int wn = std::min(2 * ow + 2, W) - 2 * ow;
        const double inv = 1.0 / (hn * wn);
        for (int c = 0; c < C; ++c) gin->at(h, w, c) = gout.at(oh, ow, c) * inv;
      }
    }
  }

 private:
  std::vector<int> in_;
};

class Flatten final : public Layer {
 public:
  explicit Flatten(std::vector<int> in) : in_(std::move(in)) {}
  std::string name() const override { return "flatten"; }
  std::vector<int> output_shape() const override { return {static_cast<int>(shape_size(in_))}; }
  void forward(std::span<const double>, const Tensor& in, Tensor& out) const override {
    if (in.shape() != in_) throw ShapeError(name() + ": unexpected input " + in.shape_string());
    out = in;
    out.reshape(output_shape());
  }
  void backward(std::span<const double>, const Tensor&, const Tensor&, const Tensor& gout,
                Tensor* gin, std::span<double>) const override {
    if (!gin) return;
    *gin = gout;
    gin->reshape(in_);
  }

 private:
  std::vector<int> in_;
};

class CustomHead final : public Layer {
 public:
  explicit CustomHead(std::vector<int> in) : in_(std::move(in)) {
    if (in_ != std::vector<int>{6}) throw ShapeError("custom activation needs exactly 6 inputs");
  }
  std::string name() const override { return "custom"; }
  std::vector<int> output_shape() const override { return in_; }
  void forward(std::span<const double>, const Tensor& in, Tensor& out) const override {
    std::array<double, 6> raw;
    std::copy(in.data(), in.data() + 6, raw.begin());
    const auto act = custom_activation(raw);
    out = Tensor({6}, std::vector<double>(act.begin(), act.end()));
  }
  void backward(std::span<const double>, const Tensor&, const Tensor& out, const Tensor& gout,
                Tensor* gin, std::span<double>) const override {
    if (!gin) return;
    *gin = gout;
    for (int i = 2; i < 6; ++i) (*gin)[i] *= out[i] - kUncertaintyFloor;
  }

 private:
  std::vector<int> in_;
};

}  // namespace

std::unique_ptr<Layer> make_conv(std::vector<int> in_shape, int out_channels) {
  return std::make_unique<Conv>(std::move(in_shape), out_channels);
}
std::unique_ptr<Layer> make_dense(std::vector<int> in_shape, int units) {
  return std::make_unique<Dense>(std::move(in_shape), units);
}
std::unique_ptr<Layer> make_elu(std::vector<int> in_shape) { return std::make_unique<Elu>(std::move(in_shape)); }
std::unique_ptr<Layer> make_avg_pool(std::vector<int> in_shape) {
  return std::make_unique<AvgPool>(std::move(in_shape));
}
std::unique_ptr<Layer> make_flatten(std::vector<int> in_shape) {
  return std::make_unique<Flatten>(std::move(in_shape));
}
std::unique_ptr<Layer> make_custom_head(std::vector<int> in_shape) {
  return std::make_unique<CustomHead>(std::move(in_shape));
}

}  // namespace gridfloor::nn
