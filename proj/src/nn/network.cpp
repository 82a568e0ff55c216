#include "gridfloor/nn/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gridfloor/error.hpp"
#include "gridfloor/io.hpp"
#include "gridfloor/nn/asym_gauss.hpp"
#include "gridfloor/rng.hpp"
#include "json.hpp"

namespace gridfloor::nn {

NetworkSpec NetworkSpec::standard() {
  NetworkSpec s;
  for (int block = 0; block < 3; ++block) {
    for (int i = 0; i < 3; ++i) s.layers.push_back({LayerKind::conv, 64, Activation::elu});
    s.layers.push_back({LayerKind::avg_pool});
  }
  s.layers.push_back({LayerKind::flatten});
  s.layers.push_back({LayerKind::dense, 128, Activation::elu});
  s.layers.push_back({LayerKind::dense, 128, Activation::elu});
  s.layers.push_back({LayerKind::dense, 6, Activation::custom});
  return s;
}

NetworkSpec NetworkSpec::tiny(int kernels, int dense_units) {
  NetworkSpec s;
  s.layers.push_back({LayerKind::conv, kernels, Activation::elu});
  s.layers.push_back({LayerKind::conv, kernels, Activation::elu});
  s.layers.push_back({LayerKind::avg_pool});
  s.layers.push_back({LayerKind::conv, kernels, Activation::elu});
  s.layers.push_back({LayerKind::avg_pool});
  s.layers.push_back({LayerKind::flatten});
  s.layers.push_back({LayerKind::dense, dense_units, Activation::elu});
  s.layers.push_back({LayerKind::dense, 6, Activation::custom});
  return s;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv2d";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::elu: return "elu";
    case Activation::custom: return "custom";
  }
  return "?";
}

LayerKind layer_kind_from(std::string_view s) {
  if (s == "conv2d") return LayerKind::conv;
  if (s == "avg_pool") return LayerKind::avg_pool;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "dense") return LayerKind::dense;
  throw SchemaError("unknown layer kind '" + std::string(s) + "'");
}

Activation activation_from(std::string_view s) {
  if (s == "none") return Activation::none;
  if (s == "elu") return Activation::elu;
  if (s == "custom") return Activation::custom;
  throw SchemaError("unknown activation '" + std::string(s) + "'");
}

Network::Network(NetworkSpec spec, std::vector<int> input_shape)
    : spec_(std::move(spec)), input_shape_(std::move(input_shape)) {
  std::vector<int> shape = input_shape_;
  auto add = [&](std::unique_ptr<Layer> layer) {
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  };
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& ls = spec_.layers[i];
    try {
      switch (ls.kind) {
        case LayerKind::conv: add(make_conv(shape, ls.units)); break;
        case LayerKind::avg_pool: add(make_avg_pool(shape)); break;
        case LayerKind::flatten: add(make_flatten(shape)); break;
        case LayerKind::dense: add(make_dense(shape, ls.units)); break;
      }
      if (ls.activation == Activation::elu) add(make_elu(shape));
      if (ls.activation == Activation::custom) add(make_custom_head(shape));
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + to_string(ls.kind) + "): " + e.what());
    }
  }
  if (shape != std::vector<int>{6} || layers_.empty() || layers_.back()->name() != "custom") {
    throw ShapeError("network must end in a 6-unit dense layer with the custom activation");
  }
  std::size_t total = 0;
  for (const auto& l : layers_) {
    offsets_.push_back(total);
    total += l->param_count();
  }
  params_.assign(total, 0.0);
}

std::span<const double> Network::layer_params(std::size_t i) const {
  return std::span<const double>(params_).subspan(offsets_[i], layers_[i]->param_count());
}

void Network::init(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->init(std::span<double>(params_).subspan(offsets_[i], layers_[i]->param_count()), rng);
  }
}

Trace Network::forward_trace(const Tensor& input) const {
  if (input.shape() != input_shape_) {
    throw ShapeError("network input: expected " + Tensor(input_shape_).shape_string() + ", got " +
                     input.shape_string());
  }
  Trace tr;
  tr.values.reserve(layers_.size() + 1);
  tr.values.push_back(input);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor out;
    layers_[i]->forward(layer_params(i), tr.values.back(), out);
    tr.values.push_back(std::move(out));
  }
  return tr;
}

HeadOutput Network::forward(const Tensor& input) const {
  const Trace tr = forward_trace(input);
  HeadOutput h;
  const Tensor& raw = tr.values[tr.values.size() - 2];
  const Tensor& act = tr.values.back();
  std::copy(raw.data(), raw.data() + 6, h.raw.begin());
  std::copy(act.data(), act.data() + 6, h.activated.begin());
  return h;
}

double head_loss(const std::array<double, 6>& a, double label_x, double label_y) {
  return asym_gauss_nll(label_x, a[0], a[2], a[4]) + asym_gauss_nll(label_y, a[1], a[3], a[5]);
}

double Network::loss(const Tensor& input, double label_x, double label_y) const {
  return head_loss(forward(input).activated, label_x, label_y);
}

double Network::loss_and_grad(const Tensor& input, double label_x, double label_y,
                              std::span<double> grad, double weight) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer size mismatch");
  const Trace tr = forward_trace(input);
  const Tensor& out = tr.values.back();
  const auto gx = asym_gauss_nll_grad(label_x, out[0], out[2], out[4]);
  const auto gy = asym_gauss_nll_grad(label_y, out[1], out[3], out[5]);
  Tensor g({6}, std::vector<double>{gx.d_mu, gy.d_mu, gx.d_sigma, gy.d_sigma, gx.d_r, gy.d_r});
  for (double& v : g.values()) v *= weight;
  Tensor gin;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto gp = grad.subspan(offsets_[i], layers_[i]->param_count());
    layers_[i]->backward(layer_params(i), tr.values[i], tr.values[i + 1], g, i > 0 ? &gin : nullptr, gp);
    if (i > 0) std::swap(g, gin);
  }
  return gx.value + gy.value;
}

std::vector<std::pair<std::string, double>> Network::layer_norms() const {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->param_count() == 0) continue;
    double s = 0;
    for (double v : layer_params(i)) s += v * v;
    out.emplace_back(std::to_string(i) + ":" + layers_[i]->name(), std::sqrt(s));
  }
  return out;
}

void Network::save(const std::filesystem::path& weights_path,
                   const std::filesystem::path& manifest_path, std::uint64_t seed,
                   const std::string& normalization_ref) const {
  std::string bytes(params_.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(params_[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(bytes.data() + i * sizeof(double), &bits, sizeof(double));
  }
  io::write_file_atomic(weights_path, bytes);

  nlohmann::ordered_json m;
  m["version"] = 1;
  m["input_shape"] = input_shape_;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& ls : spec_.layers) {
    layers.push_back({{"kind", to_string(ls.kind)}, {"units", ls.units}, {"activation", to_string(ls.activation)}});
  }
  m["layers"] = layers;
  auto shapes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shapes.push_back({{"name", layers_[i]->name()},
                      {"output_shape", layers_[i]->output_shape()},
                      {"params", layers_[i]->param_count()}});
  }
  m["stages"] = shapes;
  m["param_count"] = params_.size();
  m["seed"] = seed;
  m["normalization"] = normalization_ref;
  m["weights"] = weights_path.filename().string();
  m["weights_fnv1a"] = io::hex64(io::fnv1a(bytes));
  io::write_file_atomic(manifest_path, m.dump(2) + "\n");
}

Network Network::load(const std::filesystem::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  NetworkSpec spec;
  for (const auto& l : m.at("layers")) {
    spec.layers.push_back({layer_kind_from(l.at("kind").get<std::string>()), l.at("units").get<int>(),
                           activation_from(l.at("activation").get<std::string>())});
  }
  Network net(spec, m.at("input_shape").get<std::vector<int>>());
  const auto weights = manifest_path.parent_path() / m.at("weights").get<std::string>();
  const auto bytes = io::read_file(weights);
  if (bytes.size() != net.param_count() * sizeof(double)) {
    throw SchemaError(weights.string() + ": expected " + std::to_string(net.param_count()) + " weights");
  }
  if (m.contains("weights_fnv1a") && m.at("weights_fnv1a").get<std::string>() != io::hex64(io::fnv1a(bytes))) {
    throw SchemaError(weights.string() + ": checksum does not match the manifest");
  }
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + i * sizeof(double), sizeof(double));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    net.params_[i] = std::bit_cast<double>(bits);
  }
  return net;
}

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const Network& net, const Tensor& input, double label_x, double label_y) {
  GradCheckReport rep;
  rep.n_params = net.param_count();
  rep.analytic.assign(rep.n_params, 0.0);
  net.loss_and_grad(input, label_x, label_y, rep.analytic);
  rep.numeric.resize(rep.n_params);
  // Perturb a private copy of the parameters.
  Network probe(net.spec(), net.input_shape());
  std::copy(net.params().begin(), net.params().end(), probe.params().begin());
  constexpr double h = 1e-5;
  for (std::size_t i = 0; i < rep.n_params; ++i) {
    const double orig = probe.params()[i];
    probe.params()[i] = orig + h;
    const double up = probe.loss(input, label_x, label_y);
    probe.params()[i] = orig - h;
    const double down = probe.loss(input, label_x, label_y);
    probe.params()[i] = orig;
    rep.numeric[i] = (up - down) / (2 * h);
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(rep.analytic[i] - rep.numeric[i]));
    rep.max_rel_error = std::max(rep.max_rel_error, grad_rel_error(rep.analytic[i], rep.numeric[i]));
  }
  return rep;
}

GradCheckReport grad_check(const NetworkSpec& spec, std::vector<int> input_shape, std::uint64_t seed) {
  Network net(spec, input_shape);
  net.init(seed);
  Rng rng(derive_seed(seed, 1));
  // Non-zero biases so every parameter path is exercised.
  for (double& p : net.params()) p += rng.uniform(-0.05, 0.05);
  Tensor input(input_shape);
  for (double& v : input.values()) v = rng.normal();
  const double lx = rng.normal(), ly = rng.normal();
  return grad_check(net, input, lx, ly);
}

}  // namespace gridfloor::nn
