#include "gridfloor/nn/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "gridfloor/error.hpp"
#include "gridfloor/rng.hpp"

namespace gridfloor::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || batch_size < 1 || max_epochs < 1 || patience < 1) {
    throw InputError("training settings must be positive");
  }
}

double mean_loss(const Network& net, const LabeledTensors& data) {
  if (data.size() == 0) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s += net.loss(data.inputs[i], data.labels[i].x, data.labels[i].y);
  }
  return s / static_cast<double>(data.size());
}

namespace {

void init_head_bias(Network& net, const LabeledTensors& data) {
  const double n = static_cast<double>(data.size());
  double mx = 0, my = 0;
  for (const auto& p : data.labels) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0;
  for (const auto& p : data.labels) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  const double sx = std::sqrt(vx / n), sy = std::sqrt(vy / n);
  // The final dense layer's bias is the tail of the parameter vector.
  auto p = net.params();
  auto bias = p.subspan(p.size() - 6);
  bias[0] = mx;
  bias[1] = my;
  bias[2] = std::log(std::max(sx, 0.01));
  bias[3] = std::log(std::max(sy, 0.01));
  bias[4] = 0.0;
  bias[5] = 0.0;
}

[[noreturn]] void diverged(const Network& net, int epoch, std::size_t batch, double loss) {
  std::ostringstream msg;
  msg << "non-finite loss " << loss << " at epoch " << epoch << ", batch " << batch << "; layer norms:";
  for (const auto& [name, norm] : net.layer_norms()) msg << " " << name << "=" << norm;
  throw DivergenceError(msg.str());
}

}  // namespace

TrainResult train(Network& net, const LabeledTensors& train_set, const LabeledTensors& val_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw FitError("training set is empty");
  net.init(config.seed);
  init_head_bias(net, train_set);

  const LabeledTensors& monitor = val_set.size() > 0 ? val_set : train_set;
  const std::size_t P = net.param_count();
  AlignedVector grad(P), m(P, 0.0), v(P, 0.0);
  std::vector<double> best(net.params().begin(), net.params().end());
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  TrainResult result;
  result.history.push_back({0, mean_loss(net, train_set), mean_loss(net, monitor)});
  result.best_val_nll = result.history.back().val_nll;
  if (!std::isfinite(result.best_val_nll)) diverged(net, 0, 0, result.best_val_nll);

  std::vector<std::size_t> order(train_set.size());
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0;
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = order[k];
        batch_loss += net.loss_and_grad(train_set.inputs[idx], train_set.labels[idx].x,
                                        train_set.labels[idx].y, grad, w);
      }
      if (!std::isfinite(batch_loss)) diverged(net, epoch, batch_index, batch_loss);
      epoch_loss += batch_loss;

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      auto p = net.params();
      for (std::size_t i = 0; i < P; ++i) {
        m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
        p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
    const double val = mean_loss(net, monitor);
    if (!std::isfinite(val)) diverged(net, epoch, batch_index, val);
    result.history.push_back({epoch, epoch_loss / static_cast<double>(order.size()), val});
    if (val < result.best_val_nll) {
      result.best_val_nll = val;
      result.best_epoch = epoch;
      std::copy(net.params().begin(), net.params().end(), best.begin());
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  std::copy(best.begin(), best.end(), net.params().begin());
  return result;
}

}  // namespace gridfloor::nn
