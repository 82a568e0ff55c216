#include "gridfloor/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "gridfloor/error.hpp"
#include "gridfloor/io.hpp"
#include "gridfloor/rng.hpp"
#include "json.hpp"

namespace gridfloor::forest {

void ForestParams::validate() const {
  if (n_trees < 1) throw FitError("forest needs at least one tree");
  if (max_depth < 0) throw FitError("max_depth must be >= 0 (0 = unlimited)");
  if (min_leaf < 1) throw FitError("min_leaf must be >= 1");
  if (features_per_split < 0) throw FitError("features_per_split must be >= 1 (0 = default)");
}

Eigen::Vector2d Tree::predict(const double* x, int depth_limit) const {
  std::size_t i = 0;
  while (true) {
    const auto& n = nodes[i];
    if (n.is_leaf() || (depth_limit > 0 && n.depth >= depth_limit)) {
      return {n.mean[0], n.mean[1]};
    }
    i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
  }
}

int Tree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

namespace {

struct Sample {
  int index;
  double weight;  // bootstrap multiplicity
};

struct Candidate {
  double value;
  int index;
  double weight;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::MatrixX2d& Y, const ForestParams& params,
              int mtry)
      : X_(X), Y_(Y), params_(params), mtry_(mtry), order_(X.cols()) {}

  Tree build(std::vector<Sample> root, std::uint64_t root_seed) {
    Tree tree;
    struct Pending {
      std::vector<Sample> samples;
      std::uint64_t seed;
      int depth;
      int slot;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({std::move(root), root_seed, 0, 0});
    while (!stack.empty()) {
      Pending p = std::move(stack.back());
      stack.pop_back();
      TreeNode node;
      node.depth = p.depth;
      double w = 0, s0 = 0, s1 = 0;
      bool constant = true;
      const double y00 = Y_(p.samples.front().index, 0), y01 = Y_(p.samples.front().index, 1);
      for (const auto& s : p.samples) {
        w += s.weight;
        s0 += s.weight * Y_(s.index, 0);
        s1 += s.weight * Y_(s.index, 1);
        constant = constant && Y_(s.index, 0) == y00 && Y_(s.index, 1) == y01;
      }
      node.mean[0] = s0 / w;
      node.mean[1] = s1 / w;
      node.count = static_cast<int>(std::lround(w));

      const bool depth_stop = params_.max_depth > 0 && p.depth >= params_.max_depth;
      if (!constant && !depth_stop && w >= 2.0 * params_.min_leaf) {
        if (auto split = best_split(p.samples, p.seed)) {
          node.feature = split->feature;
          node.threshold = split->threshold;
          std::vector<Sample> left, right;
          for (const auto& s : p.samples) {
            (X_(s.index, node.feature) <= node.threshold ? left : right).push_back(s);
          }
          node.left = static_cast<int>(tree.nodes.size());
          tree.nodes.emplace_back();
          node.right = static_cast<int>(tree.nodes.size());
          tree.nodes.emplace_back();
          // Child seeds depend only on the path from the root, so growth of a
          // subtree never depends on how deep its siblings were grown.
          stack.push_back({std::move(right), derive_seed(p.seed, 1), p.depth + 1, node.right});
          stack.push_back({std::move(left), derive_seed(p.seed, 0), p.depth + 1, node.left});
        }
      }
      tree.nodes[p.slot] = node;
    }
    return tree;
  }

 private:
  struct Split {
    int feature;
    double threshold;
    double score;
  };

  std::optional<Split> best_split(const std::vector<Sample>& samples, std::uint64_t seed) {
    const int d = static_cast<int>(X_.cols());
    Rng rng(seed);
    std::iota(order_.begin(), order_.end(), 0);
    for (int k = 0; k < mtry_; ++k) {
      const auto j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - k)));
      std::swap(order_[k], order_[j]);
    }

    double w = 0, s0 = 0, s1 = 0, q = 0;
    for (const auto& s : samples) {
      const double a = Y_(s.index, 0), b = Y_(s.index, 1);
      w += s.weight;
      s0 += s.weight * a;
      s1 += s.weight * b;
      q += s.weight * (a * a + b * b);
    }
    const double parent = q - (s0 * s0 + s1 * s1) / w;
    const double min_leaf = params_.min_leaf;

    std::optional<Split> best;
    buf_.resize(samples.size());
    for (int k = 0; k < mtry_; ++k) {
      const int f = order_[k];
      const auto col = X_.col(f);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        buf_[i] = {col(samples[i].index), samples[i].index, samples[i].weight};
      }
      std::sort(buf_.begin(), buf_.end(), [](const Candidate& a, const Candidate& b) {
        return a.value < b.value || (a.value == b.value && a.index < b.index);
      });
      if (buf_.front().value == buf_.back().value) continue;
      double lw = 0, l0 = 0, l1 = 0, lq = 0;
      for (std::size_t i = 0; i + 1 < buf_.size(); ++i) {
        const double a = Y_(buf_[i].index, 0), b = Y_(buf_[i].index, 1);
        lw += buf_[i].weight;
        l0 += buf_[i].weight * a;
        l1 += buf_[i].weight * b;
        lq += buf_[i].weight * (a * a + b * b);
        if (buf_[i].value == buf_[i + 1].value) continue;
        const double rw = w - lw;
        if (lw < min_leaf || rw < min_leaf) continue;
        const double r0 = s0 - l0, r1 = s1 - l1;
        const double score = (lq - (l0 * l0 + l1 * l1) / lw) + ((q - lq) - (r0 * r0 + r1 * r1) / rw);
        if (!best || score < best->score) {
          double thr = 0.5 * (buf_[i].value + buf_[i + 1].value);
          if (!(thr < buf_[i + 1].value)) thr = buf_[i].value;
          best = Split{f, thr, score};
        }
      }
    }
    if (!best || !(best->score < parent)) return std::nullopt;
    return best;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::MatrixX2d& Y_;
  const ForestParams& params_;
  int mtry_;
  std::vector<int> order_;
  std::vector<Candidate> buf_;
};

int resolve_mtry(const ForestParams& p, int d) {
  if (p.features_per_split > 0) return std::min(p.features_per_split, d);
  return std::max(1, (d + 2) / 3);
}

}  // namespace

Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::MatrixX2d& Y, const ForestParams& params) {
  params.validate();
  if (X.rows() == 0 || X.cols() == 0) throw FitError("forest needs at least one sample and feature");
  if (Y.rows() != X.rows()) throw FitError("feature and label row counts differ");
  const auto n = static_cast<int>(X.rows());
  Forest forest;
  forest.params = params;
  forest.n_features = static_cast<int>(X.cols());
  TreeBuilder builder(X, Y, params, resolve_mtry(params, forest.n_features));
  std::vector<double> counts(n);
  for (int t = 0; t < params.n_trees; ++t) {
    const std::uint64_t tree_seed = params.seed + static_cast<std::uint64_t>(t);
    std::vector<Sample> root;
    if (params.bootstrap) {
      Rng rng(tree_seed);
      std::fill(counts.begin(), counts.end(), 0.0);
      for (int i = 0; i < n; ++i) counts[rng.below(static_cast<std::uint64_t>(n))] += 1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[i] > 0) root.push_back({i, counts[i]});
      }
    } else {
      for (int i = 0; i < n; ++i) root.push_back({i, 1.0});
    }
    forest.trees.push_back(builder.build(std::move(root), derive_seed(tree_seed, 0x7EE)));
  }
  return forest;
}

Eigen::Vector2d predict_forest(const Forest& forest, const Eigen::RowVectorXd& x) {
  if (x.size() != forest.n_features) {
    throw SchemaError("forest expects " + std::to_string(forest.n_features) + " features, got " +
                      std::to_string(x.size()));
  }
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (const auto& tree : forest.trees) sum += tree.predict(x.data());
  return sum / static_cast<double>(forest.trees.size());
}

Eigen::MatrixX2d predict_truncated(const Forest& forest, const Eigen::MatrixXd& X, int n_trees,
                                   int depth_limit) {
  if (X.cols() != forest.n_features) {
    throw SchemaError("forest expects " + std::to_string(forest.n_features) + " features, got " +
                      std::to_string(X.cols()));
  }
  if (n_trees < 1 || n_trees > static_cast<int>(forest.trees.size())) {
    throw FitError("tree prefix out of range");
  }
  Eigen::MatrixX2d out(X.rows(), 2);
  Eigen::RowVectorXd row(X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    row = X.row(r);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (int t = 0; t < n_trees; ++t) sum += forest.trees[t].predict(row.data(), depth_limit);
    out.row(r) = (sum / static_cast<double>(n_trees)).transpose();
  }
  return out;
}

Eigen::MatrixX2d predict_forest(const Forest& forest, const Eigen::MatrixXd& X) {
  return predict_truncated(forest, X, static_cast<int>(forest.trees.size()), 0);
}

std::vector<std::pair<std::size_t, std::size_t>> fold_bounds(std::size_t n, int n_folds) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (int k = 0; k < n_folds; ++k) {
    out.emplace_back(k * n / n_folds, (k + 1) * n / n_folds);
  }
  return out;
}

namespace {

// Grid points that share everything but tree count and depth grow identical
// trees, so one large forest per group serves all of them.
bool same_growth(const ForestParams& a, const ForestParams& b) {
  return a.min_leaf == b.min_leaf && a.features_per_split == b.features_per_split &&
         a.bootstrap == b.bootstrap && a.seed == b.seed;
}

double mean_error(const Eigen::MatrixX2d& pred, const Eigen::MatrixX2d& truth) {
  return (pred - truth).rowwise().norm().mean();
}

}  // namespace

CVReport cross_validate(const Eigen::MatrixXd& X, const Eigen::MatrixX2d& Y,
                        const std::vector<ForestParams>& grid, int n_folds) {
  if (grid.empty()) throw CvError("empty hyper-parameter grid");
  if (n_folds < 2) throw CvError("need at least two folds");
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < static_cast<std::size_t>(n_folds)) {
    throw CvError("cross-validation needs at least " + std::to_string(n_folds) + " samples, got " +
                  std::to_string(n));
  }
  for (const auto& p : grid) p.validate();

  CVReport report;
  report.grid = grid;
  report.n_folds = n_folds;
  report.fold_errors.assign(grid.size(), std::vector<double>(n_folds, 0.0));

  std::vector<bool> done(grid.size(), false);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (done[g]) continue;
    std::vector<std::size_t> members;
    ForestParams big = grid[g];
    for (std::size_t h = g; h < grid.size(); ++h) {
      if (!done[h] && same_growth(grid[g], grid[h])) {
        members.push_back(h);
        done[h] = true;
        big.n_trees = std::max(big.n_trees, grid[h].n_trees);
        if (big.max_depth != 0) {
          big.max_depth = grid[h].max_depth == 0 ? 0 : std::max(big.max_depth, grid[h].max_depth);
        }
      }
    }
    for (int k = 0; k < n_folds; ++k) {
      const auto [lo, hi] = fold_bounds(n, n_folds)[k];
      const auto n_train = static_cast<Eigen::Index>(n - (hi - lo));
      Eigen::MatrixXd Xtr(n_train, X.cols());
      Eigen::MatrixX2d Ytr(n_train, 2);
      Xtr.topRows(lo) = X.topRows(lo);
      Xtr.bottomRows(n - hi) = X.bottomRows(n - hi);
      Ytr.topRows(lo) = Y.topRows(lo);
      Ytr.bottomRows(n - hi) = Y.bottomRows(n - hi);
      const Eigen::MatrixXd Xte = X.middleRows(lo, hi - lo);
      const Eigen::MatrixX2d Yte = Y.middleRows(lo, hi - lo);
      const Forest f = fit_forest(Xtr, Ytr, big);
      for (auto h : members) {
        report.fold_errors[h][k] =
            mean_error(predict_truncated(f, Xte, grid[h].n_trees, grid[h].max_depth), Yte);
      }
    }
  }
  report.mean_errors.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0;
    for (double e : report.fold_errors[g]) s += e;
    report.mean_errors[g] = s / n_folds;
    if (report.mean_errors[g] < report.mean_errors[report.chosen]) report.chosen = g;
  }
  return report;
}

std::vector<ForestParams> default_grid(std::uint64_t seed) {
  std::vector<ForestParams> grid;
  for (int trees : {50, 100, 200}) {
    for (int depth : {8, 16, 0}) {
      ForestParams p;
      p.n_trees = trees;
      p.max_depth = depth;
      p.seed = seed;
      grid.push_back(p);
    }
  }
  return grid;
}

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json node_to_json(const Tree& tree, int i) {
  const auto& n = tree.nodes[i];
  nlohmann::ordered_json j;
  j["mean"] = {n.mean[0], n.mean[1]};
  j["count"] = n.count;
  if (!n.is_leaf()) {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
  }
  return j;
}

int node_from_json(const nlohmann::json& j, Tree& tree, int depth) {
  const int slot = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  TreeNode n;
  n.depth = depth;
  n.mean[0] = j.at("mean").at(0).get<double>();
  n.mean[1] = j.at("mean").at(1).get<double>();
  n.count = j.at("count").get<int>();
  if (j.contains("feature")) {
    n.feature = j.at("feature").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.left = node_from_json(j.at("left"), tree, depth + 1);
    n.right = node_from_json(j.at("right"), tree, depth + 1);
  }
  tree.nodes[slot] = n;
  return slot;
}

}  // namespace

void write_forest(const Forest& forest, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["version"] = kFormatVersion;
  j["n_features"] = forest.n_features;
  j["params"] = {{"n_trees", forest.params.n_trees},
                 {"max_depth", forest.params.max_depth},
                 {"min_leaf", forest.params.min_leaf},
                 {"features_per_split", forest.params.features_per_split},
                 {"bootstrap", forest.params.bootstrap},
                 {"seed", forest.params.seed}};
  auto trees = nlohmann::json::array();
  for (const auto& t : forest.trees) trees.push_back(node_to_json(t, 0));
  j["trees"] = std::move(trees);
  io::write_file_atomic(path, j.dump() + "\n");
}

Forest read_forest(const std::filesystem::path& path) {
  Forest f;
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    if (j.at("version").get<int>() != kFormatVersion) {
      throw SchemaError(path.string() + ": unsupported forest version");
    }
    f.n_features = j.at("n_features").get<int>();
    const auto& p = j.at("params");
    f.params.n_trees = p.at("n_trees").get<int>();
    f.params.max_depth = p.at("max_depth").get<int>();
    f.params.min_leaf = p.at("min_leaf").get<int>();
    f.params.features_per_split = p.at("features_per_split").get<int>();
    f.params.bootstrap = p.at("bootstrap").get<bool>();
    f.params.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
      Tree t;
      node_from_json(tj, t, 0);
      f.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return f;
}

}  // namespace gridfloor::forest
