#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace gridfloor::forest {

/// Growth settings. max_depth 0 means unlimited; features_per_split 0 means
/// ceil(d / 3).
struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;
  int min_leaf = 1;
  int features_per_split = 0;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ForestParams&) const = default;
};

/// Split nodes keep the mean of their samples too, so a tree can be evaluated
/// as if it had been grown to a smaller depth.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double mean[2] = {0.0, 0.0};
  int count = 0;
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  /// Leaf mean reached by `x`, stopping at `depth_limit` when it is > 0.
  Eigen::Vector2d predict(const double* x, int depth_limit = 0) const;
  int depth() const;
};

struct Forest {
  ForestParams params;
  int n_features = 0;
  std::vector<Tree> trees;
};

/// Features as rows of X (n x d), labels as rows of Y (n x 2).
Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::MatrixX2d& Y, const ForestParams& params);

/// Mean over trees of leaf predictions. Throws SchemaError on width mismatch.
Eigen::Vector2d predict_forest(const Forest& forest, const Eigen::RowVectorXd& x);
Eigen::MatrixX2d predict_forest(const Forest& forest, const Eigen::MatrixXd& X);

/// Prediction using only the first `n_trees` trees truncated at `depth_limit`.
Eigen::MatrixX2d predict_truncated(const Forest& forest, const Eigen::MatrixXd& X, int n_trees,
                                   int depth_limit);

struct CVReport {
  std::vector<ForestParams> grid;
  std::vector<std::vector<double>> fold_errors;  // [grid point][fold]
  std::vector<double> mean_errors;
  std::size_t chosen = 0;
  int n_folds = 10;

  const ForestParams& best() const { return grid.at(chosen); }
};

/// Contiguous-block folds in sample order: fold k holds [k n / K, (k+1) n / K).
std::vector<std::pair<std::size_t, std::size_t>> fold_bounds(std::size_t n, int n_folds);

/// K-fold grid search on mean held-out euclidean error.
CVReport cross_validate(const Eigen::MatrixXd& X, const Eigen::MatrixX2d& Y,
                        const std::vector<ForestParams>& grid, int n_folds = 10);

/// Default search grid: {50, 100, 200} trees x depth {8, 16, unlimited}.
std::vector<ForestParams> default_grid(std::uint64_t seed);

void write_forest(const Forest& forest, const std::filesystem::path& path);
Forest read_forest(const std::filesystem::path& path);

}  // namespace gridfloor::forest
