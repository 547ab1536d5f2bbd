#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "ppgbp/classifiers/features.hpp"
#include "ppgbp/error.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp {

struct ForestConfig {
  int n_estimators = 300;
  int max_depth = 100;
  int min_samples_split = 3;
  /// Features tried per split; 0 selects floor(sqrt(m)).
  int max_features = 0;
  std::uint64_t seed = 0;
  bool bootstrap = true;

  bool operator==(const ForestConfig&) const = default;
};

inline int features_per_split(const ForestConfig& c, std::size_t m) {
  if (c.max_features > 0) return std::min<int>(c.max_features, static_cast<int>(m));
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(m)))));
}

/// Binary CART tree with Gini splits. Samples with x[feature] <= threshold
/// go left.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<int, 2> votes{};  ///< class counts of the samples that reached the node
    int depth = 0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const Node&) const = default;
  };

  /// Grows the tree on rows `sample` of (x, y); indices may repeat.
  void fit(const FeatureMatrix& x, std::span<const int> y, std::vector<std::size_t> sample, int max_depth,
           int min_samples_split, int k_features, Rng& rng) {
    if (sample.empty()) fail(ErrorCode::EmptyTrainingSet, "tree fit on an empty sample");
    if (min_samples_split < 2) fail(ErrorCode::ConfigError, "min_samples_split must be >= 2");
    nodes_.clear();
    width_ = x.front().size();
    grow(x, y, sample, 0, max_depth, min_samples_split, k_features, rng);
  }

  int predict(std::span<const double> row) const { return majority(leaf_for(row).votes); }
  const Node& leaf_for(std::span<const double> row) const {
    if (row.size() != width_) fail(ErrorCode::ShapeMismatch, "feature width differs from training");
    const Node* n = &nodes_.front();
    while (!n->is_leaf()) n = &nodes_[static_cast<std::size_t>(row[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right)];
    return *n;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t width() const { return width_; }
  int depth() const {
    int d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
  }

  /// Ties go to class 0 (PreHypertension).
  static int majority(const std::array<int, 2>& v) { return v[1] > v[0] ? 1 : 0; }

  nlohmann::json to_json() const { return node_json(0); }
  static DecisionTree from_json(const nlohmann::json& j, std::size_t width) {
    DecisionTree t;
    t.width_ = width;
    t.read_node(j, 0);
    return t;
  }

  bool operator==(const DecisionTree&) const = default;

 private:
  static double gini(const std::array<int, 2>& c) {
    const double n = c[0] + c[1];
    if (n == 0) return 0.0;
    const double p = c[0] / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
  }

  int grow(const FeatureMatrix& x, std::span<const int> y, std::vector<std::size_t>& idx, int depth, int max_depth,
           int min_split, int k, Rng& rng) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Node node;
    node.depth = depth;
    for (auto i : idx) ++node.votes[static_cast<std::size_t>(y[i])];
    const bool pure = node.votes[0] == 0 || node.votes[1] == 0;
    if (pure || depth >= max_depth || static_cast<int>(idx.size()) < min_split) {
      nodes_[static_cast<std::size_t>(id)] = node;
      return id;
    }

    // Features are visited in random order; at least k non-constant ones
    // are evaluated when that many exist.
    std::vector<int> order(width_);
    std::iota(order.begin(), order.end(), 0);
    const double n = static_cast<double>(idx.size());
    double best_score = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    int evaluated = 0;
    std::vector<std::pair<double, int>> vals(idx.size());
    for (std::size_t f = 0; f < width_ && evaluated < k; ++f) {
      const auto pick = f + static_cast<std::size_t>(rng.below(width_ - f));
      std::swap(order[f], order[pick]);
      const auto feat = static_cast<std::size_t>(order[f]);
      for (std::size_t i = 0; i < idx.size(); ++i) vals[i] = {x[idx[i]][feat], y[idx[i]]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      ++evaluated;
      std::array<int, 2> left{}, right = node.votes;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        ++left[static_cast<std::size_t>(vals[i].second)];
        --right[static_cast<std::size_t>(vals[i].second)];
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double score = (nl * gini(left) + (n - nl) * gini(right)) / n;
        if (score < best_score) {
          best_score = score;
          best_feature = static_cast<int>(feat);
          double t = 0.5 * (vals[i].first + vals[i + 1].first);
          if (!(t < vals[i + 1].first)) t = vals[i].first;
          best_threshold = t;
        }
      }
    }
    if (best_feature < 0) {
      nodes_[static_cast<std::size_t>(id)] = node;
      return id;
    }
    std::vector<std::size_t> li, ri;
    for (auto i : idx) (x[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? li : ri).push_back(i);
    node.feature = best_feature;
    node.threshold = best_threshold;
    nodes_[static_cast<std::size_t>(id)] = node;
    const int l = grow(x, y, li, depth + 1, max_depth, min_split, k, rng);
    const int r = grow(x, y, ri, depth + 1, max_depth, min_split, k, rng);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  nlohmann::json node_json(int id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    nlohmann::json j = {{"votes", n.votes}, {"depth", n.depth}};
    if (!n.is_leaf()) {
      j["feature"] = n.feature;
      j["threshold"] = n.threshold;
      j["left"] = node_json(n.left);
      j["right"] = node_json(n.right);
    }
    return j;
  }

  int read_node(const nlohmann::json& j, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Node n;
    n.votes = j.at("votes").get<std::array<int, 2>>();
    n.depth = j.at("depth").get<int>();
    if (n.depth != depth) fail(ErrorCode::InvalidSpec, "tree json: inconsistent depth");
    if (j.contains("feature")) {
      n.feature = j.at("feature").get<int>();
      if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= width_) fail(ErrorCode::InvalidSpec, "tree json: bad feature");
      n.threshold = j.at("threshold").get<double>();
      n.left = read_node(j.at("left"), depth + 1);
      n.right = read_node(j.at("right"), depth + 1);
    }
    nodes_[static_cast<std::size_t>(id)] = n;
    return id;
  }

  std::vector<Node> nodes_;
  std::size_t width_ = 0;
};

struct ForestPrediction {
  int label = 0;
  double vote_fraction = 0.0;  ///< share of trees voting for `label`
  std::array<double, 2> probabilities{};
};

struct Forest {
  ForestConfig config;
  std::vector<DecisionTree> trees;
  std::size_t width = 0;

  bool operator==(const Forest&) const = default;
};

/// Each tree is grown on its own bootstrap sample with an independent
/// seeded stream, so the result depends only on (data, config).
inline Forest rf_fit(const FeatureMatrix& x, std::span<const int> y, const ForestConfig& config) {
  if (x.empty()) fail(ErrorCode::EmptyTrainingSet, "random forest needs training samples");
  const std::size_t m = detail::check_features(x, y.size());
  if (config.n_estimators < 1) fail(ErrorCode::ConfigError, "n_estimators must be >= 1");
  if (config.max_depth < 0) fail(ErrorCode::ConfigError, "max_depth must be >= 0");
  for (int label : y)
    if (label != 0 && label != 1) fail(ErrorCode::DegenerateLabels, "labels must be 0 or 1");
  Forest forest{config, {}, m};
  const int k = features_per_split(config, m);
  const std::size_t n = x.size();
  for (int t = 0; t < config.n_estimators; ++t) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> sample(n);
    if (config.bootstrap) {
      for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    DecisionTree tree;
    tree.fit(x, y, std::move(sample), config.max_depth, config.min_samples_split, k, rng);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

/// Majority vote over trees; an even split goes to class 0.
inline ForestPrediction rf_predict(const Forest& forest, std::span<const double> row) {
  if (row.size() != forest.width) fail(ErrorCode::ShapeMismatch, "feature width differs from training");
  std::array<int, 2> votes{};
  for (const auto& t : forest.trees) ++votes[static_cast<std::size_t>(t.predict(row))];
  const double total = static_cast<double>(forest.trees.size());
  ForestPrediction p;
  p.label = DecisionTree::majority(votes);
  p.probabilities = {votes[0] / total, votes[1] / total};
  p.vote_fraction = p.probabilities[static_cast<std::size_t>(p.label)];
  return p;
}

inline nlohmann::json to_json(const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) trees.push_back(t.to_json());
  return {{"format", "ppgbp-forest"},
          {"version", 1},
          {"n_estimators", f.config.n_estimators},
          {"max_depth", f.config.max_depth},
          {"min_samples_split", f.config.min_samples_split},
          {"max_features", f.config.max_features},
          {"seed", f.config.seed},
          {"bootstrap", f.config.bootstrap},
          {"width", f.width},
          {"trees", trees}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ppgbp-forest") fail(ErrorCode::InvalidSpec, "not a forest file");
    Forest f;
    f.config.n_estimators = j.at("n_estimators").get<int>();
    f.config.max_depth = j.at("max_depth").get<int>();
    f.config.min_samples_split = j.at("min_samples_split").get<int>();
    f.config.max_features = j.at("max_features").get<int>();
    f.config.seed = j.at("seed").get<std::uint64_t>();
    f.config.bootstrap = j.at("bootstrap").get<bool>();
    f.width = j.at("width").get<std::size_t>();
    for (const auto& t : j.at("trees")) f.trees.push_back(DecisionTree::from_json(t, f.width));
    return f;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("forest json: ") + e.what());
  }
}

}  // namespace ppgbp
