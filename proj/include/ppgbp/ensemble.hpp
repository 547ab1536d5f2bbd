#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppgbp/error.hpp"
#include "ppgbp/nn/model_io.hpp"
#include "ppgbp/nn/train.hpp"
#include "ppgbp/provenance.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp {

using Proba = std::array<double, 2>;

/// A sample with its provenance id and class index (0 = PreHypertension).
template <typename X>
struct Labeled {
  std::string id;
  X x;
  int label = 0;
};

/// Anything that can be fit on labelled samples and emit class
/// probabilities.
template <typename X>
class BaseLearner {
 public:
  virtual ~BaseLearner() = default;
  virtual std::string name() const = 0;
  /// Must record every sample id it uses in `audit`.
  virtual void fit(std::span<const Labeled<X>> data, FitAudit& audit) = 0;
  virtual Proba predict_proba(const X& x) = 0;
  virtual std::vector<Proba> predict_proba(std::span<const X* const> xs) {
    std::vector<Proba> out;
    out.reserve(xs.size());
    for (const auto* x : xs) out.push_back(predict_proba(*x));
    return out;
  }
  /// Serialized learner for bundles; learners without a format return null.
  virtual nlohmann::json to_json() { return nullptr; }
};

struct StackConfig {
  double fold2_fraction = 0.25;
  std::vector<int> meta_widths = {16, 16, 8, 2};
  int meta_epochs = 50;
  int meta_batch_size = 16;
  nn::AdamConfig adam{};
  std::uint64_t seed = 0;
  int max_redraws = 10;
};

struct FoldSplit {
  std::vector<std::size_t> fold1, fold2;
  int attempt = 0;
};

/// |fold2| = round(fraction * n), drawn by a seeded shuffle; redrawn with a
/// derived seed while either fold lacks a class.
template <typename X>
FoldSplit split_folds(std::span<const Labeled<X>> data, double fraction, std::uint64_t seed, int max_redraws = 10) {
  if (!(fraction > 0.0 && fraction < 1.0)) fail(ErrorCode::ConfigError, "fold2_fraction must lie in (0,1)");
  const std::size_t n = data.size();
  const auto n2 = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n2 < 2 || n - n2 < 2) fail(ErrorCode::FoldDegenerate, "too few samples for two folds", static_cast<long long>(n));
  auto has_both = [&](const std::vector<std::size_t>& idx) {
    bool a = false, b = false;
    for (auto i : idx) (data[i].label == 0 ? a : b) = true;
    return a && b;
  };
  for (int attempt = 0; attempt < max_redraws; ++attempt) {
    Rng rng(derive_seed(seed, 0x5f01d + static_cast<std::uint64_t>(attempt)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    FoldSplit s;
    s.fold2.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n2));
    s.fold1.assign(order.begin() + static_cast<std::ptrdiff_t>(n2), order.end());
    std::sort(s.fold1.begin(), s.fold1.end());
    std::sort(s.fold2.begin(), s.fold2.end());
    s.attempt = attempt;
    if (has_both(s.fold1) && has_both(s.fold2)) return s;
  }
  fail(ErrorCode::FoldDegenerate, "a fold stayed single-class after redraws", max_redraws);
}

inline nn::ModelSpec meta_spec(std::size_t n_base, const std::vector<int>& widths) {
  if (widths.empty() || widths.back() != 2) fail(ErrorCode::InvalidSpec, "meta network must end in 2 units");
  nn::ModelSpec s;
  s.name = "meta";
  s.input = {2 * n_base, 1};
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) s.layers.push_back(nn::LayerSpec::dense(widths[i], nn::ActivationKind::Relu));
  s.layers.push_back(nn::LayerSpec::dense(widths.back()));
  s.layers.push_back(nn::LayerSpec::act(nn::ActivationKind::Softmax));
  s.feature_tap = static_cast<int>(widths.size()) - 2;
  return s;
}

template <typename X>
struct StackedModel {
  std::vector<std::unique_ptr<BaseLearner<X>>> base;
  std::unique_ptr<nn::Model> meta;
  std::vector<nn::EpochRecord> meta_history;
  /// Sample ids of each fold, and the fold-2 meta features/labels the meta
  /// network was trained on.
  std::vector<std::string> fold1_ids, fold2_ids;
  std::vector<std::vector<double>> fold2_features;
  std::vector<int> fold2_labels;

  std::size_t input_width() const { return 2 * base.size(); }

  /// Meta-network probabilities for one concatenated base-probability row.
  Proba meta_predict(std::span<const double> features) {
    if (features.size() != input_width()) fail(ErrorCode::ShapeMismatch, "meta feature width");
    nn::Tensor t({1, features.size(), 1}, std::vector<double>(features.begin(), features.end()));
    const auto p = meta->predict_proba(t);
    return p.front();
  }
};

template <typename X>
std::vector<double> base_features(std::vector<std::unique_ptr<BaseLearner<X>>>& base, const X& x) {
  std::vector<double> row;
  for (auto& b : base) {
    const auto p = b->predict_proba(x);
    row.insert(row.end(), p.begin(), p.end());
  }
  return row;
}

template <typename X>
std::vector<std::vector<double>> base_features(std::vector<std::unique_ptr<BaseLearner<X>>>& base,
                                               std::span<const X* const> xs) {
  std::vector<std::vector<double>> rows(xs.size());
  for (auto& b : base) {
    const auto ps = b->predict_proba(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) rows[i].insert(rows[i].end(), ps[i].begin(), ps[i].end());
  }
  return rows;
}

/// Base learners are fit on fold 1 only. Their fold-2 probability vectors,
/// concatenated, train the meta network on the fold-2 labels.
template <typename X>
StackedModel<X> stack_fit(std::span<const Labeled<X>> data, std::vector<std::unique_ptr<BaseLearner<X>>> learners,
                          const StackConfig& config, FitAudit& audit) {
  if (learners.empty()) fail(ErrorCode::ConfigError, "stacking needs at least one base learner");
  const auto folds = split_folds(data, config.fold2_fraction, config.seed, config.max_redraws);
  std::vector<Labeled<X>> fold1;
  StackedModel<X> model;
  for (auto i : folds.fold1) {
    fold1.push_back(data[i]);
    model.fold1_ids.push_back(data[i].id);
  }
  for (auto& l : learners) l->fit(std::span<const Labeled<X>>(fold1), audit);
  model.base = std::move(learners);

  std::vector<const X*> xs;
  for (auto i : folds.fold2) {
    xs.push_back(&data[i].x);
    model.fold2_ids.push_back(data[i].id);
    model.fold2_labels.push_back(data[i].label);
  }
  model.fold2_features = base_features(model.base, std::span<const X* const>(xs));

  std::vector<nn::Example> examples;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& f = model.fold2_features[k];
    examples.push_back({model.fold2_ids[k], nn::Tensor({f.size(), 1}, f), model.fold2_labels[k]});
  }
  nn::TrainConfig tc;
  tc.batch_size = config.meta_batch_size;
  tc.max_epochs = config.meta_epochs;
  tc.adam = config.adam;
  tc.seed = derive_seed(config.seed, 0x3e7a);
  tc.use_early_stopping = false;
  tc.validation_fraction = 0.0;
  auto trained = nn::train(meta_spec(model.base.size(), config.meta_widths), examples, tc);
  audit.record("meta", trained.fitted_ids);
  model.meta = std::make_unique<nn::Model>(std::move(trained.model));
  model.meta_history = std::move(trained.history);
  return model;
}

template <typename X>
std::pair<int, Proba> stack_predict(StackedModel<X>& model, const X& x) {
  const auto p = model.meta_predict(base_features(model.base, x));
  return {p[1] > p[0] ? 1 : 0, p};
}

template <typename X>
std::vector<Proba> stack_predict(StackedModel<X>& model, std::span<const X* const> xs) {
  const auto rows = base_features(model.base, xs);
  std::vector<Proba> out;
  for (const auto& r : rows) out.push_back(model.meta_predict(r));
  return out;
}

/// Writes base_<i>.json for each base learner, meta.json and a bundle.json
/// that references them.
template <typename X>
void save_bundle(StackedModel<X>& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string());
  auto write = [&](const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) fail(ErrorCode::IoError, "cannot write " + p.string());
    out << j.dump();
    if (!out) fail(ErrorCode::IoError, "write failed: " + p.string());
  };
  nlohmann::json base = nlohmann::json::array();
  for (std::size_t i = 0; i < model.base.size(); ++i) {
    const std::string file = "base_" + std::to_string(i) + ".json";
    write(dir / file, model.base[i]->to_json());
    base.push_back({{"name", model.base[i]->name()}, {"file", file}});
  }
  write(dir / "meta.json", nn::to_json(*model.meta));
  write(dir / "bundle.json", {{"format", "ppgbp-stack"},
                              {"version", 1},
                              {"base", base},
                              {"meta", "meta.json"},
                              {"fold1_ids", model.fold1_ids},
                              {"fold2_ids", model.fold2_ids}});
}

}  // namespace ppgbp
