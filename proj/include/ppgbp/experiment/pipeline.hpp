#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppgbp/classifiers/forest.hpp"
#include "ppgbp/classifiers/svm.hpp"
#include "ppgbp/dataset.hpp"
#include "ppgbp/ensemble.hpp"
#include "ppgbp/experiment/config.hpp"
#include "ppgbp/nn/architectures.hpp"
#include "ppgbp/nn/model_io.hpp"
#include "ppgbp/nn/train.hpp"
#include "ppgbp/preprocess.hpp"
#include "ppgbp/provenance.hpp"
#include "ppgbp/synthetic.hpp"

namespace ppgbp::experiment {

/// Preprocessed segments split by subject.
struct Corpus {
  std::vector<Labeled<Signal>> train, test;
  SplitPlan plan;
};

inline std::vector<PpgSegment> load_raw_segments(const ExperimentConfig& c) {
  if (c.synthetic) {
    SyntheticConfig sc;
    sc.n_segments = c.synthetic_train + c.synthetic_test;
    sc.seed = c.synthetic_seed;
    return generate_synthetic(sc);
  }
  std::vector<PpgSegment> out;
  for (const auto& r : load_manifest(c.manifest)) out.push_back(load_segment(r));
  return out;
}

/// Preprocessing has no fitted state, so conditioning every segment before
/// the split cannot leak information across it.
inline Corpus build_corpus(const ExperimentConfig& c, const std::vector<PpgSegment>& raw) {
  std::vector<SegmentRecord> records;
  for (const auto& s : raw) records.push_back(s.record);
  Corpus corpus;
  corpus.plan = split_subjects(records, c.effective_train_fraction(), derive_seed(c.seed, hash_name("split")));
  const std::set<std::string> train_subjects(corpus.plan.train.begin(), corpus.plan.train.end());
  const Preprocessor pre(c.preprocess);
  for (const auto& s : raw) {
    Labeled<Signal> item{s.record.key(), pre.apply(s.samples), class_index(s.record.label)};
    (train_subjects.count(s.record.subject_id) ? corpus.train : corpus.test).push_back(std::move(item));
  }
  return corpus;
}

inline Corpus build_corpus(const ExperimentConfig& c) { return build_corpus(c, load_raw_segments(c)); }

inline std::vector<std::string> ids_of(std::span<const Labeled<Signal>> data) {
  std::vector<std::string> ids;
  for (const auto& d : data) ids.push_back(d.id);
  return ids;
}

inline std::uint64_t extractor_seed(std::uint64_t seed, nn::Extractor e, int batch_size) {
  return derive_seed(seed, hash_name(nn::to_string(e)) ^ static_cast<std::uint64_t>(batch_size));
}

inline nn::TrainConfig train_config(int batch_size, std::uint64_t seed, int max_epochs_override) {
  auto tc = nn::TrainConfig::for_batch_size(batch_size, seed);
  if (max_epochs_override > 0) tc.max_epochs = max_epochs_override;
  return tc;
}

/// A trained feature extractor and the ids it was fit on.
struct ExtractorFit {
  nn::Extractor extractor{};
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::unique_ptr<nn::Model> model;
  std::vector<nn::EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
  std::vector<std::string> fitted_ids;
  double train_seconds = 0.0;
};

inline std::vector<nn::Tensor> make_inputs(nn::Extractor e, std::span<const Signal* const> xs) {
  std::vector<nn::Tensor> out;
  out.reserve(xs.size());
  for (const auto* x : xs) out.push_back(nn::make_input(e, *x));
  return out;
}

inline std::shared_ptr<ExtractorFit> fit_extractor(nn::Extractor e, int batch_size, std::uint64_t seed,
                                                   std::span<const Labeled<Signal>> data, int max_epochs = 0) {
  std::vector<nn::Example> examples;
  examples.reserve(data.size());
  for (const auto& d : data) examples.push_back({d.id, nn::make_input(e, d.x), d.label});
  const auto t0 = std::chrono::steady_clock::now();
  auto trained = nn::train(nn::make_spec(e), examples, train_config(batch_size, seed, max_epochs));
  auto fit = std::make_shared<ExtractorFit>();
  fit->extractor = e;
  fit->batch_size = batch_size;
  fit->seed = seed;
  fit->model = std::make_unique<nn::Model>(std::move(trained.model));
  fit->history = std::move(trained.history);
  fit->best_epoch = trained.best_epoch;
  fit->stopped_early = trained.stopped_early;
  fit->fitted_ids = std::move(trained.fitted_ids);
  fit->train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

/// Memoizes extractor training on (extractor, batch size, seed, fit ids) so
/// heads sharing a trunk train it once. Results are identical to uncached
/// training.
class ExtractorCache {
 public:
  std::shared_ptr<ExtractorFit> get(nn::Extractor e, int batch_size, std::uint64_t seed,
                                    std::span<const Labeled<Signal>> data, int max_epochs) {
    std::uint64_t h = hash_name(nn::to_string(e));
    h = derive_seed(h, static_cast<std::uint64_t>(batch_size));
    h = derive_seed(h, seed);
    h = derive_seed(h, static_cast<std::uint64_t>(max_epochs));
    for (const auto& d : data) h = derive_seed(h, hash_name(d.id) ^ static_cast<std::uint64_t>(d.label));
    auto it = cache_.find(h);
    if (it != cache_.end()) return it->second;
    auto fit = fit_extractor(e, batch_size, seed, data, max_epochs);
    cache_.emplace(h, fit);
    return fit;
  }

  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::uint64_t, std::shared_ptr<ExtractorFit>> cache_;
};

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Extractor + head as one learner over preprocessed signals.
class Pipeline final : public BaseLearner<Signal> {
 public:
  Pipeline(nn::Extractor e, Head head, int batch_size, std::uint64_t seed, int max_epochs = 0,
           std::shared_ptr<ExtractorCache> cache = nullptr)
      : extractor_(e), head_(head), batch_size_(batch_size), seed_(seed), max_epochs_(max_epochs),
        cache_(std::move(cache)) {}

  std::string name() const override {
    std::string n(nn::display_name(extractor_));
    if (head_ != Head::Softmax) n += head_ == Head::Svm ? "-SVM" : "-RF";
    return n;
  }

  nn::Extractor extractor() const { return extractor_; }
  Head head() const { return head_; }
  const ExtractorFit& extractor_fit() const { return *fit_; }
  const std::optional<SvmModel>& svm() const { return svm_; }
  const std::optional<Forest>& forest() const { return forest_; }

  void fit(std::span<const Labeled<Signal>> data, FitAudit& audit) override {
    const auto es = extractor_seed(seed_, extractor_, batch_size_);
    fit_ = cache_ ? cache_->get(extractor_, batch_size_, es, data, max_epochs_)
                  : fit_extractor(extractor_, batch_size_, es, data, max_epochs_);
    audit.record("extractor:" + std::string(nn::to_string(extractor_)), fit_->fitted_ids);
    if (head_ == Head::Softmax) return;

    std::vector<const Signal*> xs;
    for (const auto& d : data) xs.push_back(&d.x);
    const auto features = features_of(xs);
    std::vector<int> labels;
    for (const auto& d : data) labels.push_back(d.label);
    if (head_ == Head::Svm) {
      std::vector<int> pm;
      for (int l : labels) pm.push_back(l == 1 ? 1 : -1);
      svm_ = svm_fit(features, pm, SvmConfig{});
    } else {
      ForestConfig fc;
      fc.seed = derive_seed(seed_, hash_name(name()) ^ static_cast<std::uint64_t>(batch_size_));
      forest_ = rf_fit(features, labels, fc);
    }
    audit.record("head:" + std::string(to_string(head_)), ids_of(data));
  }

  FeatureMatrix features_of(std::span<const Signal* const> xs) {
    const auto inputs = make_inputs(extractor_, xs);
    std::vector<const nn::Tensor*> ptrs;
    for (const auto& t : inputs) ptrs.push_back(&t);
    return nn::extract_features(*fit_->model, ptrs);
  }

  Proba predict_proba(const Signal& x) override {
    const Signal* p = &x;
    return predict_proba(std::span<const Signal* const>(&p, 1)).front();
  }

  std::vector<Proba> predict_proba(std::span<const Signal* const> xs) override {
    if (!fit_) fail(ErrorCode::InvalidSpec, "pipeline used before fit");
    std::vector<Proba> out;
    if (head_ == Head::Softmax) {
      constexpr std::size_t kChunk = 64;
      for (std::size_t i = 0; i < xs.size(); i += kChunk) {
        const auto chunk = xs.subspan(i, std::min(kChunk, xs.size() - i));
        const auto inputs = make_inputs(extractor_, chunk);
        std::vector<const nn::Tensor*> ptrs;
        for (const auto& t : inputs) ptrs.push_back(&t);
        for (const auto& p : fit_->model->predict_proba(nn::stack_batch(ptrs))) out.push_back(p);
      }
      return out;
    }
    for (const auto& f : features_of(xs)) {
      if (head_ == Head::Svm) {
        const double p1 = sigmoid(svm_predict(*svm_, f).decision);
        out.push_back({1.0 - p1, p1});
      } else {
        out.push_back(rf_predict(*forest_, f).probabilities);
      }
    }
    return out;
  }

  nlohmann::json to_json() override {
    nlohmann::json j = {{"format", "ppgbp-pipeline"},
                        {"version", 1},
                        {"extractor", nn::to_string(extractor_)},
                        {"head", to_string(head_)},
                        {"batch_size", batch_size_},
                        {"seed", seed_},
                        {"model", nn::to_json(*fit_->model)}};
    if (svm_) j["svm"] = ppgbp::to_json(*svm_);
    if (forest_) j["forest"] = ppgbp::to_json(*forest_);
    return j;
  }

  static std::unique_ptr<Pipeline> from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "ppgbp-pipeline") fail(ErrorCode::InvalidSpec, "not a pipeline file");
      auto p = std::make_unique<Pipeline>(nn::extractor_from_string(j.at("extractor").get<std::string>()),
                                          head_from_string(j.at("head").get<std::string>()),
                                          j.at("batch_size").get<int>(), j.at("seed").get<std::uint64_t>());
      p->fit_ = std::make_shared<ExtractorFit>();
      p->fit_->extractor = p->extractor_;
      p->fit_->batch_size = p->batch_size_;
      p->fit_->model = std::make_unique<nn::Model>(nn::model_from_json(j.at("model")));
      if (j.contains("svm")) p->svm_ = svm_from_json(j.at("svm"));
      if (j.contains("forest")) p->forest_ = forest_from_json(j.at("forest"));
      if ((p->head_ == Head::Svm && !p->svm_) || (p->head_ == Head::Rf && !p->forest_)) {
        fail(ErrorCode::InvalidSpec, "pipeline file lacks its head model");
      }
      return p;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidSpec, std::string("pipeline json: ") + e.what());
    }
  }

 private:
  nn::Extractor extractor_;
  Head head_;
  int batch_size_;
  std::uint64_t seed_;
  int max_epochs_;
  std::shared_ptr<ExtractorCache> cache_;
  std::shared_ptr<ExtractorFit> fit_;
  std::optional<SvmModel> svm_;
  std::optional<Forest> forest_;
};

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, path.string() + ": " + e.what());
  }
}

inline void save_pipeline(Pipeline& p, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string());
  std::ofstream out(dir / "pipeline.json");
  out << p.to_json().dump();
  if (!out) fail(ErrorCode::IoError, "cannot write " + (dir / "pipeline.json").string());
}

/// A saved base pipeline or stacked bundle, ready to score signals.
struct SavedPredictor {
  bool stacked = false;
  std::unique_ptr<Pipeline> pipeline;
  std::optional<StackedModel<Signal>> stack;

  std::vector<Proba> predict(std::span<const Signal* const> xs) {
    return stacked ? stack_predict(*stack, xs) : pipeline->predict_proba(xs);
  }
};

inline SavedPredictor load_predictor(const std::filesystem::path& dir) {
  SavedPredictor s;
  if (!std::filesystem::exists(dir / "bundle.json")) {
    s.pipeline = Pipeline::from_json(read_json(dir / "pipeline.json"));
    return s;
  }
  const auto bundle = read_json(dir / "bundle.json");
  try {
    if (bundle.at("format").get<std::string>() != "ppgbp-stack") fail(ErrorCode::InvalidSpec, "not a stack bundle");
    StackedModel<Signal> m;
    for (const auto& b : bundle.at("base"))
      m.base.push_back(Pipeline::from_json(read_json(dir / b.at("file").get<std::string>())));
    m.meta = std::make_unique<nn::Model>(nn::model_from_json(read_json(dir / bundle.at("meta").get<std::string>())));
    m.fold1_ids = bundle.at("fold1_ids").get<std::vector<std::string>>();
    m.fold2_ids = bundle.at("fold2_ids").get<std::vector<std::string>>();
    s.stacked = true;
    s.stack = std::move(m);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("bundle json: ") + e.what());
  }
  return s;
}

}  // namespace ppgbp::experiment
