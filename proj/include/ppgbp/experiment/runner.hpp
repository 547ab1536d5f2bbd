#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "ppgbp/ensemble.hpp"
#include "ppgbp/error.hpp"
#include "ppgbp/experiment/config.hpp"
#include "ppgbp/experiment/pipeline.hpp"
#include "ppgbp/experiment/report.hpp"
#include "ppgbp/metrics.hpp"

namespace ppgbp::experiment {

/// Shared state for runs over one corpus.
struct RunContext {
  Corpus corpus;
  std::set<std::string> test_ids;
  std::shared_ptr<ExtractorCache> cache = std::make_shared<ExtractorCache>();

  explicit RunContext(Corpus c) : corpus(std::move(c)) {
    for (const auto& t : corpus.test) test_ids.insert(t.id);
  }
};

inline std::string table_label(nn::Extractor e, Head h, bool stacked) {
  std::string s = stacked ? "Meta " : "";
  s += nn::display_name(e);
  if (h == Head::Svm) s += "-SVM";
  if (h == Head::Rf) s += "-RF";
  return s;
}

inline std::vector<ClassResult> evaluate(const std::vector<Proba>& probs, std::span<const Labeled<Signal>> data) {
  std::vector<BinaryClass> pred, truth;
  for (std::size_t i = 0; i < data.size(); ++i) {
    pred.push_back(class_from_index(probs[i][1] > probs[i][0] ? 1 : 0));
    truth.push_back(class_from_index(data[i].label));
  }
  std::vector<ClassResult> out;
  for (auto cls : {BinaryClass::PreHypertension, BinaryClass::Hypertension}) {
    const auto cm = confusion(pred, truth, cls);
    out.push_back({cm, compute_metrics(cm)});
  }
  return out;
}

namespace detail {

inline std::vector<StageCount> summarize(const FitAudit& a) {
  std::vector<StageCount> out;
  for (const auto& s : a.stages()) out.push_back({s.name, s.ids.size()});
  return out;
}

inline std::vector<const Signal*> signals(std::span<const Labeled<Signal>> data) {
  std::vector<const Signal*> xs;
  for (const auto& d : data) xs.push_back(&d.x);
  return xs;
}

inline RunReport report_skeleton(const ExperimentConfig& c) {
  RunReport r;
  r.kind = c.stacked ? "meta" : "base";
  r.model = table_label(c.extractor, c.head, c.stacked);
  r.head = std::string(to_string(c.head));
  r.batch_size = c.batch_size;
  r.seed = c.seed;
  r.config = c;
  return r;
}

}  // namespace detail

/// Extractor + head trained on the training split, scored on the test split.
inline RunReport run_base(RunContext& ctx, const ExperimentConfig& c, const std::filesystem::path& model_dir = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = detail::report_skeleton(c);
  const std::span<const Labeled<Signal>> train(ctx.corpus.train), test(ctx.corpus.test);
  Pipeline p(c.extractor, c.head, c.batch_size, c.seed, c.max_epochs, ctx.cache);
  p.fit(train, r.fit_audit);
  r.fit_audit.assert_disjoint(ctx.test_ids, "", "test split leakage");
  r.leakage_checked = true;
  if (!model_dir.empty()) save_pipeline(p, model_dir);
  const auto xs = detail::signals(test);
  r.classes = evaluate(p.predict_proba(std::span<const Signal* const>(xs)), test);
  const auto& fit = p.extractor_fit();
  r.curve = fit.history;
  r.best_epoch = fit.best_epoch;
  r.stopped_early = fit.stopped_early;
  r.n_train = train.size();
  r.n_test = test.size();
  r.audit = detail::summarize(r.fit_audit);
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline StackConfig stack_config(const ExperimentConfig& c) {
  StackConfig sc;
  sc.seed = derive_seed(c.seed, hash_name("stack"));
  return sc;
}

/// The extractor + head pipeline as the base learner of a stacked model.
/// Scored on the untouched test split; the fold-2 resubstitution accuracy
/// is kept as a diagnostic.
inline RunReport run_stacked(RunContext& ctx, const ExperimentConfig& c, const std::filesystem::path& model_dir = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = detail::report_skeleton(c);
  const std::span<const Labeled<Signal>> train(ctx.corpus.train), test(ctx.corpus.test);
  std::vector<std::unique_ptr<BaseLearner<Signal>>> learners;
  learners.push_back(std::make_unique<Pipeline>(c.extractor, c.head, c.batch_size, c.seed, c.max_epochs, ctx.cache));
  auto sm = stack_fit(train, std::move(learners), stack_config(c), r.fit_audit);

  r.fit_audit.assert_disjoint(ctx.test_ids, "", "test split leakage");
  const std::set<std::string> fold2(sm.fold2_ids.begin(), sm.fold2_ids.end());
  r.fit_audit.assert_disjoint(fold2, "extractor:", "fold-2 leakage into base learner");
  r.fit_audit.assert_disjoint(fold2, "head:", "fold-2 leakage into base learner");
  r.leakage_checked = true;
  if (!model_dir.empty()) save_bundle(sm, model_dir);

  const auto xs = detail::signals(test);
  r.classes = evaluate(stack_predict(sm, std::span<const Signal* const>(xs)), test);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < sm.fold2_features.size(); ++i) {
    const auto p = sm.meta_predict(sm.fold2_features[i]);
    correct += (p[1] > p[0] ? 1 : 0) == sm.fold2_labels[i] ? 1 : 0;
  }
  r.fold2_accuracy = Ratio::make(correct, static_cast<std::int64_t>(sm.fold2_features.size()));
  const auto& fit = static_cast<Pipeline&>(*sm.base.front()).extractor_fit();
  r.curve = fit.history;
  r.best_epoch = fit.best_epoch;
  r.stopped_early = fit.stopped_early;
  r.n_train = train.size();
  r.n_test = test.size();
  r.audit = detail::summarize(r.fit_audit);
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline RunReport run_in_context(RunContext& ctx, const ExperimentConfig& c, const std::filesystem::path& model_dir = {}) {
  return c.stacked ? run_stacked(ctx, c, model_dir) : run_base(ctx, c, model_dir);
}

/// ingest -> split -> preprocess -> (STFT) -> train -> head -> (stack) ->
/// evaluate. Errors propagate. A non-empty `model_dir` receives the fitted
/// model (pipeline.json, or bundle.json for stacked runs).
inline RunReport run_experiment(const ExperimentConfig& c, const std::filesystem::path& model_dir = {}) {
  validate(c);
  RunContext ctx(build_corpus(c));
  return run_in_context(ctx, c, model_dir);
}

/// Scores a saved model on the test split of `c`.
inline RunReport evaluate_saved(const ExperimentConfig& c, const std::filesystem::path& model_dir) {
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = build_corpus(c);
  auto predictor = load_predictor(model_dir);
  auto r = detail::report_skeleton(c);
  r.kind = predictor.stacked ? "meta" : "base";
  const std::span<const Labeled<Signal>> test(corpus.test);
  const auto xs = detail::signals(test);
  r.classes = evaluate(predictor.predict(std::span<const Signal* const>(xs)), test);
  r.n_train = corpus.train.size();
  r.n_test = corpus.test.size();
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Every base row (extractor x batch size x head), then the stacked rows
/// (extractor x head at stack_batch_size).
inline std::vector<ExperimentConfig> expand(const GridConfig& g) {
  std::vector<ExperimentConfig> out;
  for (auto e : g.extractors)
    for (int b : g.batch_sizes)
      for (auto h : g.heads) {
        auto c = g.base;
        c.extractor = e;
        c.batch_size = b;
        c.head = h;
        c.stacked = false;
        out.push_back(c);
      }
  if (g.stacked)
    for (auto e : g.extractors)
      for (auto h : g.heads) {
        auto c = g.base;
        c.extractor = e;
        c.batch_size = g.stack_batch_size;
        c.head = h;
        c.stacked = true;
        out.push_back(c);
      }
  return out;
}

namespace detail {

/// Configs that agree on this key share a corpus.
inline std::string corpus_key(const ExperimentConfig& c) {
  auto j = to_json(c);
  for (const char* k : {"extractor", "head", "batch_size", "stacked", "out", "max_epochs"}) j.erase(k);
  return j.dump();
}

}  // namespace detail

/// Runs every config; a failing run becomes a "failed" row and the rest
/// continue. `progress` (optional) is called after each run.
inline std::vector<RunReport> run_grid(const std::vector<ExperimentConfig>& configs,
                                       const std::function<void(const RunReport&, std::size_t, std::size_t)>& progress = {}) {
  std::map<std::string, std::shared_ptr<RunContext>> contexts;
  std::vector<RunReport> out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& c = configs[i];
    RunReport r;
    try {
      validate(c);
      const auto key = detail::corpus_key(c);
      auto it = contexts.find(key);
      if (it == contexts.end()) it = contexts.emplace(key, std::make_shared<RunContext>(build_corpus(c))).first;
      r = run_in_context(*it->second, c);
    } catch (const Error& e) {
      r = detail::report_skeleton(c);
      r.status = "failed";
      r.error = e.what();
      r.error_code = std::string(to_string(e.code()));
    } catch (const std::exception& e) {
      r = detail::report_skeleton(c);
      r.status = "failed";
      r.error = e.what();
      r.error_code = "Internal";
    }
    if (progress) progress(r, i + 1, configs.size());
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RunReport> run_grid(const GridConfig& g,
                                       const std::function<void(const RunReport&, std::size_t, std::size_t)>& progress = {}) {
  return run_grid(expand(g), progress);
}

}  // namespace ppgbp::experiment
