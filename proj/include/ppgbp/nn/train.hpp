#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ppgbp/error.hpp"
#include "ppgbp/nn/model.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp::nn {

/// One labelled network input. `id` is the provenance tag of the source
/// segment.
struct Example {
  std::string id;
  Tensor input;  ///< [C x L]
  int label = 0;
};

struct EarlyStopping {
  int patience = 10;
  double min_delta = 1e-4;
};

struct TrainConfig {
  int batch_size = 16;
  int max_epochs = 100;
  AdamConfig adam{};
  EarlyStopping early_stop{};
  std::uint64_t seed = 0;
  double validation_fraction = 0.15;
  /// Upper bound on optimizer steps per epoch.
  int max_steps_per_epoch = 1000;
  bool use_early_stopping = true;

  /// Batch 16 trains for at most 100 epochs, batch 3 for at most 300.
  static TrainConfig for_batch_size(int batch_size, std::uint64_t seed) {
    TrainConfig c;
    c.batch_size = batch_size;
    c.max_epochs = batch_size <= 3 ? 300 : 100;
    c.seed = seed;
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double train_accuracy = 0.0;
};

struct TrainedModel {
  Model model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
  /// Every example id that influenced a parameter (training + validation).
  std::vector<std::string> fitted_ids;
};

namespace detail {

inline Tensor gather(const std::vector<Example>& data, const std::vector<std::size_t>& idx, std::size_t begin,
                     std::size_t end) {
  std::vector<const Tensor*> ptrs;
  for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&data[idx[i]].input);
  return stack_batch(ptrs);
}

inline std::vector<int> gather_labels(const std::vector<Example>& data, const std::vector<std::size_t>& idx,
                                      std::size_t begin, std::size_t end) {
  std::vector<int> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(data[idx[i]].label);
  return out;
}

inline double mean_loss(Model& model, const std::vector<Example>& data, const std::vector<std::size_t>& idx) {
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t i = 0; i < idx.size(); i += kChunk) {
    const std::size_t end = std::min(idx.size(), i + kChunk);
    const auto logits = model.forward(gather(data, idx, i, end), Mode::Infer);
    const auto labels = gather_labels(data, idx, i, end);
    total += batch_cross_entropy(logits, labels).loss * static_cast<double>(end - i);
  }
  return total / static_cast<double>(idx.size());
}

using Snapshot = std::vector<Buffer>;

inline Snapshot snapshot(Model& m) {
  Snapshot s;
  for (auto& [name, t] : m.state()) s.push_back(t->data);
  return s;
}

inline void restore(Model& m, const Snapshot& s) {
  auto st = m.state();
  for (std::size_t i = 0; i < st.size(); ++i) st[i].second->data = s[i];
}

/// Mini-batches over `order`; a trailing batch of one joins its predecessor
/// so batch statistics are always defined.
inline std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) out.emplace_back(i, std::min(n, i + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

}  // namespace detail

/// Mini-batch Adam on softmax cross-entropy. A seeded fraction of `data` is
/// held out for validation; training stops after `patience` epochs without
/// a validation improvement of at least min_delta and the parameters of the
/// best epoch are returned. With early stopping off, validation_fraction may
/// be 0 and the final parameters are returned.
inline TrainedModel train(const ModelSpec& spec, const std::vector<Example>& data, const TrainConfig& config) {
  if (config.batch_size < 1) fail(ErrorCode::ConfigError, "batch_size must be >= 1");
  const bool no_holdout = !config.use_early_stopping && config.validation_fraction == 0.0;
  if (!no_holdout && !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    fail(ErrorCode::ConfigError, "validation_fraction must lie in (0,1)");
  }
  if (data.size() < 2) fail(ErrorCode::TooFewSamples, "training needs at least 2 examples");
  std::array<int, kNumClasses> counts{};
  for (const auto& e : data) {
    if (e.label < 0 || e.label >= static_cast<int>(kNumClasses)) fail(ErrorCode::DegenerateLabels, "label out of range");
    ++counts[static_cast<std::size_t>(e.label)];
  }
  if (counts[0] == 0 || counts[1] == 0) fail(ErrorCode::DegenerateLabels, "training data must contain both classes");

  Rng rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_val = std::min<std::size_t>(
      data.size() - 2, static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(data.size()))));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  TrainedModel out{Model(spec, derive_seed(config.seed, 2)), {}, 0, false, {}};
  for (const auto& e : data) out.fitted_ids.push_back(e.id);
  Model& model = out.model;
  auto params = model.params();
  std::vector<AdamState> adam(params.size());

  double best = std::numeric_limits<double>::infinity();
  auto best_state = detail::snapshot(model);
  int since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(fit);
    auto batches = detail::make_batches(fit.size(), bs);
    if (batches.size() > static_cast<std::size_t>(config.max_steps_per_epoch)) {
      batches.resize(static_cast<std::size_t>(config.max_steps_per_epoch));
    }
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (const auto& [b0, b1] : batches) {
      const auto x = detail::gather(data, fit, b0, b1);
      const auto labels = detail::gather_labels(data, fit, b0, b1);
      model.zero_grad();
      const auto logits = model.forward(x, Mode::Train);
      const auto loss = batch_cross_entropy(logits, labels);
      model.backward(loss.grad);
      for (std::size_t p = 0; p < params.size(); ++p) {
        adam_step(adam[p], params[p]->value.data, params[p]->grad.data, config.adam);
      }
      loss_sum += loss.loss * static_cast<double>(b1 - b0);
      seen += b1 - b0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const int pred = loss.probabilities[i][1] > loss.probabilities[i][0] ? 1 : 0;
        correct += pred == labels[i] ? 1 : 0;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    const double monitored = val.empty() ? rec.train_loss : detail::mean_loss(model, data, val);
    if (!val.empty()) rec.val_loss = monitored;
    if (!std::isfinite(monitored)) fail(ErrorCode::NoConvergence, "non-finite loss at epoch " + std::to_string(epoch));
    out.history.push_back(rec);

    if (monitored < best - config.early_stop.min_delta) {
      best = monitored;
      best_state = detail::snapshot(model);
      out.best_epoch = epoch;
      since_best = 0;
    } else if (config.use_early_stopping && ++since_best >= config.early_stop.patience) {
      out.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  if (config.use_early_stopping) {
    detail::restore(model, best_state);
  } else {
    out.best_epoch = static_cast<int>(out.history.size());
  }
  return out;
}

/// Activations at the model's feature tap, inference mode, one row per
/// input.
inline std::vector<std::vector<double>> extract_features(Model& model, const std::vector<const Tensor*>& inputs) {
  std::vector<std::vector<double>> rows;
  constexpr std::size_t kChunk = 64;
  const auto tap = static_cast<std::size_t>(model.spec().feature_tap);
  const std::size_t width = model.feature_width();
  for (std::size_t i = 0; i < inputs.size(); i += kChunk) {
    const std::size_t end = std::min(inputs.size(), i + kChunk);
    const std::vector<const Tensor*> chunk(inputs.begin() + static_cast<std::ptrdiff_t>(i),
                                           inputs.begin() + static_cast<std::ptrdiff_t>(end));
    const auto h = model.forward_to(stack_batch(chunk), tap, Mode::Infer);
    for (std::size_t b = 0; b < end - i; ++b) {
      rows.emplace_back(h.data.begin() + static_cast<std::ptrdiff_t>(b * width),
                        h.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * width));
    }
  }
  return rows;
}

inline std::vector<double> extract_features(Model& model, const Tensor& input) {
  return extract_features(model, std::vector<const Tensor*>{&input}).front();
}

}  // namespace ppgbp::nn
