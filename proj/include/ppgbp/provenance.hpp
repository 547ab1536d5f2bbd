#pragma once

#include <algorithm>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppgbp/error.hpp"

namespace ppgbp {

/// Records which sample ids had their labels or values used by each fit
/// stage of a run ("extractor:cnn", "head:svm", "meta", ...).
class FitAudit {
 public:
  struct Stage {
    std::string name;
    std::set<std::string> ids;
  };

  void record(std::string stage, std::span<const std::string> ids) {
    auto it = std::find_if(stages_.begin(), stages_.end(), [&](const Stage& s) { return s.name == stage; });
    if (it == stages_.end()) {
      stages_.push_back({std::move(stage), {}});
      it = std::prev(stages_.end());
    }
    it->ids.insert(ids.begin(), ids.end());
  }

  const std::vector<Stage>& stages() const { return stages_; }

  /// Every id used by stages whose name starts with `prefix` (all stages for
  /// an empty prefix).
  std::set<std::string> used_by(std::string_view prefix = {}) const {
    std::set<std::string> out;
    for (const auto& s : stages_)
      if (s.name.starts_with(prefix)) out.insert(s.ids.begin(), s.ids.end());
    return out;
  }

  /// Throws Leakage if a stage matching `prefix` used any forbidden id; the
  /// detail is the number of offending (stage, id) pairs.
  void assert_disjoint(const std::set<std::string>& forbidden, std::string_view prefix, std::string_view what) const {
    long long hits = 0;
    std::string first;
    for (const auto& s : stages_) {
      if (!s.name.starts_with(prefix)) continue;
      for (const auto& id : s.ids)
        if (forbidden.count(id)) {
          if (hits++ == 0) first = s.name + " used " + id;
        }
    }
    if (hits > 0) fail(ErrorCode::Leakage, std::string(what) + ": " + first, hits);
  }

  void merge(const FitAudit& other, std::string_view prefix = {}) {
    for (const auto& s : other.stages_) {
      std::vector<std::string> ids(s.ids.begin(), s.ids.end());
      record(std::string(prefix) + s.name, ids);
    }
  }

 private:
  std::vector<Stage> stages_;
};

}  // namespace ppgbp
