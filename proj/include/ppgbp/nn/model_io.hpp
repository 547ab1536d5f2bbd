#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ppgbp/error.hpp"
#include "ppgbp/nn/train.hpp"

namespace ppgbp::nn {

inline constexpr const char* kModelFormat = "ppgbp-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

template <typename E, std::size_t N>
E enum_from(std::string_view name, const E (&all)[N], const char* what) {
  for (E e : all)
    if (to_string(e) == name) return e;
  fail(ErrorCode::InvalidSpec, std::string("unknown ") + what + ": " + std::string(name));
}

inline constexpr LayerKind kAllLayerKinds[] = {LayerKind::Conv1d,  LayerKind::BatchNorm, LayerKind::MaxPool,
                                               LayerKind::GlobalAvgPool, LayerKind::Dense, LayerKind::Dropout,
                                               LayerKind::Lstm, LayerKind::BiLstm, LayerKind::Activation,
                                               LayerKind::Flatten};
inline constexpr ActivationKind kAllActivations[] = {ActivationKind::None, ActivationKind::Relu,
                                                     ActivationKind::Tanh, ActivationKind::Sigmoid,
                                                     ActivationKind::Softmax};

}  // namespace detail

inline nlohmann::json to_json(const LayerSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"units", s.units},
          {"kernel", s.kernel},
          {"stride", s.stride},
          {"padding", s.padding},
          {"rate", s.rate},
          {"epsilon", s.epsilon},
          {"activation", to_string(s.activation)},
          {"return_sequences", s.return_sequences}};
}

inline LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = detail::enum_from(j.at("kind").get<std::string>(), detail::kAllLayerKinds, "layer kind");
  s.units = j.at("units").get<int>();
  s.kernel = j.at("kernel").get<int>();
  s.stride = j.at("stride").get<int>();
  s.padding = j.at("padding").get<int>();
  s.rate = j.at("rate").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.activation = detail::enum_from(j.at("activation").get<std::string>(), detail::kAllActivations, "activation");
  s.return_sequences = j.at("return_sequences").get<bool>();
  return s;
}

inline nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) layers.push_back(to_json(l));
  return {{"name", spec.name},
          {"input", {spec.input.channels, spec.input.length}},
          {"feature_tap", spec.feature_tap},
          {"layers", layers}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.name = j.at("name").get<std::string>();
  s.input = {j.at("input").at(0).get<std::size_t>(), j.at("input").at(1).get<std::size_t>()};
  s.feature_tap = j.at("feature_tap").get<int>();
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_spec_from_json(l));
  return s;
}

/// Spec plus every parameter and buffer as {shape, row-major values}.
inline nlohmann::json to_json(Model& model) {
  nlohmann::json state = nlohmann::json::object();
  for (auto& [name, t] : model.state()) state[name] = {{"shape", t->shape}, {"values", t->data}};
  return {{"format", kModelFormat},
          {"version", kModelFormatVersion},
          {"spec", to_json(model.spec())},
          {"state", state}};
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) fail(ErrorCode::InvalidSpec, "not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      fail(ErrorCode::InvalidSpec, "unsupported model version", j.at("version").get<int>());
    }
    Model model(model_spec_from_json(j.at("spec")), 0);
    const auto& state = j.at("state");
    auto slots = model.state();
    if (state.size() != slots.size()) fail(ErrorCode::ShapeMismatch, "model state entry count differs");
    for (auto& [name, t] : slots) {
      const auto& entry = state.at(name);
      if (entry.at("shape").get<std::vector<std::size_t>>() != t->shape) {
        fail(ErrorCode::ShapeMismatch, "state shape differs for " + name);
      }
      auto values = entry.at("values").get<std::vector<double>>();
      if (values.size() != t->data.size()) fail(ErrorCode::ShapeMismatch, "state size differs for " + name);
      t->data.assign(values.begin(), values.end());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("model json: ") + e.what());
  }
}

inline void save_model(Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << to_json(model).dump();
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("model json: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace ppgbp::nn
