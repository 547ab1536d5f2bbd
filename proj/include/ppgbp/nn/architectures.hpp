#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppgbp/dataset.hpp"
#include "ppgbp/error.hpp"
#include "ppgbp/nn/model.hpp"
#include "ppgbp/spectral.hpp"

namespace ppgbp::nn {

enum class Extractor { Cnn, Lstm, BiLstm, LstmCnn, StftCnn };

inline constexpr std::array<Extractor, 5> kAllExtractors = {Extractor::Cnn, Extractor::Lstm, Extractor::LstmCnn,
                                                            Extractor::BiLstm, Extractor::StftCnn};

constexpr std::string_view to_string(Extractor e) {
  switch (e) {
    case Extractor::Cnn: return "cnn";
    case Extractor::Lstm: return "lstm";
    case Extractor::BiLstm: return "bilstm";
    case Extractor::LstmCnn: return "lstm_cnn";
    case Extractor::StftCnn: return "stft_cnn";
  }
  return "?";
}

/// Display name used in result tables ("LSTM-CNN").
constexpr std::string_view display_name(Extractor e) {
  switch (e) {
    case Extractor::Cnn: return "CNN";
    case Extractor::Lstm: return "LSTM";
    case Extractor::BiLstm: return "BiLSTM";
    case Extractor::LstmCnn: return "LSTM-CNN";
    case Extractor::StftCnn: return "STFT-CNN";
  }
  return "?";
}

inline Extractor extractor_from_string(std::string_view s) {
  for (auto e : kAllExtractors)
    if (to_string(e) == s) return e;
  fail(ErrorCode::ConfigError, "unknown extractor: " + std::string(s));
}

/// Raw segments are average-pooled by this factor (2100 -> 210 steps).
inline constexpr std::size_t kDecimation = 10;
inline constexpr double kDropoutRate = 0.3;

inline StftConfig default_stft() { return StftConfig{256, 64, WindowKind::Hann, 256}; }

/// Mean of consecutive blocks of `factor` samples; a ragged tail is dropped.
inline std::vector<double> average_pool(std::span<const double> x, std::size_t factor) {
  if (factor == 0 || x.size() < factor) fail(ErrorCode::InvalidLength, "average_pool: factor exceeds signal");
  std::vector<double> out(x.size() / factor);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < factor; ++k) s += x[i * factor + k];
    out[i] = s / static_cast<double>(factor);
  }
  return out;
}

inline FeatureShape input_shape(Extractor e, std::size_t segment_length = kSegmentLength) {
  if (e == Extractor::StftCnn) {
    const auto c = default_stft();
    return {static_cast<std::size_t>(c.fft_length) / 2 + 1, stft_frame_count(segment_length, c)};
  }
  return {1, segment_length / kDecimation};
}

/// Network input for one preprocessed segment: [1 x 210] for the raw-signal
/// extractors, [129 bins x 29 frames] log-magnitude for STFT-CNN.
inline Tensor make_input(Extractor e, std::span<const double> signal) {
  if (e == Extractor::StftCnn) {
    const auto spec = stft(signal, default_stft());
    const auto lm = log_magnitude(spec);
    Tensor t({spec.n_bins, spec.n_frames});
    for (std::size_t m = 0; m < spec.n_frames; ++m)
      for (std::size_t k = 0; k < spec.n_bins; ++k) t.data[k * spec.n_frames + m] = lm[m * spec.n_bins + k];
    return t;
  }
  auto pooled = average_pool(signal, kDecimation);
  const std::size_t n = pooled.size();
  return Tensor({1, n}, std::move(pooled));
}

inline ModelSpec make_spec(Extractor e, FeatureShape input) {
  using A = ActivationKind;
  using L = LayerSpec;
  ModelSpec s;
  s.name = std::string(to_string(e));
  s.input = input;
  switch (e) {
    case Extractor::Cnn:
      s.layers = {L::conv1d(32, 5), L::batchnorm(),   L::act(A::Relu),          L::maxpool(2),
                  L::conv1d(64, 5), L::batchnorm(),   L::act(A::Relu),          L::maxpool(2),
                  L::global_avg_pool(), L::dense(64, A::Relu), L::dropout(kDropoutRate), L::dense(2)};
      s.feature_tap = 10;
      break;
    case Extractor::Lstm:
      s.layers = {L::lstm(64), L::dropout(kDropoutRate), L::dense(32, A::Relu), L::dense(2), L::act(A::Softmax)};
      s.feature_tap = 2;
      break;
    case Extractor::BiLstm:
      s.layers = {L::bilstm(64, true),       L::batchnorm(),       L::act(A::Relu),
                  L::maxpool(2),             L::global_avg_pool(), L::dropout(kDropoutRate),
                  L::dense(64, A::Relu),     L::batchnorm(),       L::dropout(kDropoutRate),
                  L::dense(32, A::Relu),     L::dense(2),          L::act(A::Softmax)};
      s.feature_tap = 9;
      break;
    case Extractor::LstmCnn:
      s.layers = {L::conv1d(32, 5),  L::batchnorm(), L::act(A::Relu),          L::maxpool(2),
                  L::conv1d(32, 3),  L::act(A::Relu), L::lstm(64),             L::dropout(kDropoutRate),
                  L::dense(32, A::Relu), L::dense(2), L::act(A::Softmax)};
      s.feature_tap = 8;
      break;
    case Extractor::StftCnn:
      s.layers = {L::conv1d(32, 3), L::batchnorm(), L::act(A::Relu), L::conv1d(32, 3), L::act(A::Relu),
                  L::global_avg_pool(), L::dense(32, A::Relu), L::dropout(kDropoutRate), L::dense(2)};
      s.feature_tap = 7;
      break;
  }
  return s;
}

inline ModelSpec make_spec(Extractor e) { return make_spec(e, input_shape(e)); }

}  // namespace ppgbp::nn
