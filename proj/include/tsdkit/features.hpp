/* Copyright 2026 The tsdkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Log-mel spectrogram front-end.
//
// Conventions (fixed, and relied on by tests and timestamp decoding):
//   - input must already be at 32 kHz; resample first
//   - reflective center padding, so frame t is centered at sample t*hop and
//     T = 1 + floor(n_samples / hop)
//   - periodic Hann window, n_fft = window length
//   - HTK mel scale, mel(f) = 2595 * log10(1 + f/700), triangular filters with
//     unit peak spanning 0 Hz .. Nyquist; n_mels + 2 points equally spaced in
//     mel, filter m centered at point m+1
//   - natural log of (mel power + kEnergyFloor)

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tsdkit/fft.hpp"
#include "tsdkit/wave.hpp"

namespace tsd {

constexpr int kFrontEndSampleRate = 32000;
constexpr double kEnergyFloor = 1e-10;
inline double log_energy_floor() { return std::log(kEnergyFloor); }

struct LogMel {
  Eigen::MatrixXd values;  // T_spec x n_mels
  double frame_hop_s = 0.0;
  int n_mels = 0;
  int source_sr = 0;

  int frames() const { return static_cast<int>(values.rows()); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Center frequencies (Hz) of the n_mels triangular filters.
inline std::vector<double> mel_center_frequencies(int n_mels, int sample_rate) {
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(n_mels);
  for (int m = 0; m < n_mels; ++m) {
    const double mel = mel_lo + (mel_hi - mel_lo) * (m + 1) / (n_mels + 1);
    centers[m] = mel_to_hz(mel);
  }
  return centers;
}

// Triangular filterbank, n_mels x (n_fft/2 + 1). Triangles are symmetric in
// mel with unit peak (no area normalization).
inline Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> mel_points(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    mel_points[i] = mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1);

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int k = 0; k < n_bins; ++k) {
    const double mel_k = hz_to_mel(static_cast<double>(k) * sample_rate / n_fft);
    for (int m = 0; m < n_mels; ++m) {
      const double left = mel_points[m], center = mel_points[m + 1], right = mel_points[m + 2];
      double w = 0.0;
      if (mel_k > left && mel_k < center) {
        w = (mel_k - left) / (center - left);
      } else if (mel_k >= center && mel_k < right) {
        w = (right - mel_k) / (right - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

namespace detail {

// Reflection without edge repetition (period 2n-2), valid for any index.
inline std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long j = i % period;
  if (j < 0) j += period;
  if (j >= n) j = period - j;
  return static_cast<std::size_t>(j);
}

}  // namespace detail

// Front-end parameters as a value type, for configs and checkpoints.
struct FeatureConfig {
  int window = 1024;
  int hop = 320;
  int n_mels = 224;
};

inline LogMel compute_logmel(const Waveform& w, int window = 1024, int hop = 320,
                             int n_mels = 224) {
  if (w.sample_rate != kFrontEndSampleRate)
    throw std::runtime_error("compute_logmel: expected 32 kHz input, resample first");
  if (window < hop) throw std::runtime_error("compute_logmel: window must be >= hop");
  const long n = static_cast<long>(w.samples.size());
  if (n < hop) throw std::runtime_error("too short");

  const int n_fft = window;
  const int t_spec = 1 + static_cast<int>(n / hop);
  const std::vector<double> win = hann_window_periodic(static_cast<std::size_t>(window));
  const Eigen::MatrixXd fb = mel_filterbank(n_mels, n_fft, w.sample_rate);

  LogMel out;
  out.values.resize(t_spec, n_mels);
  out.frame_hop_s = static_cast<double>(hop) / w.sample_rate;
  out.n_mels = n_mels;
  out.source_sr = w.sample_rate;

  std::vector<double> frame(static_cast<std::size_t>(window));
  std::vector<double> power;
  std::vector<std::complex<double>> scratch;
  Eigen::VectorXd power_vec(n_fft / 2 + 1);

  for (int t = 0; t < t_spec; ++t) {
    const long start = static_cast<long>(t) * hop - window / 2;
    for (int i = 0; i < window; ++i) {
      frame[static_cast<std::size_t>(i)] =
          w.samples[detail::reflect_index(start + i, n)] * win[static_cast<std::size_t>(i)];
    }
    real_power_spectrum(frame.data(), frame.size(), static_cast<std::size_t>(n_fft), power,
                        scratch);
    for (int k = 0; k <= n_fft / 2; ++k) power_vec(k) = power[static_cast<std::size_t>(k)];
    Eigen::VectorXd mel_power = fb * power_vec;
    for (int m = 0; m < n_mels; ++m) out.values(t, m) = std::log(mel_power(m) + kEnergyFloor);
  }
  return out;
}

inline LogMel compute_logmel(const Waveform& w, const FeatureConfig& cfg) {
  return compute_logmel(w, cfg.window, cfg.hop, cfg.n_mels);
}

}  // namespace tsd
