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

// Synthetic event bank and soundscape builder.
//
// Ten classes, each with a distinct spectral signature: class k occupies band
// k of a geometric partition of [150 Hz, 12 kHz] and uses envelope family
// k mod 4 (tone, chirp, noise burst, impulse train). Class names follow the
// ten-class urban protocol so manifests line up with real annotations.

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsdkit/rng.hpp"
#include "tsdkit/wave.hpp"

namespace tsd {

constexpr int kNumClasses = 10;
constexpr double kBackgroundRms = 0.05;
constexpr double kDefaultEventSnrDb = 6.0;
constexpr double kDefaultReferenceDuration = 2.0;

inline const std::vector<std::string>& urban_class_names() {
  static const std::vector<std::string> names = {
      "air_conditioner", "car_horn", "children_playing", "dog_bark",  "drilling",
      "engine_idling",   "gun_shot", "jackhammer",       "siren",     "street_music"};
  return names;
}

struct EventLabel {
  double onset = 0.0;
  double offset = 0.0;
  int class_id = 0;
};

struct Scene {
  std::string scene_id;
  std::string audio_path;  // empty for purely in-memory scenes
  double duration = 0.0;
  std::vector<EventLabel> events;
};

struct ReferenceClip {
  std::string ref_id;
  std::string audio_path;
  int class_id = 0;
};

struct FrequencyBand {
  double lo = 0.0;
  double hi = 0.0;
  double center() const { return std::sqrt(lo * hi); }
};

inline FrequencyBand class_band(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw std::runtime_error("class_band: class id out of range");
  const double f0 = 150.0, f1 = 12000.0;
  const double r = std::pow(f1 / f0, 1.0 / kNumClasses);
  return {f0 * std::pow(r, class_id), f0 * std::pow(r, class_id + 1)};
}

enum class EnvelopeFamily { kTone = 0, kChirp = 1, kNoiseBurst = 2, kImpulseTrain = 3 };

inline EnvelopeFamily class_envelope(int class_id) {
  return static_cast<EnvelopeFamily>(class_id % 4);
}

namespace detail {

constexpr double kPi = 3.14159265358979323846;

// Raised-cosine attack/release ramps to avoid onset clicks.
inline void apply_edge_ramps(std::vector<double>& x, int sr, double ramp_s = 0.01) {
  const std::size_t ramp = std::min(x.size() / 2, static_cast<std::size_t>(ramp_s * sr));
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / static_cast<double>(ramp));
    x[i] *= g;
    x[x.size() - 1 - i] *= g;
  }
}

inline void normalize_rms(std::vector<double>& x, double target) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  const double rms = std::sqrt(acc / static_cast<double>(x.size()));
  if (rms > 0.0) {
    const double g = target / rms;
    for (double& v : x) v *= g;
  }
}

}  // namespace detail

// Deterministic synthetic event for one class: energy confined to the class
// band, envelope per the class family. Unit RMS before placement.
inline Waveform synth_event(int class_id, double duration, std::uint64_t seed, int sr = 32000) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw std::runtime_error("synth_event: class id out of range");
  if (duration <= 0.0) throw std::runtime_error("synth_event: duration must be positive");

  const std::size_t n = static_cast<std::size_t>(std::llround(duration * sr));
  if (n == 0) throw std::runtime_error("synth_event: duration too short for sample rate");

  const FrequencyBand band = class_band(class_id);
  Rng rng(derive_seed(seed, 0xE0E0, static_cast<std::uint64_t>(class_id)));
  std::vector<double> x(n, 0.0);

  switch (class_envelope(class_id)) {
    case EnvelopeFamily::kTone: {
      // Band-center tone with slow seeded vibrato staying inside the band.
      const double f_c = band.center();
      const double vib_rate = rng.uniform(3.0, 6.0);
      const double vib_depth = 0.05 * f_c;
      const double phase0 = rng.uniform(0.0, 2.0 * detail::kPi);
      double phase = phase0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double f = f_c + vib_depth * std::sin(2.0 * detail::kPi * vib_rate * t);
        phase += 2.0 * detail::kPi * f / sr;
        x[i] = std::sin(phase);
      }
      break;
    }
    case EnvelopeFamily::kChirp: {
      // Repeated exponential sweeps across the band.
      const double sweep_s = rng.uniform(0.25, 0.5);
      const double phase0 = rng.uniform(0.0, 2.0 * detail::kPi);
      double phase = phase0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double u = std::fmod(t, sweep_s) / sweep_s;
        const double f = band.lo * std::pow(band.hi / band.lo, u);
        phase += 2.0 * detail::kPi * f / sr;
        x[i] = std::sin(phase);
      }
      break;
    }
    case EnvelopeFamily::kNoiseBurst: {
      // Band-limited noise (random-phase sinusoid bank) with decaying bursts.
      const int n_partials = 48;
      std::vector<double> freqs(n_partials), phases(n_partials);
      for (int p = 0; p < n_partials; ++p) {
        freqs[p] = band.lo * std::pow(band.hi / band.lo, rng.uniform());
        phases[p] = rng.uniform(0.0, 2.0 * detail::kPi);
      }
      const double burst_s = rng.uniform(0.3, 0.6);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double env = std::exp(-4.0 * std::fmod(t, burst_s) / burst_s);
        double v = 0.0;
        for (int p = 0; p < n_partials; ++p)
          v += std::sin(2.0 * detail::kPi * freqs[p] * t + phases[p]);
        x[i] = env * v / std::sqrt(static_cast<double>(n_partials));
      }
      break;
    }
    case EnvelopeFamily::kImpulseTrain: {
      // Damped band-center pulses at a seeded repetition rate.
      const double f_c = band.center();
      const double rate = rng.uniform(6.0, 12.0);
      const double decay = rng.uniform(30.0, 60.0);
      const double phase0 = rng.uniform(0.0, 2.0 * detail::kPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double tp = std::fmod(t, 1.0 / rate);
        x[i] = std::exp(-decay * tp) * std::sin(2.0 * detail::kPi * f_c * t + phase0);
      }
      break;
    }
  }

  detail::apply_edge_ramps(x, sr);
  detail::normalize_rms(x, 1.0);

  Waveform w;
  w.samples = std::move(x);
  w.sample_rate = sr;
  return w;
}

// Pink-like background noise (Voss-McCartney, 16 octave rows), fixed RMS.
inline Waveform synth_background(double duration, std::uint64_t seed, int sr = 32000,
                                 double rms = kBackgroundRms) {
  if (duration <= 0.0) throw std::runtime_error("synth_background: duration must be positive");
  const std::size_t n = static_cast<std::size_t>(std::llround(duration * sr));
  Rng rng(derive_seed(seed, 0xB6B6));

  constexpr int kRows = 16;
  std::array<double, kRows> rows{};
  for (auto& r : rows) r = rng.uniform(-1.0, 1.0);

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Row k updates every 2^k samples.
    for (int k = 0; k < kRows; ++k) {
      if ((i & ((1ULL << k) - 1)) == 0) rows[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
    }
    double v = 0.0;
    for (double r : rows) v += r;
    x[i] = v / kRows;
  }
  detail::normalize_rms(x, rms);

  Waveform w;
  w.samples = std::move(x);
  w.sample_rate = sr;
  return w;
}

struct EventSpec {
  int class_id = 0;
  double onset = 0.0;
  double duration = 0.0;
  double snr_db = kDefaultEventSnrDb;
};

struct SceneAudio {
  Scene scene;
  Waveform audio;
};

// Mixture = background + sum of placed events, each scaled so its RMS over
// its span sits snr_db above the background RMS. Labels mirror the EventSpec
// list exactly; overlapping events (same class included) are allowed.
inline SceneAudio build_scene(const std::vector<EventSpec>& events, std::uint64_t background_seed,
                              double duration = 10.0, int sr = 32000) {
  if (duration <= 0.0) throw std::runtime_error("build_scene: duration must be positive");
  SceneAudio out;
  out.audio = synth_background(duration, background_seed, sr);
  out.scene.duration = duration;

  const double bg_rms = kBackgroundRms;
  std::size_t index = 0;
  for (const EventSpec& ev : events) {
    if (ev.onset < 0.0 || ev.duration <= 0.0 || ev.onset + ev.duration > duration + 1e-9)
      throw std::runtime_error("build_scene: event exceeds clip bounds");
    const std::uint64_t ev_seed = derive_seed(background_seed, 0xEE, index);
    Waveform event = synth_event(ev.class_id, ev.duration, ev_seed, sr);
    const double gain = bg_rms * std::pow(10.0, ev.snr_db / 20.0);
    const std::size_t start = static_cast<std::size_t>(std::llround(ev.onset * sr));
    for (std::size_t i = 0; i < event.samples.size() && start + i < out.audio.samples.size(); ++i)
      out.audio.samples[start + i] += gain * event.samples[i];
    out.scene.events.push_back({ev.onset, ev.onset + ev.duration, ev.class_id});
    ++index;
  }
  return out;
}

}  // namespace tsd
