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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "tsdkit/features.hpp"
#include "tsdkit/fft.hpp"
#include "tsdkit/rng.hpp"
#include "tsdkit/wave.hpp"

using Catch::Approx;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tsdkit_test_signal";
  std::filesystem::create_directories(dir);
  return dir / name;
}

tsd::Waveform make_tone(double freq, double duration, int sr, double amp = 0.5) {
  tsd::Waveform w;
  w.sample_rate = sr;
  const std::size_t n = static_cast<std::size_t>(duration * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sr);
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

TEST_CASE("splitmix64 matches the reference sequence", "[rng]") {
  // First three outputs for seed 0, from the published reference
  // implementation.
  std::uint64_t state = 0;
  CHECK(tsd::splitmix64_next(state) == UINT64_C(0xE220A8397B1DCDAF));
  CHECK(tsd::splitmix64_next(state) == UINT64_C(0x6E789E6AA1B965F4));
  CHECK(tsd::splitmix64_next(state) == UINT64_C(0x06C45D188009454F));
}

TEST_CASE("rng streams are deterministic and tag-separated", "[rng]") {
  tsd::Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  CHECK(tsd::derive_seed(1, 2) != tsd::derive_seed(1, 3));
  CHECK(tsd::derive_seed(1, 2, 3) != tsd::derive_seed(1, 2, 4));
}

TEST_CASE("uniform and uniform_int respect their ranges", "[rng]") {
  tsd::Rng rng(7);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 2000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const long v = rng.uniform_int(3, 5);
    REQUIRE(v >= 3);
    REQUIRE(v <= 5);
    saw_lo |= v == 3;
    saw_hi |= v == 5;
  }
  CHECK(saw_lo);
  CHECK(saw_hi);
}

TEST_CASE("normal draws have standard moments", "[rng]") {
  tsd::Rng rng(99);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(sum / n == Approx(0.0).margin(0.03));
  CHECK(sum2 / n == Approx(1.0).margin(0.05));
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

TEST_CASE("float32 wav roundtrips exactly", "[wave]") {
  tsd::Waveform w = make_tone(440.0, 0.05, 32000);
  const auto path = temp_file("roundtrip.wav");
  tsd::write_wav(path.string(), w);
  const tsd::Waveform r = tsd::read_wav(path.string());
  REQUIRE(r.sample_rate == 32000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    CHECK(r.samples[i] == Approx(static_cast<float>(w.samples[i])).margin(0.0));
}

TEST_CASE("pcm16 wav files are decoded and stereo is downmixed", "[wave]") {
  // Hand-assembled 2-channel PCM16 file, two frames:
  //   frame 0: L=+16384, R=-16384 (mixes to 0)
  //   frame 1: L=+16384, R=+16384 (mixes to 0.5)
  std::string bytes;
  const auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  const auto u16 = [&](std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  bytes += "RIFF";
  u32(36 + 8);
  bytes += "WAVEfmt ";
  u32(16);
  u16(1);      // PCM
  u16(2);      // channels
  u32(16000);  // sample rate
  u32(16000 * 2 * 2);
  u16(4);
  u16(16);
  bytes += "data";
  u32(8);
  u16(16384);
  u16(static_cast<std::uint16_t>(-16384));
  u16(16384);
  u16(16384);

  const auto path = temp_file("pcm16_stereo.wav");
  {
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  const tsd::Waveform w = tsd::read_wav(path.string());
  REQUIRE(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == 2);
  CHECK(w.samples[0] == Approx(0.0).margin(1e-9));
  CHECK(w.samples[1] == Approx(16384.0 / 32768.0).epsilon(1e-6));
}

TEST_CASE("resample preserves DC and tone energy", "[wave]") {
  tsd::Waveform dc;
  dc.sample_rate = 48000;
  dc.samples.assign(4800, 0.7);
  const tsd::Waveform down = tsd::resample(dc, 32000);
  REQUIRE(down.sample_rate == 32000);
  REQUIRE(down.samples.size() == 3200);
  for (std::size_t i = 100; i + 100 < down.samples.size(); ++i)
    REQUIRE(down.samples[i] == Approx(0.7).epsilon(1e-6));

  const tsd::Waveform tone = make_tone(1000.0, 0.5, 48000);
  const tsd::Waveform tone32 = tsd::resample(tone, 32000);
  const auto rms = [](const tsd::Waveform& w, std::size_t skip) {
    double acc = 0.0;
    for (std::size_t i = skip; i + skip < w.samples.size(); ++i) acc += w.samples[i] * w.samples[i];
    return std::sqrt(acc / static_cast<double>(w.samples.size() - 2 * skip));
  };
  CHECK(rms(tone32, 64) == Approx(rms(tone, 96)).epsilon(0.01));
}

TEST_CASE("resample at the same rate is the identity", "[wave]") {
  const tsd::Waveform w = make_tone(500.0, 0.01, 32000);
  const tsd::Waveform r = tsd::resample(w, 32000);
  REQUIRE(r.samples == w.samples);
}

TEST_CASE("resampling an empty waveform is an error", "[wave]") {
  tsd::Waveform w;
  w.sample_rate = 32000;
  CHECK_THROWS_WITH(tsd::resample(w, 16000), "empty waveform");
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

TEST_CASE("fft matches a direct DFT", "[fft]") {
  const std::size_t n = 16;
  tsd::Rng rng(5);
  std::vector<std::complex<double>> x(n);
  for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

  std::vector<std::complex<double>> got = x;
  tsd::fft_inplace(got);

  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> want{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j)
      want += x[j] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * j) / n);
    CHECK(std::abs(got[k] - want) < 1e-10);
  }
}

TEST_CASE("power spectrum of an exact-bin cosine peaks at that bin", "[fft]") {
  const std::size_t n = 256;
  const std::size_t k0 = 8;
  std::vector<double> frame(n);
  for (std::size_t i = 0; i < n; ++i)
    frame[i] = std::cos(2.0 * M_PI * static_cast<double>(k0 * i) / n);
  std::vector<double> power;
  std::vector<std::complex<double>> scratch;
  tsd::real_power_spectrum(frame.data(), n, n, power, scratch);
  REQUIRE(power.size() == n / 2 + 1);
  const double expected = (n / 2.0) * (n / 2.0);
  CHECK(power[k0] == Approx(expected).epsilon(1e-10));
  for (std::size_t k = 0; k < power.size(); ++k)
    if (k != k0) REQUIRE(power[k] < expected * 1e-18);
}

TEST_CASE("periodic hann window", "[fft]") {
  const auto w = tsd::hann_window_periodic(8);
  REQUIRE(w.size() == 8);
  CHECK(w[0] == Approx(0.0).margin(1e-15));
  CHECK(w[4] == Approx(1.0).margin(1e-15));
  for (std::size_t i = 1; i < 8; ++i) CHECK(w[i] == Approx(w[8 - i]).margin(1e-15));
}

// ---------------------------------------------------------------------------
// Log-mel front end
// ---------------------------------------------------------------------------

TEST_CASE("mel scale anchors", "[features]") {
  CHECK(tsd::hz_to_mel(0.0) == Approx(0.0).margin(1e-12));
  CHECK(tsd::hz_to_mel(1000.0) == Approx(999.9855371396).epsilon(1e-9));
  for (double hz : {100.0, 440.0, 3000.0, 12000.0})
    CHECK(tsd::mel_to_hz(tsd::hz_to_mel(hz)) == Approx(hz).epsilon(1e-12));
}

TEST_CASE("mel filterbank weights are triangles with unit peak in mel space", "[features]") {
  const Eigen::MatrixXd fb = tsd::mel_filterbank(64, 1024, 32000);
  REQUIRE(fb.rows() == 64);
  REQUIRE(fb.cols() == 513);
  CHECK(fb.minCoeff() >= 0.0);
  CHECK(fb.maxCoeff() <= 1.0);
  // At 64 bins every filter is wider than the FFT bin spacing, so none of
  // them may be empty.
  for (int m = 0; m < 64; ++m) REQUIRE(fb.row(m).maxCoeff() > 0.0);
}

TEST_CASE("frame count is 1 + floor(n / hop)", "[features]") {
  for (const int n_samples : {320, 321, 6399, 6400, 32000}) {
    tsd::Waveform w;
    w.sample_rate = 32000;
    w.samples.assign(static_cast<std::size_t>(n_samples), 0.0);
    const tsd::LogMel mel = tsd::compute_logmel(w, 1024, 320, 32);
    CHECK(mel.frames() == 1 + n_samples / 320);
  }
}

TEST_CASE("silence maps to the log energy floor everywhere", "[features]") {
  tsd::Waveform w;
  w.sample_rate = 32000;
  w.samples.assign(3200, 0.0);
  const tsd::LogMel mel = tsd::compute_logmel(w, 1024, 320, 64);
  CHECK(mel.values.minCoeff() == Approx(tsd::log_energy_floor()).margin(1e-12));
  CHECK(mel.values.maxCoeff() == Approx(tsd::log_energy_floor()).margin(1e-12));
}

TEST_CASE("a 1 kHz tone peaks in the filter whose center is nearest 1 kHz", "[features]") {
  const tsd::Waveform tone = make_tone(1000.0, 0.5, 32000);
  const tsd::LogMel mel = tsd::compute_logmel(tone, 1024, 320, 64);
  const std::vector<double> centers = tsd::mel_center_frequencies(64, 32000);
  int expected = 0;
  for (int m = 1; m < 64; ++m)
    if (std::abs(centers[static_cast<std::size_t>(m)] - 1000.0) <
        std::abs(centers[static_cast<std::size_t>(expected)] - 1000.0))
      expected = m;

  const int mid = mel.frames() / 2;
  Eigen::Index argmax = 0;
  mel.values.row(mid).maxCoeff(&argmax);
  CHECK(static_cast<int>(argmax) == expected);
}

TEST_CASE("front end rejects wrong rates and too-short input", "[features]") {
  tsd::Waveform w = make_tone(440.0, 0.1, 16000);
  CHECK_THROWS(tsd::compute_logmel(w));
  tsd::Waveform tiny;
  tiny.sample_rate = 32000;
  tiny.samples.assign(100, 0.0);
  CHECK_THROWS_WITH(tsd::compute_logmel(tiny), "too short");
}

TEST_CASE("front end defaults", "[features]") {
  const tsd::FeatureConfig cfg;
  CHECK(cfg.window == 1024);
  CHECK(cfg.hop == 320);
  CHECK(cfg.n_mels == 224);
  CHECK(tsd::kFrontEndSampleRate == 32000);
}
