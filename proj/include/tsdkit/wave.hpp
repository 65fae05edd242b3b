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

// Waveform container, RIFF/WAVE I/O (PCM16 and float32, multichannel
// downmixed by channel mean) and band-limited resampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsd {

struct Waveform {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  double rms() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return std::sqrt(acc / static_cast<double>(samples.size()));
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Reads a RIFF/WAVE file. Accepts PCM16 (format 1) and IEEE float32
// (format 3, also via WAVE_FORMAT_EXTENSIBLE); other formats are rejected.
// Multichannel input is downmixed by channel mean.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_size = detail::get_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_size > bytes.size()) chunk_size = static_cast<std::uint32_t>(bytes.size() - pos - 8);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_size >= 16) {
      format = detail::get_u16(body);
      channels = detail::get_u16(body + 2);
      sample_rate = detail::get_u32(body + 4);
      bits = detail::get_u16(body + 14);
      if (format == 0xFFFE && chunk_size >= 40) {  // WAVE_FORMAT_EXTENSIBLE
        format = detail::get_u16(body + 24);
      }
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_size = chunk_size;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (data == nullptr || channels == 0 || sample_rate == 0)
    throw std::runtime_error("malformed wav file: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  if (format == 1 && bits == 16) {
    std::size_t n_frames = data_size / (2u * channels);
    w.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        std::int16_t s = static_cast<std::int16_t>(detail::get_u16(data + 2 * (i * channels + c)));
        acc += static_cast<double>(s) / 32768.0;
      }
      w.samples[i] = acc / channels;
    }
  } else if (format == 3 && bits == 32) {
    std::size_t n_frames = data_size / (4u * channels);
    w.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        float f;
        std::memcpy(&f, data + 4 * (i * channels + c), 4);
        acc += static_cast<double>(f);
      }
      w.samples[i] = acc / channels;
    }
  } else {
    throw std::runtime_error("unsupported wav format (want PCM16 or float32): " + path);
  }
  return w;
}

// Writes mono float32 WAVE. Float keeps dataset builds bit-exact and avoids
// quantization of low-level synthetic content.
inline void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw std::runtime_error("write_wav: invalid sample rate");
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_size = n * 4;
  std::string out;
  out.reserve(58 + data_size);
  out.append("RIFF");
  detail::put_u32(out, 4 + 26 + 12 + 8 + data_size);
  out.append("WAVE");
  out.append("fmt ");
  detail::put_u32(out, 18);
  detail::put_u16(out, 3);  // IEEE float
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 4);
  detail::put_u16(out, 4);
  detail::put_u16(out, 32);
  detail::put_u16(out, 0);  // cbSize
  out.append("fact");
  detail::put_u32(out, 4);
  detail::put_u32(out, n);
  out.append("data");
  detail::put_u32(out, data_size);
  for (std::uint32_t i = 0; i < n; ++i) {
    float f = static_cast<float>(w.samples[i]);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write wav file: " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// Windowed-sinc resampler (Hann window, 32 taps per side, per-sample kernel
// renormalization so DC passes exactly). Identity rates return a copy.
inline Waveform resample(const Waveform& w, int target_sr) {
  if (target_sr <= 0) throw std::runtime_error("resample: target rate must be positive");
  if (w.samples.empty()) throw std::runtime_error("empty waveform");
  if (w.sample_rate == target_sr) return w;

  const int taps = 32;
  const double ratio = static_cast<double>(target_sr) / w.sample_rate;
  const double cutoff = 0.475 * std::min(1.0, ratio);  // cycles per input sample
  const std::size_t n_in = w.samples.size();
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));

  Waveform out;
  out.sample_rate = target_sr;
  out.samples.resize(n_out);

  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;  // position in input samples
    const long k_lo = static_cast<long>(std::ceil(t - taps));
    const long k_hi = static_cast<long>(std::floor(t + taps));
    double acc = 0.0, norm = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) {
      const double x = static_cast<double>(k) - t;
      const double sinc_arg = 2.0 * cutoff * x;
      double sinc = 1.0;
      if (sinc_arg != 0.0) {
        const double px = 3.14159265358979323846 * sinc_arg;
        sinc = std::sin(px) / px;
      }
      const double win = 0.5 + 0.5 * std::cos(3.14159265358979323846 * x / taps);
      const double h = sinc * win;
      norm += h;
      if (k >= 0 && k < static_cast<long>(n_in)) acc += w.samples[static_cast<std::size_t>(k)] * h;
    }
    out.samples[i] = norm != 0.0 ? acc / norm : 0.0;
  }
  return out;
}

}  // namespace tsd
