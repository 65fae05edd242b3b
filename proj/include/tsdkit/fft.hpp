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

// Iterative radix-2 FFT, power-of-two sizes only. Enough for the 1024-point
// analysis window used by the front-end; no external FFT dependency.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace tsd {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place decimation-in-time FFT.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::runtime_error("fft: size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Power spectrum |X_k|^2 for k = 0..n/2 of a real frame zero-padded to n_fft.
inline void real_power_spectrum(const double* frame, std::size_t frame_len, std::size_t n_fft,
                                std::vector<double>& power,
                                std::vector<std::complex<double>>& scratch) {
  scratch.assign(n_fft, {0.0, 0.0});
  for (std::size_t i = 0; i < frame_len && i < n_fft; ++i) scratch[i] = frame[i];
  fft_inplace(scratch);
  power.resize(n_fft / 2 + 1);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) power[k] = std::norm(scratch[k]);
}

// Periodic Hann window.
inline std::vector<double> hann_window_periodic(std::size_t length) {
  std::vector<double> win(length);
  for (std::size_t i = 0; i < length; ++i) {
    win[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * static_cast<double>(i) /
                                  static_cast<double>(length));
  }
  return win;
}

}  // namespace tsd
