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

// Computes the log-mel front end for one synthetic reference clip and prints
// the frame grid plus a coarse ASCII rendering of the spectrogram.

#include <cstdio>

#include "tsdkit/features.hpp"
#include "tsdkit/scene.hpp"

int main() {
  const tsd::Waveform clip = tsd::synth_event(/*class_id=*/8, /*duration=*/2.0, /*seed=*/7);
  const tsd::LogMel mel = tsd::compute_logmel(clip, 1024, 320, 64);

  std::printf("clip: %.2f s at %d Hz\n", clip.duration(), clip.sample_rate);
  std::printf("log-mel: %d frames x %d bins, hop %.1f ms\n", mel.frames(), mel.n_mels,
              mel.frame_hop_s * 1000.0);

  const double lo = mel.values.minCoeff(), hi = mel.values.maxCoeff();
  const char* shades = " .:-=+*#%@";
  for (int m = mel.n_mels - 1; m >= 0; m -= 4) {
    for (int t = 0; t < mel.frames(); t += 4) {
      const double v = (mel.values(t, m) - lo) / (hi - lo + 1e-12);
      std::putchar(shades[static_cast<int>(v * 9.0)]);
    }
    std::putchar('\n');
  }
  return 0;
}
