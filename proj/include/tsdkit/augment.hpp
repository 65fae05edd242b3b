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

// Training-time augmentation of the mixture log-mel (the reference clip is
// never augmented). Applied in order:
//
//   1. circular temporal shift, quantized to whole encoder frames so the
//      frame targets can be rotated by exactly the same amount
//   2. one frequency mask
//   3. one time mask
//
// Masks overwrite bins with the log-energy floor, the value a silent bin
// takes, rather than zero. Width 0 (drawn or configured) is a no-op.

#pragma once

#include <Eigen/Dense>

#include "tsdkit/features.hpp"
#include "tsdkit/rng.hpp"

namespace tsd {

struct AugmentConfig {
  bool circular_shift = true;
  int max_freq_mask = 16;  // mel bins
  int max_time_mask = 24;  // spectrogram frames
};

inline void augment_mixture(Eigen::MatrixXd& logmel, Eigen::VectorXd& frame_targets,
                            int downsample, const AugmentConfig& cfg, Rng& rng) {
  const Eigen::Index t_spec = logmel.rows();
  const Eigen::Index n_mels = logmel.cols();
  const Eigen::Index t_enc = frame_targets.size();

  if (cfg.circular_shift && t_enc > 1) {
    const Eigen::Index shift_enc =
        static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<long>(t_enc - 1)));
    const Eigen::Index shift = shift_enc * downsample;
    if (shift > 0 && shift < t_spec) {
      Eigen::MatrixXd rotated(t_spec, n_mels);
      rotated.topRows(shift) = logmel.bottomRows(shift);
      rotated.bottomRows(t_spec - shift) = logmel.topRows(t_spec - shift);
      logmel.swap(rotated);
      Eigen::VectorXd shifted(t_enc);
      for (Eigen::Index i = 0; i < t_enc; ++i)
        shifted((i + shift_enc) % t_enc) = frame_targets(i);
      frame_targets = shifted;
    }
  }

  const double floor_value = log_energy_floor();

  if (cfg.max_freq_mask > 0) {
    const Eigen::Index max_w = std::min<Eigen::Index>(cfg.max_freq_mask, n_mels);
    const Eigen::Index w =
        static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<long>(max_w)));
    if (w > 0) {
      const Eigen::Index start = static_cast<Eigen::Index>(
          rng.uniform_int(0, static_cast<long>(n_mels - w)));
      logmel.middleCols(start, w).setConstant(floor_value);
    }
  }

  if (cfg.max_time_mask > 0) {
    const Eigen::Index max_w = std::min<Eigen::Index>(cfg.max_time_mask, t_spec);
    const Eigen::Index w =
        static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<long>(max_w)));
    if (w > 0) {
      const Eigen::Index start = static_cast<Eigen::Index>(
          rng.uniform_int(0, static_cast<long>(t_spec - w)));
      logmel.middleRows(start, w).setConstant(floor_value);
    }
  }
}

}  // namespace tsd
