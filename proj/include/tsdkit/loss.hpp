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

// Training objectives. Both are computed from logits in numerically stable
// form and return their gradient with respect to those logits, so callers
// never materialize probabilities on the loss path.
//
//   clip_ce:   softmax cross-entropy over class logits (the tagging task)
//   frame_bce: per-frame binary cross-entropy against the activity targets
//              (the detection task), SUMMED over frames
//
// The per-pair total is clip_ce + frame_bce; the trainer averages both terms
// over the batch.

#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace tsd {

struct ClipCeResult {
  double loss = 0.0;
  Eigen::RowVectorXd d_logits;
};

// Cross-entropy of a softmax over `logits` against the single true class:
// log-sum-exp(z) - z[target]. Gradient is softmax(z) minus the one-hot
// target.
inline ClipCeResult clip_ce(const Eigen::RowVectorXd& logits, int target_class) {
  if (target_class < 0 || target_class >= logits.size())
    throw std::invalid_argument("clip_ce: target class out of range");
  const double m = logits.maxCoeff();
  const Eigen::ArrayXd shifted = (logits.array() - m).transpose();
  const double sum_exp = shifted.exp().sum();
  ClipCeResult out;
  out.loss = m + std::log(sum_exp) - logits(target_class);
  out.d_logits = (shifted.exp() / sum_exp).matrix().transpose();
  out.d_logits(target_class) -= 1.0;
  return out;
}

struct FrameBceResult {
  double loss = 0.0;
  Eigen::VectorXd d_logits;
};

// Binary cross-entropy from logits, summed over frames. Per frame with logit
// o and target p in {0, 1}:
//   max(o, 0) - o * p + log(1 + exp(-|o|))
// which equals -(p log sigma(o) + (1-p) log(1 - sigma(o))) without ever
// forming the sigmoid. The gradient is sigma(o) - p.
inline FrameBceResult frame_bce(const Eigen::VectorXd& logits, const Eigen::VectorXd& targets) {
  if (logits.size() != targets.size())
    throw std::invalid_argument("frame_bce: logits/targets size mismatch");
  FrameBceResult out;
  out.d_logits.resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double o = logits(i);
    const double p = targets(i);
    if (p != 0.0 && p != 1.0)
      throw std::invalid_argument("frame_bce: targets must be 0 or 1");
    out.loss += std::max(o, 0.0) - o * p + std::log1p(std::exp(-std::abs(o)));
    const double sig = o >= 0.0 ? 1.0 / (1.0 + std::exp(-o)) : std::exp(o) / (1.0 + std::exp(o));
    out.d_logits(i) = sig - p;
  }
  return out;
}

struct PairLoss {
  double ce = 0.0;
  double bce = 0.0;
  double total = 0.0;
  Eigen::RowVectorXd d_tag_logits;
  Eigen::VectorXd d_detect_logits;
};

inline PairLoss pair_loss(const Eigen::RowVectorXd& tag_logits, int target_class,
                          const Eigen::VectorXd& detect_logits,
                          const Eigen::VectorXd& frame_targets) {
  const ClipCeResult ce = clip_ce(tag_logits, target_class);
  const FrameBceResult bce = frame_bce(detect_logits, frame_targets);
  PairLoss out;
  out.ce = ce.loss;
  out.bce = bce.loss;
  out.total = ce.loss + bce.loss;
  out.d_tag_logits = ce.d_logits;
  out.d_detect_logits = bce.d_logits;
  return out;
}

}  // namespace tsd
