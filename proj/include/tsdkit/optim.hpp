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

// AdamW with decoupled weight decay, and a reduce-on-plateau learning rate
// schedule driven by a score to maximize.

#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "tsdkit/nn.hpp"

namespace tsd {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(std::size_t n_params, AdamWConfig cfg = {})
      : cfg_(cfg),
        m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))),
        v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))) {}

  void step(ParamRegistry& reg, double lr) {
    if (static_cast<Eigen::Index>(reg.size()) != m_.size())
      throw std::invalid_argument("AdamW: registry size changed");
    const Eigen::VectorXd g = reg.grads();
    Eigen::VectorXd theta = reg.values();
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    const Eigen::ArrayXd m_hat = m_.array() / bc1;
    const Eigen::ArrayXd v_hat = v_.array() / bc2;
    theta.array() -= lr * (m_hat / (v_hat.sqrt() + cfg_.eps) +
                           cfg_.weight_decay * theta.array());
    reg.set_values(theta);
  }

  int steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

// Multiplies the learning rate by `factor` after `patience` consecutive
// epochs without improvement of the monitored score (higher is better).
class PlateauScheduler {
 public:
  PlateauScheduler() = default;
  PlateauScheduler(double initial_lr, double factor = 0.1, int patience = 3,
                   double min_lr = 0.0)
      : lr_(initial_lr), factor_(factor), patience_(patience), min_lr_(min_lr) {}

  double lr() const { return lr_; }

  // Returns true when this report triggered a reduction.
  bool step(double score) {
    if (!seen_any_ || score > best_) {
      best_ = score;
      seen_any_ = true;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ >= patience_) {
      lr_ = std::max(lr_ * factor_, min_lr_);
      bad_epochs_ = 0;
      return true;
    }
    return false;
  }

 private:
  double lr_ = 1e-4;
  double factor_ = 0.1;
  int patience_ = 3;
  double min_lr_ = 0.0;
  double best_ = 0.0;
  bool seen_any_ = false;
  int bad_epochs_ = 0;
};

}  // namespace tsd
