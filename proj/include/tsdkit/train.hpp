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

// The training loop: multi-task objective (per-frame detection BCE summed
// over frames, plus reference-tagging cross-entropy, both averaged over the
// batch), AdamW, reduce-on-plateau on the validation segment F1, augmentation
// on the mixture only, and best/last checkpoints.
//
// Everything is deterministic for a fixed seed: parameter init, epoch
// shuffles, and augmentation draws all come from derived RNG streams, batches
// are accumulated in order, and features are computed once per clip.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tsdkit/augment.hpp"
#include "tsdkit/corpus.hpp"
#include "tsdkit/dataset.hpp"
#include "tsdkit/eval.hpp"
#include "tsdkit/features.hpp"
#include "tsdkit/loss.hpp"
#include "tsdkit/model.hpp"
#include "tsdkit/optim.hpp"
#include "tsdkit/rng.hpp"

namespace tsd {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-4;
  AdamWConfig adamw;
  double plateau_factor = 0.1;
  int plateau_patience = 3;
  double min_lr = 0.0;
  bool augment = true;
  AugmentConfig augment_cfg;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // empty disables checkpoint files
  EvalConfig eval;
  bool restore_best = true;  // load the best-F1 parameters back at the end
  bool verbose = true;
};

// Loads audio lazily and keeps one log-mel matrix per clip. Clips whose
// sample rate differs from the front-end rate are resampled on load.
class FeatureCache {
 public:
  FeatureCache(std::string root, FeatureConfig cfg) : root_(std::move(root)), cfg_(cfg) {}

  const Eigen::MatrixXd& get(const std::string& rel_path) {
    auto it = cache_.find(rel_path);
    if (it != cache_.end()) return it->second;
    Waveform w = read_wav((std::filesystem::path(root_) / rel_path).string());
    if (w.sample_rate != kFrontEndSampleRate) w = resample(w, kFrontEndSampleRate);
    Eigen::MatrixXd values = compute_logmel(w, cfg_).values;
    return cache_.emplace(rel_path, std::move(values)).first->second;
  }

  const FeatureConfig& config() const { return cfg_; }

 private:
  std::string root_;
  FeatureConfig cfg_;
  std::unordered_map<std::string, Eigen::MatrixXd> cache_;
};

namespace detail {

inline Eigen::VectorXd to_vector(const std::vector<std::uint8_t>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline std::vector<EventInterval> class_intervals(const Scene& scene, int target_class) {
  std::vector<EventInterval> out;
  for (const EventLabel& ev : scene.events)
    if (ev.class_id == target_class) out.emplace_back(ev.onset, ev.offset);
  return out;
}

}  // namespace detail

// Runs the model over every pair of a split and scores it. `positives` holds
// the same metrics restricted to positive pairs, which is the number the
// strong vs strong+ comparison looks at.
struct SplitEvalResult {
  EvalReport all;
  EvalReport positives;
};

inline SplitEvalResult evaluate_split(const TsdModel& model, const LoadedSplit& split,
                                      FeatureCache& cache, const EvalConfig& ecfg) {
  const int d = model.config().encoder.downsample();
  const double hop_enc_s =
      static_cast<double>(cache.config().hop) / kFrontEndSampleRate * d;
  std::vector<PairEval> all, pos;
  for (const PairSample& p : split.manifest.pairs) {
    const Eigen::MatrixXd& mix = cache.get(p.scene_audio_path);
    const Eigen::MatrixXd& ref = cache.get(p.ref_audio_path);
    TsdModel::Cache mc;
    const ModelOutput out = model.forward(mix, ref, mc);
    const Scene& scene = split.scenes.at(p.scene_id);
    PairEval pe;
    pe.target_class = p.target_class;
    pe.clip_duration = scene.duration;
    pe.ref_events = detail::class_intervals(scene, p.target_class);
    pe.probs = out.detect_probs;
    pe.frame_hop_s = hop_enc_s;
    all.push_back(pe);
    if (p.positive) pos.push_back(std::move(pe));
  }
  const int n_classes = static_cast<int>(split.manifest.class_names.size());
  SplitEvalResult res;
  res.all = evaluate(all, n_classes, ecfg);
  res.positives = evaluate(pos, n_classes, ecfg);
  return res;
}

struct EpochLog {
  int epoch = 0;
  double ce = 0.0;
  double bce = 0.0;
  double total = 0.0;
  double val_f1 = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochLog> epochs;
  double best_val_f1 = 0.0;
  int best_epoch = -1;
  std::string best_checkpoint;
  std::string last_checkpoint;
};

inline FitResult fit(TsdModel& model, const LoadedSplit& train_split,
                     const LoadedSplit& val_split, const FeatureConfig& feat,
                     const TrainConfig& cfg) {
  const int d = model.config().encoder.downsample();
  const double hop_enc_s = static_cast<double>(feat.hop) / kFrontEndSampleRate * d;
  FeatureCache train_cache(train_split.root, feat);
  FeatureCache val_cache(val_split.root, feat);

  ParamRegistry reg = model.params();
  AdamW opt(reg.size(), cfg.adamw);
  PlateauScheduler sched(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);

  const std::vector<PairSample>& pairs = train_split.manifest.pairs;
  if (pairs.empty()) throw std::runtime_error("fit: training split has no pairs");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult result;
  Eigen::VectorXd best_params;
  const bool save_ckpts = !cfg.checkpoint_dir.empty();
  if (save_ckpts) std::filesystem::create_directories(cfg.checkpoint_dir);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Deterministic Fisher-Yates shuffle per epoch.
    Rng shuffle_rng(derive_seed(cfg.seed, 0x50F1, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<long>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }

    double sum_ce = 0.0, sum_bce = 0.0;
    const double lr_now = sched.lr();
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(batch_end - batch_start);
      reg.zero_grads();
      for (std::size_t k = batch_start; k < batch_end; ++k) {
        const PairSample& p = pairs[order[k]];
        const Scene& scene = train_split.scenes.at(p.scene_id);
        Eigen::MatrixXd mix = train_cache.get(p.scene_audio_path);  // copy, may be masked
        const Eigen::MatrixXd& ref = train_cache.get(p.ref_audio_path);
        const int t_enc = static_cast<int>((mix.rows() + d - 1) / d);
        Eigen::VectorXd targets = detail::to_vector(
            frame_targets_for(scene, p.target_class, t_enc, hop_enc_s));
        if (cfg.augment) {
          Rng arng(derive_seed(cfg.seed, 0xA0C, static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(order[k])));
          augment_mixture(mix, targets, d, cfg.augment_cfg, arng);
        }
        TsdModel::Cache mc;
        const ModelOutput out = model.forward(mix, ref, mc);
        const PairLoss pl = pair_loss(out.tag_logits, p.target_class, out.detect_logits, targets);
        if (!std::isfinite(pl.total)) {
          std::string ids;
          for (std::size_t b = batch_start; b < batch_end; ++b)
            ids += " " + pairs[order[b]].scene_id + "/" + pairs[order[b]].ref_id;
          throw std::runtime_error("non-finite loss in epoch " + std::to_string(epoch + 1) +
                                   ", batch pairs:" + ids);
        }
        sum_ce += pl.ce;
        sum_bce += pl.bce;
        model.backward(pl.d_detect_logits * inv_b, pl.d_tag_logits * inv_b, mc);
      }
      opt.step(reg, lr_now);
    }

    const SplitEvalResult val = evaluate_split(model, val_split, val_cache, cfg.eval);
    const double val_f1 = val.all.micro_f1;

    EpochLog log;
    log.epoch = epoch + 1;
    log.ce = sum_ce / static_cast<double>(pairs.size());
    log.bce = sum_bce / static_cast<double>(pairs.size());
    log.total = log.ce + log.bce;
    log.val_f1 = val_f1;
    log.lr = lr_now;
    result.epochs.push_back(log);
    if (cfg.verbose) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "epoch %3d/%d  ce %.4f  bce %.4f  total %.4f  val_f1 %.4f  lr %.2e",
                    log.epoch, cfg.epochs, log.ce, log.bce, log.total, log.val_f1, log.lr);
      std::cout << line << std::endl;
    }

    nlohmann::json meta{{"epoch", log.epoch},
                        {"val_f1", val_f1},
                        {"features",
                         {{"window", feat.window}, {"hop", feat.hop}, {"n_mels", feat.n_mels}}}};
    if (save_ckpts) {
      result.last_checkpoint =
          (std::filesystem::path(cfg.checkpoint_dir) / "last.ckpt").string();
      save_checkpoint(model, train_split.manifest.class_names, meta, result.last_checkpoint);
    }
    if (result.best_epoch < 0 || val_f1 > result.best_val_f1) {
      result.best_val_f1 = val_f1;
      result.best_epoch = log.epoch;
      best_params = reg.values();
      if (save_ckpts) {
        result.best_checkpoint =
            (std::filesystem::path(cfg.checkpoint_dir) / "best.ckpt").string();
        save_checkpoint(model, train_split.manifest.class_names, meta, result.best_checkpoint);
      }
    }
    sched.step(val_f1);
  }

  if (cfg.restore_best && best_params.size() > 0) reg.set_values(best_params);
  return result;
}

// ---------------------------------------------------------------------------
// Zero-shot split: drop held-out classes from one manifest, keep only them in
// another. Pairs are selected by their TARGET class.
// ---------------------------------------------------------------------------

template <typename Pred>
inline DatasetManifest filter_manifest(const DatasetManifest& m, Pred keep) {
  DatasetManifest out = m;
  out.pairs.clear();
  for (const PairSample& p : m.pairs)
    if (keep(p)) out.pairs.push_back(p);
  return out;
}

inline void apply_unseen_class_split(DatasetManifest& train, DatasetManifest& eval,
                                     const std::vector<int>& held_out_classes) {
  const auto held = [&](const PairSample& p) {
    for (int c : held_out_classes)
      if (p.target_class == c) return true;
    return false;
  };
  train = filter_manifest(train, [&](const PairSample& p) { return !held(p); });
  eval = filter_manifest(eval, held);
  if (train.pairs.empty())
    throw std::runtime_error("unseen-class split left no training pairs");
  if (eval.pairs.empty())
    throw std::runtime_error("unseen-class split left no evaluation pairs");
}

// ---------------------------------------------------------------------------
// Ablation harness: trains one model per (fusion, encoder sharing, pair mode)
// combination on the same corpus and reports test-set scores.
// ---------------------------------------------------------------------------

struct AblationSpec {
  FusionKind fusion = FusionKind::kMultiply;
  bool share_encoder = true;
  PairMode mode = PairMode::kStrong;
};

struct AblationRow {
  AblationSpec spec;
  double test_micro_f1 = 0.0;
  double test_macro_f1 = 0.0;
  double positive_micro_f1 = 0.0;
  double best_val_f1 = 0.0;
};

inline AblationRow run_one_ablation(const std::string& corpus_root, const ModelConfig& base_model,
                                    const FeatureConfig& feat, const TrainConfig& train_cfg,
                                    const AblationSpec& spec) {
  LoadedSplit train_split = load_split(corpus_root, SplitKind::kTrain, spec.mode);
  LoadedSplit val_split = load_split(corpus_root, SplitKind::kVal, spec.mode);
  LoadedSplit test_split = load_split(corpus_root, SplitKind::kTest, spec.mode);

  ModelConfig mc = base_model;
  mc.fusion.kind = spec.fusion;
  mc.share_encoder = spec.share_encoder;
  mc.n_classes = static_cast<int>(train_split.manifest.class_names.size());
  TsdModel model(mc);
  model.init(train_cfg.seed);

  const FitResult fr = fit(model, train_split, val_split, feat, train_cfg);

  FeatureCache test_cache(test_split.root, feat);
  const SplitEvalResult test = evaluate_split(model, test_split, test_cache, train_cfg.eval);

  AblationRow row;
  row.spec = spec;
  row.best_val_f1 = fr.best_val_f1;
  row.test_micro_f1 = test.all.micro_f1;
  row.test_macro_f1 = test.all.macro_f1;
  row.positive_micro_f1 = test.positives.micro_f1;
  return row;
}

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %-8s %-12s %9s %9s %9s\n", "fusion", "encoder",
                "pairs", "micro-F1", "macro-F1", "pos-F1");
  out += line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-16s %-8s %-12s %9.4f %9.4f %9.4f\n",
                  to_string(r.spec.fusion).c_str(), r.spec.share_encoder ? "unified" : "dual",
                  to_string(r.spec.mode).c_str(), r.test_micro_f1, r.test_macro_f1,
                  r.positive_micro_f1);
    out += line;
  }
  return out;
}

}  // namespace tsd
