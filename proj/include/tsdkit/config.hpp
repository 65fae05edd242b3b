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

// Run configuration: one JSON file drives dataset building, training, and
// evaluation. Parsing is strict in both directions: unknown keys are errors
// (they are almost always typos of real knobs), and `seed` is mandatory so
// no run is accidentally unseeded. Every other field has the default shown
// in the structs. The fully resolved config is snapshotted next to a run's
// outputs.

#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "tsdkit/corpus.hpp"
#include "tsdkit/dataset.hpp"
#include "tsdkit/eval.hpp"
#include "tsdkit/features.hpp"
#include "tsdkit/model.hpp"
#include "tsdkit/train.hpp"

namespace tsd {

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
  if (!j.is_object()) throw std::runtime_error("config: " + context + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::runtime_error("config: unknown key \"" + it.key() + "\" in " + context);
  }
}

}  // namespace detail

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string out_dir;
  PairMode pair_mode = PairMode::kStrong;
  std::string encoder_preset = "tiny";  // "tiny" or "base"
  FusionKind fusion = FusionKind::kMultiply;
  int projected_dim = 384;
  int heads = 4;
  bool share_encoder = true;
  FeatureConfig features{1024, 320, 64};
  TrainConfig train;
  EvalConfig eval;
  CorpusConfig corpus;

  ModelConfig model_config(int n_classes) const {
    ModelConfig mc;
    if (encoder_preset == "tiny") {
      mc.encoder = EncoderConfig::tiny(features.n_mels);
    } else if (encoder_preset == "base") {
      mc.encoder = EncoderConfig::base(features.n_mels);
    } else {
      throw std::runtime_error("config: unknown encoder preset \"" + encoder_preset + "\"");
    }
    mc.fusion.kind = fusion;
    mc.fusion.projected_dim = projected_dim;
    mc.fusion.heads = heads;
    mc.share_encoder = share_encoder;
    mc.n_classes = n_classes;
    mc.validate();
    return mc;
  }
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"seed", "data_dir", "out_dir", "pair_mode", "model", "features", "train",
                      "eval", "corpus"},
                     "top level");
  if (!j.contains("seed")) throw std::runtime_error("config: \"seed\" is required");

  RunConfig cfg;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.train.seed = cfg.seed;
  cfg.corpus.seed = cfg.seed;
  cfg.data_dir = j.value("data_dir", cfg.data_dir);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("pair_mode")) {
    const std::string m = j.at("pair_mode").get<std::string>();
    if (m == "strong") cfg.pair_mode = PairMode::kStrong;
    else if (m == "strong_plus") cfg.pair_mode = PairMode::kStrongPlus;
    else throw std::runtime_error("config: pair_mode must be strong or strong_plus");
  }

  if (j.contains("model")) {
    const nlohmann::json& m = j.at("model");
    detail::check_keys(m, {"encoder", "fusion", "projected_dim", "heads", "share_encoder"},
                       "model");
    cfg.encoder_preset = m.value("encoder", cfg.encoder_preset);
    if (m.contains("fusion")) cfg.fusion = fusion_kind_from_string(m.at("fusion").get<std::string>());
    cfg.projected_dim = m.value("projected_dim", cfg.projected_dim);
    cfg.heads = m.value("heads", cfg.heads);
    cfg.share_encoder = m.value("share_encoder", cfg.share_encoder);
  }

  if (j.contains("features")) {
    const nlohmann::json& f = j.at("features");
    detail::check_keys(f, {"window", "hop", "n_mels"}, "features");
    cfg.features.window = f.value("window", cfg.features.window);
    cfg.features.hop = f.value("hop", cfg.features.hop);
    cfg.features.n_mels = f.value("n_mels", cfg.features.n_mels);
  }

  if (j.contains("train")) {
    const nlohmann::json& t = j.at("train");
    detail::check_keys(t,
                       {"epochs", "batch_size", "lr", "weight_decay", "plateau_factor",
                        "plateau_patience", "min_lr", "augment", "circular_shift",
                        "max_freq_mask", "max_time_mask", "restore_best", "verbose"},
                       "train");
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.adamw.weight_decay = t.value("weight_decay", cfg.train.adamw.weight_decay);
    cfg.train.plateau_factor = t.value("plateau_factor", cfg.train.plateau_factor);
    cfg.train.plateau_patience = t.value("plateau_patience", cfg.train.plateau_patience);
    cfg.train.min_lr = t.value("min_lr", cfg.train.min_lr);
    cfg.train.augment = t.value("augment", cfg.train.augment);
    cfg.train.augment_cfg.circular_shift =
        t.value("circular_shift", cfg.train.augment_cfg.circular_shift);
    cfg.train.augment_cfg.max_freq_mask =
        t.value("max_freq_mask", cfg.train.augment_cfg.max_freq_mask);
    cfg.train.augment_cfg.max_time_mask =
        t.value("max_time_mask", cfg.train.augment_cfg.max_time_mask);
    cfg.train.restore_best = t.value("restore_best", cfg.train.restore_best);
    cfg.train.verbose = t.value("verbose", cfg.train.verbose);
  }

  if (j.contains("eval")) {
    const nlohmann::json& e = j.at("eval");
    detail::check_keys(e, {"threshold", "segment_duration", "median_filter"}, "eval");
    cfg.eval.threshold = e.value("threshold", cfg.eval.threshold);
    cfg.eval.segment_duration = e.value("segment_duration", cfg.eval.segment_duration);
    cfg.eval.median_filter = e.value("median_filter", cfg.eval.median_filter);
    cfg.train.eval = cfg.eval;
  }

  if (j.contains("corpus")) {
    const nlohmann::json& c = j.at("corpus");
    detail::check_keys(c,
                       {"train_scenes", "val_scenes", "test_scenes", "scene_duration",
                        "min_events_per_scene", "max_events_per_scene", "min_event_duration",
                        "max_event_duration", "snr_db_lo", "snr_db_hi", "refs_per_class",
                        "reference_duration", "negatives_per_scene"},
                       "corpus");
    cfg.corpus.train_scenes = c.value("train_scenes", cfg.corpus.train_scenes);
    cfg.corpus.val_scenes = c.value("val_scenes", cfg.corpus.val_scenes);
    cfg.corpus.test_scenes = c.value("test_scenes", cfg.corpus.test_scenes);
    cfg.corpus.scene_duration = c.value("scene_duration", cfg.corpus.scene_duration);
    cfg.corpus.min_events_per_scene =
        c.value("min_events_per_scene", cfg.corpus.min_events_per_scene);
    cfg.corpus.max_events_per_scene =
        c.value("max_events_per_scene", cfg.corpus.max_events_per_scene);
    cfg.corpus.min_event_duration =
        c.value("min_event_duration", cfg.corpus.min_event_duration);
    cfg.corpus.max_event_duration =
        c.value("max_event_duration", cfg.corpus.max_event_duration);
    cfg.corpus.snr_db_lo = c.value("snr_db_lo", cfg.corpus.snr_db_lo);
    cfg.corpus.snr_db_hi = c.value("snr_db_hi", cfg.corpus.snr_db_hi);
    cfg.corpus.refs_per_class = c.value("refs_per_class", cfg.corpus.refs_per_class);
    cfg.corpus.reference_duration =
        c.value("reference_duration", cfg.corpus.reference_duration);
    cfg.corpus.negatives_per_scene =
        c.value("negatives_per_scene", cfg.corpus.negatives_per_scene);
  }

  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

// Fully resolved snapshot, written next to the run outputs.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return nlohmann::json{
      {"seed", c.seed},
      {"data_dir", c.data_dir},
      {"out_dir", c.out_dir},
      {"pair_mode", to_string(c.pair_mode)},
      {"model",
       {{"encoder", c.encoder_preset},
        {"fusion", to_string(c.fusion)},
        {"projected_dim", c.projected_dim},
        {"heads", c.heads},
        {"share_encoder", c.share_encoder}}},
      {"features",
       {{"window", c.features.window}, {"hop", c.features.hop}, {"n_mels", c.features.n_mels}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"weight_decay", c.train.adamw.weight_decay},
        {"plateau_factor", c.train.plateau_factor},
        {"plateau_patience", c.train.plateau_patience},
        {"min_lr", c.train.min_lr},
        {"augment", c.train.augment},
        {"circular_shift", c.train.augment_cfg.circular_shift},
        {"max_freq_mask", c.train.augment_cfg.max_freq_mask},
        {"max_time_mask", c.train.augment_cfg.max_time_mask},
        {"restore_best", c.train.restore_best}}},
      {"eval",
       {{"threshold", c.eval.threshold},
        {"segment_duration", c.eval.segment_duration},
        {"median_filter", c.eval.median_filter}}},
      {"corpus", c.corpus}};
}

inline void snapshot_run_config(const RunConfig& c, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write config snapshot: " + path);
  os << run_config_to_json(c).dump(2) << "\n";
}

}  // namespace tsd
