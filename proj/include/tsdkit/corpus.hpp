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

// End-to-end synthetic corpus builder: reference bank, train/val/test scenes,
// annotations, and strong / strong+ manifests, all written under one root.
//
// Layout:
//   <root>/classes.txt
//   <root>/corpus_config.json
//   <root>/audio/refs/<ref_id>.wav
//   <root>/audio/scenes/<scene_id>.wav
//   <root>/annotations/<scene_id>.txt
//   <root>/<split>_strong.tsv, <root>/<split>_strong_plus.tsv
//   <root>/summary.txt

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsdkit/dataset.hpp"
#include "tsdkit/rng.hpp"
#include "tsdkit/scene.hpp"

namespace tsd {

struct CorpusConfig {
  int train_scenes = 60;
  int val_scenes = 20;
  int test_scenes = 20;
  double scene_duration = 10.0;
  int min_events_per_scene = 1;
  int max_events_per_scene = 5;
  double min_event_duration = 0.5;
  double max_event_duration = 2.0;
  double snr_db_lo = 3.0;
  double snr_db_hi = 9.0;
  int refs_per_class = 5;
  double reference_duration = kDefaultReferenceDuration;
  int negatives_per_scene = 1;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = nlohmann::json{{"train_scenes", c.train_scenes},
                     {"val_scenes", c.val_scenes},
                     {"test_scenes", c.test_scenes},
                     {"scene_duration", c.scene_duration},
                     {"min_events_per_scene", c.min_events_per_scene},
                     {"max_events_per_scene", c.max_events_per_scene},
                     {"min_event_duration", c.min_event_duration},
                     {"max_event_duration", c.max_event_duration},
                     {"snr_db_lo", c.snr_db_lo},
                     {"snr_db_hi", c.snr_db_hi},
                     {"refs_per_class", c.refs_per_class},
                     {"reference_duration", c.reference_duration},
                     {"negatives_per_scene", c.negatives_per_scene},
                     {"seed", c.seed}};
}

struct BuiltSplit {
  std::vector<Scene> scenes;
  DatasetManifest strong;
  DatasetManifest strong_plus;
};

struct BuiltCorpus {
  std::string root;
  std::vector<std::string> class_names;
  std::vector<ReferenceClip> refs;
  std::map<SplitKind, BuiltSplit> splits;
};

namespace detail {

inline double quantize_ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

inline std::vector<EventSpec> sample_scene_events(Rng& rng, const CorpusConfig& cfg) {
  const int n_events = static_cast<int>(
      rng.uniform_int(cfg.min_events_per_scene, cfg.max_events_per_scene));
  std::vector<EventSpec> events;
  events.reserve(static_cast<std::size_t>(n_events));
  for (int e = 0; e < n_events; ++e) {
    EventSpec ev;
    ev.class_id = static_cast<int>(rng.uniform_int(0, kNumClasses - 1));
    ev.duration = quantize_ms(rng.uniform(cfg.min_event_duration, cfg.max_event_duration));
    ev.onset = quantize_ms(rng.uniform(0.0, cfg.scene_duration - ev.duration));
    ev.snr_db = rng.uniform(cfg.snr_db_lo, cfg.snr_db_hi);
    events.push_back(ev);
  }
  return events;
}

}  // namespace detail

// Builds the whole corpus under out_dir. Deterministic for a given config:
// same seed, byte-identical files. Throws if out_dir exists non-empty and
// force is false.
inline BuiltCorpus build_corpus(const CorpusConfig& cfg, const FrameConvention& conv,
                                const std::string& out_dir, bool force = false) {
  namespace fs = std::filesystem;
  if (cfg.train_scenes + cfg.val_scenes + cfg.test_scenes <= 0)
    throw std::runtime_error("empty dataset");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
    throw std::runtime_error("output directory exists and is not empty (use --force): " +
                             out_dir);
  fs::create_directories(fs::path(out_dir) / "audio" / "refs");
  fs::create_directories(fs::path(out_dir) / "audio" / "scenes");
  fs::create_directories(fs::path(out_dir) / "annotations");

  BuiltCorpus corpus;
  corpus.root = out_dir;
  corpus.class_names = urban_class_names();
  save_class_names((fs::path(out_dir) / "classes.txt").string(), corpus.class_names);
  {
    nlohmann::json j = cfg;
    std::ofstream os(fs::path(out_dir) / "corpus_config.json", std::ios::trunc);
    os << j.dump(2) << "\n";
  }

  // Reference bank: refs_per_class isolated events per class.
  for (int c = 0; c < kNumClasses; ++c) {
    for (int k = 0; k < cfg.refs_per_class; ++k) {
      ReferenceClip ref;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "ref_c%02d_%02d", c, k);
      ref.ref_id = buf;
      ref.class_id = c;
      ref.audio_path = "audio/refs/" + ref.ref_id + ".wav";
      const Waveform audio = synth_event(
          c, cfg.reference_duration,
          derive_seed(cfg.seed, 0x8EF, static_cast<std::uint64_t>(c),
                      static_cast<std::uint64_t>(k)));
      write_wav((fs::path(out_dir) / ref.audio_path).string(), audio);
      corpus.refs.push_back(std::move(ref));
    }
  }

  const std::vector<std::pair<SplitKind, int>> split_plan = {
      {SplitKind::kTrain, cfg.train_scenes},
      {SplitKind::kVal, cfg.val_scenes},
      {SplitKind::kTest, cfg.test_scenes}};

  std::vector<PairCountRow> count_rows;
  for (const auto& [split, n_scenes] : split_plan) {
    BuiltSplit built;
    const std::uint64_t split_tag = static_cast<std::uint64_t>(split) + 0x51;
    for (int i = 0; i < n_scenes; ++i) {
      Rng rng(derive_seed(cfg.seed, split_tag, static_cast<std::uint64_t>(i)));
      const auto events = detail::sample_scene_events(rng, cfg);
      const std::uint64_t bg_seed =
          derive_seed(cfg.seed, split_tag, static_cast<std::uint64_t>(i), 0xB6);
      SceneAudio sa = build_scene(events, bg_seed, cfg.scene_duration);

      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_%04d", to_string(split).c_str(), i);
      sa.scene.scene_id = buf;
      sa.scene.audio_path = "audio/scenes/" + sa.scene.scene_id + ".wav";
      write_wav((fs::path(out_dir) / sa.scene.audio_path).string(), sa.audio);
      save_annotations((fs::path(out_dir) / "annotations" / (sa.scene.scene_id + ".txt")).string(),
                       sa.scene, corpus.class_names);
      built.scenes.push_back(std::move(sa.scene));
    }

    const std::uint64_t pair_seed = derive_seed(cfg.seed, 0x1AB5, split_tag);
    built.strong = build_pairs(built.scenes, corpus.refs, PairMode::kStrong,
                               cfg.negatives_per_scene, pair_seed, conv, corpus.class_names);
    built.strong.split = split;
    built.strong_plus = build_pairs(built.scenes, corpus.refs, PairMode::kStrongPlus,
                                    cfg.negatives_per_scene, pair_seed, conv, corpus.class_names);
    built.strong_plus.split = split;

    save_manifest((fs::path(out_dir) / (to_string(split) + "_strong.tsv")).string(),
                  built.strong);
    save_manifest((fs::path(out_dir) / (to_string(split) + "_strong_plus.tsv")).string(),
                  built.strong_plus);

    PairCountRow row;
    row.split_name = split == SplitKind::kTrain   ? "Training"
                     : split == SplitKind::kVal ? "Validation"
                                                  : "Test";
    row.strong = built.strong.pairs.size();
    row.strong_plus = built.strong_plus.pairs.size();
    count_rows.push_back(row);

    corpus.splits.emplace(split, std::move(built));
  }

  {
    std::ofstream os(fs::path(out_dir) / "summary.txt", std::ios::trunc);
    os << format_count_table(count_rows);
  }
  return corpus;
}

// Loads one split of a corpus written by build_corpus (or hand-assembled in
// the same layout). Scene durations come from the audio headers.
struct LoadedSplit {
  DatasetManifest manifest;
  std::map<std::string, Scene> scenes;  // by scene_id
  std::string root;
};

inline LoadedSplit load_split(const std::string& root, SplitKind split, PairMode mode) {
  namespace fs = std::filesystem;
  LoadedSplit out;
  out.root = root;
  const auto class_names = load_class_names((fs::path(root) / "classes.txt").string());
  const std::string manifest_path =
      (fs::path(root) / (to_string(split) + "_" + to_string(mode) + ".tsv")).string();
  out.manifest = load_manifest(manifest_path, class_names);
  out.manifest.split = split;
  out.manifest.mode = mode;
  for (const PairSample& p : out.manifest.pairs) {
    if (out.scenes.count(p.scene_id)) continue;
    const Waveform audio = read_wav((fs::path(root) / p.scene_audio_path).string());
    Scene scene = parse_annotations(
        (fs::path(root) / "annotations" / (p.scene_id + ".txt")).string(), p.scene_id,
        audio.duration(), class_names);
    scene.audio_path = p.scene_audio_path;
    out.scenes.emplace(p.scene_id, std::move(scene));
  }
  return out;
}

// Fills frame targets for every pair from the sidecar events.
inline void attach_frame_targets(DatasetManifest& manifest,
                                 const std::map<std::string, Scene>& scenes,
                                 const FrameConvention& conv) {
  for (PairSample& p : manifest.pairs) {
    const auto it = scenes.find(p.scene_id);
    if (it == scenes.end())
      throw std::runtime_error("attach_frame_targets: unknown scene " + p.scene_id);
    const Scene& scene = it->second;
    p.frame_targets = frame_targets_for(scene, p.target_class,
                                        conv.encoder_frames(scene.duration),
                                        conv.encoder_hop_s());
    if (!p.positive) {
      for (auto v : p.frame_targets)
        if (v) throw std::runtime_error("attach_frame_targets: negative pair with activity");
    }
  }
}

}  // namespace tsd
