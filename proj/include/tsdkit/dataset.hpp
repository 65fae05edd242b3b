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

// Reference-mixture pair construction and manifest/annotation formats.
//
// Stable on-disk formats:
//   manifest  — TSV, one pair per line, header:
//               scene_id  ref_id  target_class  polarity  scene_audio_path  ref_audio_path
//               (target_class is the integer class id; polarity is
//               "positive" or "negative"; audio paths are relative to the
//               manifest's directory)
//   sidecar   — annotations/<scene_id>.txt, TSV lines "onset<TAB>offset<TAB>class_name"
//   classes   — classes.txt, one class name per line, line number = class id
//
// Frame targets are never persisted; they are recomputed from the sidecar
// events with the frame-center rule: frame i is positive iff its center time
// (i + 0.5) * frame_hop_s lies inside [onset, offset) of any target event.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsdkit/rng.hpp"
#include "tsdkit/scene.hpp"
#include "tsdkit/wave.hpp"

namespace tsd {

enum class SplitKind { kTrain, kVal, kTest };
enum class PairMode { kStrong, kStrongPlus };

inline std::string to_string(SplitKind s) {
  switch (s) {
    case SplitKind::kTrain: return "train";
    case SplitKind::kVal: return "val";
    default: return "test";
  }
}
inline std::string to_string(PairMode m) {
  return m == PairMode::kStrong ? "strong" : "strong_plus";
}

struct PairSample {
  std::string scene_id;
  std::string ref_id;
  int target_class = 0;
  bool positive = true;
  std::string scene_audio_path;
  std::string ref_audio_path;
  std::vector<std::uint8_t> frame_targets;  // per encoder frame, filled on demand
};

struct DatasetManifest {
  SplitKind split = SplitKind::kTrain;
  PairMode mode = PairMode::kStrong;
  std::vector<PairSample> pairs;
  std::vector<std::string> class_names;
};

// Maps clip duration to the encoder frame grid: the front-end produces
// 1 + floor(n/hop) frames and the encoder downsamples time by `downsample`
// with ceil semantics.
struct FrameConvention {
  int sample_rate = 32000;
  int hop = 320;
  int downsample = 4;

  int spec_frames(double duration_s) const {
    const long n = static_cast<long>(std::llround(duration_s * sample_rate));
    return 1 + static_cast<int>(n / hop);
  }
  int encoder_frames(double duration_s) const {
    const int t_spec = spec_frames(duration_s);
    return (t_spec + downsample - 1) / downsample;
  }
  double encoder_hop_s() const {
    return static_cast<double>(hop) / sample_rate * downsample;
  }
};

inline std::vector<std::uint8_t> frame_targets_for(const Scene& scene, int target_class, int frames,
                                                   double frame_hop_s) {
  if (frames <= 0) throw std::runtime_error("frame_targets_for: frame count must be positive");
  std::vector<std::uint8_t> targets(static_cast<std::size_t>(frames), 0);
  for (const EventLabel& ev : scene.events) {
    if (ev.class_id != target_class) continue;
    for (int i = 0; i < frames; ++i) {
      const double center = (i + 0.5) * frame_hop_s;
      if (center >= ev.onset && center < ev.offset) targets[static_cast<std::size_t>(i)] = 1;
    }
  }
  return targets;
}

// Inverse of frame_targets_for up to one frame hop: maximal runs of ones
// back to intervals.
inline std::vector<std::pair<double, double>> targets_to_intervals(
    const std::vector<std::uint8_t>& targets, double frame_hop_s) {
  std::vector<std::pair<double, double>> out;
  std::size_t i = 0;
  while (i < targets.size()) {
    if (!targets[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < targets.size() && targets[j + 1]) ++j;
    out.emplace_back(static_cast<double>(i) * frame_hop_s,
                     static_cast<double>(j + 1) * frame_hop_s);
    i = j + 1;
  }
  return out;
}

// Builds the pair manifest. Strong mode: one positive pair per distinct class
// present in each scene, reference drawn seeded from that class's refs.
// Strong+ additionally draws `negatives_per_scene` negatives per scene from
// the classes absent in it; a scene containing every class skips its
// negatives with a logged warning.
inline DatasetManifest build_pairs(const std::vector<Scene>& scenes,
                                   const std::vector<ReferenceClip>& refs, PairMode mode,
                                   int negatives_per_scene, std::uint64_t seed,
                                   const FrameConvention& conv,
                                   const std::vector<std::string>& class_names =
                                       urban_class_names()) {
  const int n_classes = static_cast<int>(class_names.size());
  std::vector<std::vector<const ReferenceClip*>> refs_by_class(
      static_cast<std::size_t>(n_classes));
  for (const ReferenceClip& r : refs) {
    if (r.class_id < 0 || r.class_id >= n_classes)
      throw std::runtime_error("build_pairs: reference class id out of range");
    refs_by_class[static_cast<std::size_t>(r.class_id)].push_back(&r);
  }
  for (int c = 0; c < n_classes; ++c) {
    if (refs_by_class[static_cast<std::size_t>(c)].empty())
      throw std::runtime_error("build_pairs: no reference clips for class " + class_names[c]);
  }

  DatasetManifest manifest;
  manifest.mode = mode;
  manifest.class_names = class_names;

  std::size_t scene_index = 0;
  for (const Scene& scene : scenes) {
    Rng rng(derive_seed(seed, 0x9A17, scene_index));
    const int frames = conv.encoder_frames(scene.duration);
    const double hop_s = conv.encoder_hop_s();

    std::set<int> present;
    for (const EventLabel& ev : scene.events) present.insert(ev.class_id);

    for (int cls : present) {
      const auto& pool = refs_by_class[static_cast<std::size_t>(cls)];
      const ReferenceClip* ref = pool[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<long>(pool.size()) - 1))];
      PairSample pair;
      pair.scene_id = scene.scene_id;
      pair.ref_id = ref->ref_id;
      pair.target_class = cls;
      pair.positive = true;
      pair.scene_audio_path = scene.audio_path;
      pair.ref_audio_path = ref->audio_path;
      pair.frame_targets = frame_targets_for(scene, cls, frames, hop_s);
      manifest.pairs.push_back(std::move(pair));
    }

    if (mode == PairMode::kStrongPlus) {
      std::vector<int> absent;
      for (int c = 0; c < n_classes; ++c)
        if (present.count(c) == 0) absent.push_back(c);
      if (absent.empty()) {
        std::cerr << "[build_pairs] warning: scene " << scene.scene_id
                  << " contains every class, skipping its negatives\n";
      } else {
        for (int k = 0; k < negatives_per_scene; ++k) {
          const int cls = absent[static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<long>(absent.size()) - 1))];
          const auto& pool = refs_by_class[static_cast<std::size_t>(cls)];
          const ReferenceClip* ref = pool[static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<long>(pool.size()) - 1))];
          PairSample pair;
          pair.scene_id = scene.scene_id;
          pair.ref_id = ref->ref_id;
          pair.target_class = cls;
          pair.positive = false;
          pair.scene_audio_path = scene.audio_path;
          pair.ref_audio_path = ref->audio_path;
          pair.frame_targets.assign(static_cast<std::size_t>(frames), 0);
          manifest.pairs.push_back(std::move(pair));
        }
      }
    }
    ++scene_index;
  }
  return manifest;
}

// ── Stable text formats ─────────────────────────────────────────────────────

namespace detail {

inline std::string format_seconds(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

inline const char* kManifestHeader =
    "scene_id\tref_id\ttarget_class\tpolarity\tscene_audio_path\tref_audio_path";

inline void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << kManifestHeader << "\n";
  for (const PairSample& p : manifest.pairs) {
    out << p.scene_id << '\t' << p.ref_id << '\t' << p.target_class << '\t'
        << (p.positive ? "positive" : "negative") << '\t' << p.scene_audio_path << '\t'
        << p.ref_audio_path << "\n";
  }
}

// Loads a manifest; frame targets are left empty (recomputed from sidecars).
inline DatasetManifest load_manifest(const std::string& path,
                                     const std::vector<std::string>& class_names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  DatasetManifest manifest;
  manifest.class_names = class_names;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw std::runtime_error("unrecognized manifest header in " + path);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_tsv(line);
    if (fields.size() != 6)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 6 fields");
    PairSample p;
    p.scene_id = fields[0];
    p.ref_id = fields[1];
    p.target_class = std::stoi(fields[2]);
    if (p.target_class < 0 || p.target_class >= static_cast<int>(class_names.size()))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": class id out of range");
    if (fields[3] == "positive") {
      p.positive = true;
    } else if (fields[3] == "negative") {
      p.positive = false;
    } else {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad polarity '" +
                               fields[3] + "'");
    }
    p.scene_audio_path = fields[4];
    p.ref_audio_path = fields[5];
    manifest.pairs.push_back(std::move(p));
  }
  return manifest;
}

inline void save_annotations(const std::string& path, const Scene& scene,
                             const std::vector<std::string>& class_names) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write annotations: " + path);
  for (const EventLabel& ev : scene.events) {
    out << detail::format_seconds(ev.onset) << '\t' << detail::format_seconds(ev.offset) << '\t'
        << class_names[static_cast<std::size_t>(ev.class_id)] << "\n";
  }
}

// Parses one tab-separated "onset offset class_name" annotation file.
// duration_s <= 0 skips the clip-bound check (used when the audio has not
// been opened yet).
inline Scene parse_annotations(const std::string& path, const std::string& scene_id,
                               double duration_s, const std::vector<std::string>& class_names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotations: " + path);
  std::map<std::string, int> class_ids;
  for (std::size_t i = 0; i < class_names.size(); ++i)
    class_ids[class_names[i]] = static_cast<int>(i);

  Scene scene;
  scene.scene_id = scene_id;
  scene.duration = duration_s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_tsv(line);
    if (fields.size() != 3)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'onset<TAB>offset<TAB>class_name'");
    EventLabel ev;
    try {
      ev.onset = std::stod(fields[0]);
      ev.offset = std::stod(fields[1]);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number");
    }
    const auto it = class_ids.find(fields[2]);
    if (it == class_ids.end())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown class name '" +
                               fields[2] + "'");
    ev.class_id = it->second;
    if (ev.onset < 0.0 || ev.offset <= ev.onset)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": invalid interval (need 0 <= onset < offset)");
    if (duration_s > 0.0 && ev.offset > duration_s + 1e-9)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": event extends past clip end");
    scene.events.push_back(ev);
  }
  return scene;
}

inline void save_class_names(const std::string& path, const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write class list: " + path);
  for (const auto& n : names) out << n << "\n";
}

inline std::vector<std::string> load_class_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open class list: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  if (names.empty()) throw std::runtime_error("empty class list: " + path);
  return names;
}

// Ingests external URBAN-SED-style data: one annotation .txt per clip in
// annotation_dir, matching <stem>.wav in audio_dir. Clip duration comes from
// the audio header and bounds-checks the events.
inline std::vector<Scene> ingest_external(const std::string& annotation_dir,
                                          const std::string& audio_dir,
                                          const std::vector<std::string>& class_names) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(annotation_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Scene> scenes;
  for (const fs::path& ann : files) {
    const std::string stem = ann.stem().string();
    const fs::path wav = fs::path(audio_dir) / (stem + ".wav");
    if (!fs::exists(wav))
      throw std::runtime_error("ingest: missing audio for " + ann.string() + " (expected " +
                               wav.string() + ")");
    const Waveform audio = read_wav(wav.string());
    Scene scene = parse_annotations(ann.string(), stem, audio.duration(), class_names);
    scene.audio_path = wav.string();
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

// ── Count summary (strong vs strong+ per split) ─────────────────────────────

struct PairCountRow {
  std::string split_name;
  std::size_t strong = 0;
  std::size_t strong_plus = 0;
};

inline std::string format_count_table(const std::vector<PairCountRow>& rows) {
  std::ostringstream os;
  os << "Type         Strong   Strong+\n";
  for (const auto& r : rows) {
    std::string name = r.split_name;
    name.resize(12, ' ');
    os << name << ' ' << r.strong;
    for (std::size_t i = std::to_string(r.strong).size(); i < 8; ++i) os << ' ';
    os << ' ' << r.strong_plus << "\n";
  }
  return os.str();
}

}  // namespace tsd
