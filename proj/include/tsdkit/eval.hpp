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

// Post-processing and segment-based scoring.
//
// Pipeline per evaluated pair: frame probabilities are binarized at a fixed
// threshold (values exactly at the threshold count as active), smoothed with
// a width-3 median filter (zero padded at the edges), and merged into events
// as maximal active runs. Both the predicted events and the ground-truth
// events are then rasterized onto fixed-length segments and tallied as
// segment-level TP/FP/FN/TN.
//
// A clip of duration d has ceil(d / segment_duration) segments; segment s
// covers [s * seg, (s + 1) * seg). An event [on, off) marks segments
// floor(on / seg) through ceil(off / seg) - 1. Negative pairs have no true
// activity, so every predicted segment on them is a false positive.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace tsd {

using EventInterval = std::pair<double, double>;  // [onset, offset) in seconds

inline std::vector<int> binarize(const Eigen::VectorXd& probs, double threshold) {
  std::vector<int> out(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.size(); ++i) out[static_cast<std::size_t>(i)] =
      probs(i) >= threshold ? 1 : 0;
  return out;
}

// Width-3 median filter over a binary sequence, zero padded, which for
// binary values is a 2-of-3 majority vote. Isolated spikes and holes of one
// frame are removed; [1, 0, 1] becomes [0, 1, 0].
inline std::vector<int> median_filter3(const std::vector<int>& x) {
  std::vector<int> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int left = i > 0 ? x[i - 1] : 0;
    const int right = i + 1 < x.size() ? x[i + 1] : 0;
    out[i] = (left + x[i] + right) >= 2 ? 1 : 0;
  }
  return out;
}

// Maximal runs of active frames [i..j] become events
// [i * hop, (j + 1) * hop).
inline std::vector<EventInterval> frames_to_events(const std::vector<int>& active,
                                                   double frame_hop_s) {
  std::vector<EventInterval> events;
  std::size_t i = 0;
  while (i < active.size()) {
    if (!active[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < active.size() && active[j + 1]) ++j;
    events.emplace_back(static_cast<double>(i) * frame_hop_s,
                        static_cast<double>(j + 1) * frame_hop_s);
    i = j + 1;
  }
  return events;
}

// Guard for time/segment ratios whose exact value is an integer but whose
// double quotient lands a hair on the wrong side (0.6 / 0.2 is 2.999...96),
// which would shift a boundary-aligned event into the neighboring segment.
// Real ratios are at least milliseconds over tenths of a second apart, so a
// 1e-9 nudge can only ever repair such boundary cases.
namespace detail {
constexpr double kSegmentRatioEps = 1e-9;
}

inline int segments_in_clip(double duration_s, double segment_duration_s) {
  return static_cast<int>(
      std::ceil(duration_s / segment_duration_s - detail::kSegmentRatioEps));
}

inline std::vector<char> events_to_segments(const std::vector<EventInterval>& events,
                                            int n_segments, double segment_duration_s) {
  std::vector<char> active(static_cast<std::size_t>(n_segments), 0);
  for (const auto& [on, off] : events) {
    if (off <= on) continue;
    long s0 = static_cast<long>(
        std::floor(on / segment_duration_s + detail::kSegmentRatioEps));
    long s1 = static_cast<long>(
        std::ceil(off / segment_duration_s - detail::kSegmentRatioEps));
    s0 = std::max(s0, 0L);
    s1 = std::min(s1, static_cast<long>(n_segments));
    for (long s = s0; s < s1; ++s) active[static_cast<std::size_t>(s)] = 1;
  }
  return active;
}

struct SegmentTally {
  long tp = 0, fp = 0, fn = 0, tn = 0;

  long total() const { return tp + fp + fn + tn; }

  SegmentTally& operator+=(const SegmentTally& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

inline SegmentTally tally_segments(const std::vector<char>& ref, const std::vector<char>& est) {
  SegmentTally t;
  for (std::size_t s = 0; s < ref.size(); ++s) {
    if (ref[s] && est[s]) ++t.tp;
    else if (!ref[s] && est[s]) ++t.fp;
    else if (ref[s] && !est[s]) ++t.fn;
    else ++t.tn;
  }
  return t;
}

inline double f1_from_tally(const SegmentTally& t) {
  const double denom = 2.0 * static_cast<double>(t.tp) + static_cast<double>(t.fp) +
                       static_cast<double>(t.fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(t.tp) / denom;
}

inline double accuracy_from_tally(const SegmentTally& t) {
  return t.total() == 0 ? 0.0
                        : static_cast<double>(t.tp + t.tn) / static_cast<double>(t.total());
}

struct EvalConfig {
  double threshold = 0.37;
  double segment_duration = 0.2;
  bool median_filter = true;
};

// Everything needed to score one (scene, reference) pair.
struct PairEval {
  int target_class = 0;
  double clip_duration = 0.0;
  std::vector<EventInterval> ref_events;  // true intervals of the target class
  Eigen::VectorXd probs;                  // per-frame detection probabilities
  double frame_hop_s = 0.0;
};

inline std::vector<EventInterval> predict_events(const Eigen::VectorXd& probs,
                                                 double frame_hop_s, const EvalConfig& cfg) {
  std::vector<int> active = binarize(probs, cfg.threshold);
  if (cfg.median_filter) active = median_filter3(active);
  return frames_to_events(active, frame_hop_s);
}

struct EvalReport {
  int n_classes = 0;
  std::size_t n_pairs = 0;
  std::vector<SegmentTally> per_class;
  std::vector<double> class_f1;
  SegmentTally overall;
  double micro_f1 = 0.0;
  // Mean F1 over classes with any true or predicted activity; classes that
  // never appear on either side are excluded rather than counted as zero.
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

inline EvalReport evaluate(const std::vector<PairEval>& pairs, int n_classes,
                           const EvalConfig& cfg = {}) {
  EvalReport rep;
  rep.n_classes = n_classes;
  rep.n_pairs = pairs.size();
  rep.per_class.assign(static_cast<std::size_t>(n_classes), SegmentTally{});
  for (const PairEval& p : pairs) {
    if (p.target_class < 0 || p.target_class >= n_classes)
      throw std::invalid_argument("evaluate: target class out of range");
    const int n_seg = segments_in_clip(p.clip_duration, cfg.segment_duration);
    const std::vector<char> ref = events_to_segments(p.ref_events, n_seg, cfg.segment_duration);
    const std::vector<char> est = events_to_segments(
        predict_events(p.probs, p.frame_hop_s, cfg), n_seg, cfg.segment_duration);
    const SegmentTally t = tally_segments(ref, est);
    rep.per_class[static_cast<std::size_t>(p.target_class)] += t;
    rep.overall += t;
  }
  rep.class_f1.resize(static_cast<std::size_t>(n_classes));
  double macro_sum = 0.0;
  int macro_n = 0;
  for (int c = 0; c < n_classes; ++c) {
    const SegmentTally& t = rep.per_class[static_cast<std::size_t>(c)];
    rep.class_f1[static_cast<std::size_t>(c)] = f1_from_tally(t);
    if (t.tp + t.fp + t.fn > 0) {
      macro_sum += rep.class_f1[static_cast<std::size_t>(c)];
      ++macro_n;
    }
  }
  rep.macro_f1 = macro_n == 0 ? 0.0 : macro_sum / macro_n;
  rep.micro_f1 = f1_from_tally(rep.overall);
  rep.accuracy = accuracy_from_tally(rep.overall);
  return rep;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline nlohmann::json eval_report_to_json(const EvalReport& rep,
                                          const std::vector<std::string>& class_names) {
  nlohmann::json per_class = nlohmann::json::array();
  for (int c = 0; c < rep.n_classes; ++c) {
    const SegmentTally& t = rep.per_class[static_cast<std::size_t>(c)];
    per_class.push_back({{"class", class_names.at(static_cast<std::size_t>(c))},
                         {"tp", t.tp},
                         {"fp", t.fp},
                         {"fn", t.fn},
                         {"tn", t.tn},
                         {"f1", rep.class_f1[static_cast<std::size_t>(c)]}});
  }
  return nlohmann::json{{"n_pairs", rep.n_pairs},
                        {"micro_f1", rep.micro_f1},
                        {"macro_f1", rep.macro_f1},
                        {"accuracy", rep.accuracy},
                        {"overall",
                         {{"tp", rep.overall.tp},
                          {"fp", rep.overall.fp},
                          {"fn", rep.overall.fn},
                          {"tn", rep.overall.tn}}},
                        {"per_class", per_class}};
}

inline std::string format_eval_table(const EvalReport& rep,
                                     const std::vector<std::string>& class_names) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-20s %6s %6s %6s %6s %8s\n", "class", "tp", "fp", "fn",
                "tn", "f1");
  out += line;
  for (int c = 0; c < rep.n_classes; ++c) {
    const SegmentTally& t = rep.per_class[static_cast<std::size_t>(c)];
    std::snprintf(line, sizeof(line), "%-20s %6ld %6ld %6ld %6ld %8.4f\n",
                  class_names.at(static_cast<std::size_t>(c)).c_str(), t.tp, t.fp, t.fn, t.tn,
                  rep.class_f1[static_cast<std::size_t>(c)]);
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "pairs %zu  micro-F1 %.4f  macro-F1 %.4f  accuracy %.4f\n", rep.n_pairs,
                rep.micro_f1, rep.macro_f1, rep.accuracy);
  out += line;
  return out;
}

// Minimal self-contained SVG of a probability curve with the true intervals
// shaded and the threshold drawn as a horizontal line.
inline void write_prob_plot_svg(const std::string& path, const Eigen::VectorXd& probs,
                                double frame_hop_s, const std::vector<EventInterval>& truth,
                                double threshold, const std::string& title) {
  const int width = 800, height = 220, pad = 30;
  const double t_max = std::max(1e-9, static_cast<double>(probs.size()) * frame_hop_s);
  const auto x_of = [&](double t) {
    return pad + t / t_max * (width - 2 * pad);
  };
  const auto y_of = [&](double p) { return height - pad - p * (height - 2 * pad); };

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write plot: " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "' viewBox='0 0 " << width << " " << height << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  for (const auto& [on, off] : truth)
    os << "<rect x='" << x_of(on) << "' y='" << pad << "' width='" << (x_of(off) - x_of(on))
       << "' height='" << (height - 2 * pad) << "' fill='#cde6cd'/>\n";
  os << "<line x1='" << pad << "' y1='" << y_of(threshold) << "' x2='" << (width - pad)
     << "' y2='" << y_of(threshold) << "' stroke='#cc4444' stroke-dasharray='4 3'/>\n";
  os << "<polyline fill='none' stroke='#3355bb' stroke-width='1.5' points='";
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    os << x_of((static_cast<double>(i) + 0.5) * frame_hop_s) << "," << y_of(probs(i)) << " ";
  os << "'/>\n";
  os << "<rect x='" << pad << "' y='" << pad << "' width='" << (width - 2 * pad)
     << "' height='" << (height - 2 * pad) << "' fill='none' stroke='#444'/>\n";
  os << "<text x='" << pad << "' y='" << (pad - 8) << "' font-family='monospace' font-size='12'>"
     << title << "</text>\n";
  os << "</svg>\n";
}

}  // namespace tsd
