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

// Command line front end.
//
//   tsdkit build-dataset --config run.json --out data/
//   tsdkit train         --config run.json --data data/ --out runs/a
//   tsdkit evaluate      --checkpoint runs/a/checkpoints/best.ckpt --data data/
//   tsdkit ablate        --config run.json --data data/ --out runs/ablation
//   tsdkit predict       --checkpoint best.ckpt --scene s.wav --ref r.wav
//
// Exit status is 0 only when the requested action completed; any error is a
// one-line diagnostic on stderr. TSDKIT_RUN_DIR provides a default --out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsdkit/tsdkit.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("TSDKIT_RUN_DIR");
  return env ? std::string(env) : std::string();
}

std::string require_dir(const std::string& flag_value, const std::string& cfg_value,
                        const std::string& what) {
  if (!flag_value.empty()) return flag_value;
  if (!cfg_value.empty()) return cfg_value;
  throw std::runtime_error("missing " + what + " (flag or config)");
}

std::vector<int> parse_class_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

// Shared by train/ablate: load a split and fill per-pair frame targets from
// the sidecar annotations.
tsd::LoadedSplit load_split_with_targets(const std::string& data_dir, tsd::SplitKind split,
                                         tsd::PairMode mode, const tsd::FrameConvention& conv) {
  tsd::LoadedSplit s = tsd::load_split(data_dir, split, mode);
  tsd::attach_frame_targets(s.manifest, s.scenes, conv);
  return s;
}

int cmd_build_dataset(const std::string& config_path, const std::string& out_flag, bool force) {
  tsd::RunConfig cfg = tsd::load_run_config(config_path);
  const std::string out = require_dir(out_flag, cfg.data_dir, "output directory (--out)");
  tsd::FrameConvention conv{tsd::kFrontEndSampleRate, cfg.features.hop, 4};
  const tsd::BuiltCorpus corpus = tsd::build_corpus(cfg.corpus, conv, out, force);
  std::ifstream summary(fs::path(out) / "summary.txt");
  std::cout << summary.rdbuf();
  std::cout << "dataset written to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_flag,
              const std::string& out_flag, const std::string& fusion_flag,
              const std::string& mode_flag, const std::string& unseen_csv, bool dry_run) {
  tsd::RunConfig cfg = tsd::load_run_config(config_path);
  if (!fusion_flag.empty()) cfg.fusion = tsd::fusion_kind_from_string(fusion_flag);
  if (!mode_flag.empty())
    cfg.pair_mode = mode_flag == "strong_plus" ? tsd::PairMode::kStrongPlus
                                               : tsd::PairMode::kStrong;
  const std::string data_dir = require_dir(data_flag, cfg.data_dir, "data directory (--data)");
  std::string out_dir = !out_flag.empty() ? out_flag : cfg.out_dir;
  if (out_dir.empty()) out_dir = default_out_dir();
  if (out_dir.empty()) throw std::runtime_error("missing output directory (--out)");

  const std::vector<std::string> class_names =
      tsd::load_class_names((fs::path(data_dir) / "classes.txt").string());
  const tsd::ModelConfig mc = cfg.model_config(static_cast<int>(class_names.size()));
  tsd::FrameConvention conv{tsd::kFrontEndSampleRate, cfg.features.hop,
                            mc.encoder.downsample()};

  tsd::LoadedSplit train_split =
      load_split_with_targets(data_dir, tsd::SplitKind::kTrain, cfg.pair_mode, conv);
  tsd::LoadedSplit val_split =
      load_split_with_targets(data_dir, tsd::SplitKind::kVal, cfg.pair_mode, conv);
  tsd::LoadedSplit test_split =
      load_split_with_targets(data_dir, tsd::SplitKind::kTest, cfg.pair_mode, conv);

  if (!unseen_csv.empty()) {
    const std::vector<int> held_out = parse_class_list(unseen_csv);
    tsd::apply_unseen_class_split(train_split.manifest, test_split.manifest, held_out);
    val_split.manifest = tsd::filter_manifest(val_split.manifest, [&](const tsd::PairSample& p) {
      for (int c : held_out)
        if (p.target_class == c) return false;
      return true;
    });
    std::cout << "unseen-class split: " << train_split.manifest.pairs.size()
              << " train pairs, " << test_split.manifest.pairs.size() << " held-out test pairs\n";
  }

  tsd::TsdModel model(mc);
  model.init(cfg.seed);
  {
    tsd::ParamRegistry reg = model.params();
    std::cout << "model: fusion " << tsd::to_string(mc.fusion.kind) << ", "
              << (mc.share_encoder ? "unified" : "dual") << " encoder, " << reg.size()
              << " parameters\n";
  }
  std::cout << "pairs: train " << train_split.manifest.pairs.size() << ", val "
            << val_split.manifest.pairs.size() << ", test " << test_split.manifest.pairs.size()
            << " (" << tsd::to_string(cfg.pair_mode) << ")\n";
  if (dry_run) {
    std::cout << "dry run, stopping before training\n";
    return 0;
  }

  fs::create_directories(out_dir);
  cfg.data_dir = data_dir;
  cfg.out_dir = out_dir;
  tsd::snapshot_run_config(cfg, (fs::path(out_dir) / "run_config.json").string());

  tsd::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.eval = cfg.eval;
  tc.checkpoint_dir = (fs::path(out_dir) / "checkpoints").string();
  const tsd::FitResult fr = tsd::fit(model, train_split, val_split, cfg.features, tc);

  nlohmann::json history = nlohmann::json::array();
  for (const tsd::EpochLog& e : fr.epochs)
    history.push_back({{"epoch", e.epoch},
                       {"ce", e.ce},
                       {"bce", e.bce},
                       {"total", e.total},
                       {"val_f1", e.val_f1},
                       {"lr", e.lr}});
  write_text((fs::path(out_dir) / "history.json").string(),
             nlohmann::json{{"epochs", history},
                            {"best_epoch", fr.best_epoch},
                            {"best_val_f1", fr.best_val_f1}}
                 .dump(2) +
                 "\n");

  tsd::FeatureCache test_cache(test_split.root, cfg.features);
  const tsd::SplitEvalResult test = tsd::evaluate_split(model, test_split, test_cache, cfg.eval);
  const std::string table = tsd::format_eval_table(test.all, class_names);
  std::cout << "test set:\n" << table;
  write_text((fs::path(out_dir) / "test_report.txt").string(), table);
  write_text((fs::path(out_dir) / "test_report.json").string(),
             tsd::eval_report_to_json(test.all, class_names).dump(2) + "\n");
  std::cout << "best val_f1 " << fr.best_val_f1 << " at epoch " << fr.best_epoch
            << "; outputs in " << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& split_name, const std::string& mode_flag, double threshold,
                 const std::string& out_flag, int plots) {
  tsd::Checkpoint ckpt = tsd::load_checkpoint(ckpt_path);
  tsd::FeatureConfig feat;
  if (ckpt.metadata.contains("features")) {
    const auto& f = ckpt.metadata.at("features");
    feat.window = f.value("window", feat.window);
    feat.hop = f.value("hop", feat.hop);
    feat.n_mels = f.value("n_mels", feat.n_mels);
  }
  if (feat.n_mels != ckpt.config.encoder.n_mels)
    throw std::runtime_error("checkpoint feature config does not match its encoder");

  tsd::SplitKind split = tsd::SplitKind::kTest;
  if (split_name == "train") split = tsd::SplitKind::kTrain;
  else if (split_name == "val") split = tsd::SplitKind::kVal;
  else if (split_name != "test") throw std::runtime_error("unknown split: " + split_name);
  const tsd::PairMode mode = mode_flag == "strong_plus" ? tsd::PairMode::kStrongPlus
                                                        : tsd::PairMode::kStrong;

  tsd::LoadedSplit s = tsd::load_split(data_dir, split, mode);
  tsd::EvalConfig ecfg;
  if (threshold >= 0.0) ecfg.threshold = threshold;
  tsd::FeatureCache cache(s.root, feat);
  const tsd::SplitEvalResult res = tsd::evaluate_split(ckpt.model, s, cache, ecfg);
  const std::string table = tsd::format_eval_table(res.all, ckpt.class_names);
  std::cout << table;
  std::cout << "positive pairs only: micro-F1 " << res.positives.micro_f1 << "\n";

  std::string out_dir = !out_flag.empty() ? out_flag : default_out_dir();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "eval_report.txt").string(), table);
    write_text((fs::path(out_dir) / "eval_report.json").string(),
               tsd::eval_report_to_json(res.all, ckpt.class_names).dump(2) + "\n");
    if (plots > 0) {
      const int d = ckpt.model.config().encoder.downsample();
      const double hop_s = static_cast<double>(feat.hop) / tsd::kFrontEndSampleRate * d;
      int made = 0;
      for (const tsd::PairSample& p : s.manifest.pairs) {
        if (made >= plots) break;
        const Eigen::MatrixXd& mix = cache.get(p.scene_audio_path);
        const Eigen::MatrixXd& ref = cache.get(p.ref_audio_path);
        tsd::TsdModel::Cache mc;
        const tsd::ModelOutput out = ckpt.model.forward(mix, ref, mc);
        const tsd::Scene& scene = s.scenes.at(p.scene_id);
        std::vector<tsd::EventInterval> truth;
        for (const tsd::EventLabel& ev : scene.events)
          if (ev.class_id == p.target_class) truth.emplace_back(ev.onset, ev.offset);
        char name[128];
        std::snprintf(name, sizeof(name), "pair_%03d_%s.svg", made, p.scene_id.c_str());
        tsd::write_prob_plot_svg((fs::path(out_dir) / name).string(), out.detect_probs, hop_s,
                                 truth, ecfg.threshold,
                                 p.scene_id + " / " + p.ref_id + " (" +
                                     ckpt.class_names.at(static_cast<std::size_t>(
                                         p.target_class)) +
                                     ")");
        ++made;
      }
      std::cout << made << " plots written to " << out_dir << "\n";
    }
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_flag,
               const std::string& out_flag, const std::string& fusions_csv,
               const std::string& encoders_csv, const std::string& modes_csv) {
  tsd::RunConfig cfg = tsd::load_run_config(config_path);
  const std::string data_dir = require_dir(data_flag, cfg.data_dir, "data directory (--data)");
  std::string out_dir = !out_flag.empty() ? out_flag : cfg.out_dir;
  if (out_dir.empty()) out_dir = default_out_dir();

  std::vector<tsd::FusionKind> fusions;
  {
    std::stringstream ss(fusions_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) fusions.push_back(tsd::fusion_kind_from_string(tok));
  }
  std::vector<bool> shares;
  {
    std::stringstream ss(encoders_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "unified") shares.push_back(true);
      else if (tok == "dual") shares.push_back(false);
      else throw std::runtime_error("encoders must be unified or dual, got " + tok);
    }
  }
  std::vector<tsd::PairMode> modes;
  {
    std::stringstream ss(modes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "strong") modes.push_back(tsd::PairMode::kStrong);
      else if (tok == "strong_plus") modes.push_back(tsd::PairMode::kStrongPlus);
      else throw std::runtime_error("modes must be strong or strong_plus, got " + tok);
    }
  }

  const std::vector<std::string> class_names =
      tsd::load_class_names((fs::path(data_dir) / "classes.txt").string());
  const tsd::ModelConfig base = cfg.model_config(static_cast<int>(class_names.size()));
  tsd::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.eval = cfg.eval;

  std::vector<tsd::AblationRow> rows;
  for (const tsd::PairMode mode : modes)
    for (const bool share : shares)
      for (const tsd::FusionKind fusion : fusions) {
        tsd::AblationSpec spec{fusion, share, mode};
        std::cout << "=== " << tsd::to_string(fusion) << " / "
                  << (share ? "unified" : "dual") << " / " << tsd::to_string(mode) << "\n";
        rows.push_back(tsd::run_one_ablation(data_dir, base, cfg.features, tc, spec));
      }

  const std::string table = tsd::format_ablation_table(rows);
  std::cout << table;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "ablation.txt").string(), table);
  }
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& scene_path,
                const std::string& ref_path, double threshold, const std::string& out_path,
                const std::string& plot_path) {
  tsd::Checkpoint ckpt = tsd::load_checkpoint(ckpt_path);
  tsd::FeatureConfig feat;
  if (ckpt.metadata.contains("features")) {
    const auto& f = ckpt.metadata.at("features");
    feat.window = f.value("window", feat.window);
    feat.hop = f.value("hop", feat.hop);
    feat.n_mels = f.value("n_mels", feat.n_mels);
  }

  const auto load = [&](const std::string& p) {
    tsd::Waveform w = tsd::read_wav(p);
    if (w.sample_rate != tsd::kFrontEndSampleRate)
      w = tsd::resample(w, tsd::kFrontEndSampleRate);
    return tsd::compute_logmel(w, feat).values;
  };
  const Eigen::MatrixXd mix = load(scene_path);
  const Eigen::MatrixXd ref = load(ref_path);

  tsd::TsdModel::Cache mc;
  const tsd::ModelOutput out = ckpt.model.forward(mix, ref, mc);
  const int d = ckpt.model.config().encoder.downsample();
  const double hop_s = static_cast<double>(feat.hop) / tsd::kFrontEndSampleRate * d;

  tsd::EvalConfig ecfg;
  if (threshold >= 0.0) ecfg.threshold = threshold;
  const std::vector<tsd::EventInterval> events =
      tsd::predict_events(out.detect_probs, hop_s, ecfg);

  Eigen::Index tag_best = 0;
  out.tag_logits.maxCoeff(&tag_best);
  std::cout << "reference tagged as " << ckpt.class_names.at(static_cast<std::size_t>(tag_best))
            << "\n";
  std::string lines;
  for (const auto& [on, off] : events) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f\t%.3f\n", on, off);
    lines += buf;
  }
  std::cout << (events.empty() ? "no detections\n" : lines);
  if (!out_path.empty()) write_text(out_path, lines);
  if (!plot_path.empty())
    tsd::write_prob_plot_svg(plot_path, out.detect_probs, hop_s, {}, ecfg.threshold,
                             fs::path(scene_path).filename().string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reference-conditioned sound detection toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, fusion, mode, unseen, split = "test";
  std::string ckpt, scene_path, ref_path, pred_out, plot_path;
  std::string fusions = "multiply,film,cross_attention";
  std::string encoders = "unified";
  std::string modes = "strong";
  double threshold = -1.0;
  int plots = 0;
  bool force = false, dry_run = false;

  CLI::App* build = app.add_subcommand("build-dataset", "synthesize a corpus");
  build->add_option("--config", config_path, "run config JSON")->required();
  build->add_option("--out", out_dir, "output directory");
  build->add_flag("--force", force, "overwrite a non-empty output directory");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--out", out_dir, "run output directory");
  train->add_option("--fusion", fusion, "override fusion: multiply|film|cross_attention");
  train->add_option("--mode", mode, "override pair mode: strong|strong_plus");
  train->add_option("--unseen-classes", unseen, "comma separated class ids held out of training");
  train->add_flag("--dry-run", dry_run, "stop after printing the plan");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", split, "train|val|test (default test)");
  eval_cmd->add_option("--mode", mode, "pair mode: strong|strong_plus");
  eval_cmd->add_option("--threshold", threshold, "detection threshold override");
  eval_cmd->add_option("--out", out_dir, "report output directory");
  eval_cmd->add_option("--plots", plots, "write SVG plots for the first N pairs");

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare several variants");
  ablate->add_option("--config", config_path, "run config JSON")->required();
  ablate->add_option("--data", data_dir, "dataset directory");
  ablate->add_option("--out", out_dir, "output directory");
  ablate->add_option("--fusions", fusions, "comma separated fusion kinds");
  ablate->add_option("--encoders", encoders, "comma separated: unified,dual");
  ablate->add_option("--modes", modes, "comma separated: strong,strong_plus");

  CLI::App* predict = app.add_subcommand("predict", "run one scene/reference pair");
  predict->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  predict->add_option("--scene", scene_path, "scene WAV")->required();
  predict->add_option("--ref", ref_path, "reference WAV")->required();
  predict->add_option("--threshold", threshold, "detection threshold override");
  predict->add_option("--out", pred_out, "write detected events to this file");
  predict->add_option("--plot", plot_path, "write an SVG probability plot");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build_dataset(config_path, out_dir, force);
    if (train->parsed())
      return cmd_train(config_path, data_dir, out_dir, fusion, mode, unseen, dry_run);
    if (eval_cmd->parsed())
      return cmd_evaluate(ckpt, data_dir, split, mode, threshold, out_dir, plots);
    if (ablate->parsed())
      return cmd_ablate(config_path, data_dir, out_dir, fusions, encoders, modes);
    if (predict->parsed())
      return cmd_predict(ckpt, scene_path, ref_path, threshold, pred_out, plot_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
