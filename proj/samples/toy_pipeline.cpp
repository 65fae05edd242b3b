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

// End-to-end miniature run: synthesize a pocket-sized corpus, train the tiny
// model for a few epochs, and print the test-set table. Writes everything
// under ./toy_run.

#include <cstdio>
#include <iostream>

#include "tsdkit/tsdkit.hpp"

int main() {
  tsd::CorpusConfig corpus;
  corpus.train_scenes = 12;
  corpus.val_scenes = 4;
  corpus.test_scenes = 4;
  corpus.scene_duration = 2.5;
  corpus.reference_duration = 1.0;
  corpus.max_events_per_scene = 2;
  corpus.seed = 11;

  const tsd::FeatureConfig feat{1024, 320, 64};
  tsd::FrameConvention conv{tsd::kFrontEndSampleRate, feat.hop, 4};
  const std::string root = "toy_run/data";
  tsd::build_corpus(corpus, conv, root, /*force=*/true);

  tsd::LoadedSplit train = tsd::load_split(root, tsd::SplitKind::kTrain, tsd::PairMode::kStrong);
  tsd::LoadedSplit val = tsd::load_split(root, tsd::SplitKind::kVal, tsd::PairMode::kStrong);
  tsd::LoadedSplit test = tsd::load_split(root, tsd::SplitKind::kTest, tsd::PairMode::kStrong);
  tsd::attach_frame_targets(train.manifest, train.scenes, conv);

  tsd::ModelConfig mc = tsd::ModelConfig::tiny(feat.n_mels);
  tsd::TsdModel model(mc);
  model.init(corpus.seed);

  tsd::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.lr = 3e-4;
  tc.seed = corpus.seed;
  tc.checkpoint_dir = "toy_run/checkpoints";
  tsd::fit(model, train, val, feat, tc);

  tsd::FeatureCache cache(test.root, feat);
  const tsd::SplitEvalResult res = tsd::evaluate_split(model, test, cache, tc.eval);
  std::cout << tsd::format_eval_table(res.all, test.manifest.class_names);
  return 0;
}
