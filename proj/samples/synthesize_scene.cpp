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

// Synthesizes one 10 s scene with three events over pink noise background and
// writes scene.wav plus its annotation lines to stdout.

#include <cstdio>

#include "tsdkit/scene.hpp"

int main() {
  std::vector<tsd::EventSpec> events;
  events.push_back({1, 1.0, 1.5, 6.0});   // car_horn at 1.0 s for 1.5 s
  events.push_back({8, 4.0, 2.0, 9.0});   // siren at 4.0 s for 2.0 s
  events.push_back({3, 7.25, 0.8, 3.0});  // dog_bark at 7.25 s for 0.8 s

  const tsd::SceneAudio sa = tsd::build_scene(events, /*background_seed=*/42);
  tsd::write_wav("scene.wav", sa.audio);

  const auto names = tsd::urban_class_names();
  std::printf("wrote scene.wav (%.1f s, rms %.4f)\n", sa.audio.duration(), sa.audio.rms());
  for (const tsd::EventLabel& ev : sa.scene.events)
    std::printf("%8.3f %8.3f  %s\n", ev.onset, ev.offset,
                names[static_cast<std::size_t>(ev.class_id)].c_str());
  return 0;
}
