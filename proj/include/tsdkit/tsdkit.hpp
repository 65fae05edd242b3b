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

// Convenience umbrella header.

#pragma once

#include "tsdkit/augment.hpp"
#include "tsdkit/config.hpp"
#include "tsdkit/corpus.hpp"
#include "tsdkit/dataset.hpp"
#include "tsdkit/eval.hpp"
#include "tsdkit/features.hpp"
#include "tsdkit/fft.hpp"
#include "tsdkit/loss.hpp"
#include "tsdkit/model.hpp"
#include "tsdkit/nn.hpp"
#include "tsdkit/optim.hpp"
#include "tsdkit/rng.hpp"
#include "tsdkit/scene.hpp"
#include "tsdkit/train.hpp"
#include "tsdkit/wave.hpp"
