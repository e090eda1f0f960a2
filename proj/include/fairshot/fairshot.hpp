/*
 * Copyright 2026 The fairshot Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRSHOT_FAIRSHOT_HPP
#define FAIRSHOT_FAIRSHOT_HPP

#include "fairshot/bias.hpp"
#include "fairshot/corpus.hpp"
#include "fairshot/embeddings.hpp"
#include "fairshot/error.hpp"
#include "fairshot/harness.hpp"
#include "fairshot/metrics.hpp"
#include "fairshot/partition.hpp"
#include "fairshot/rng.hpp"
#include "fairshot/text.hpp"
#include "fairshot/trainer.hpp"

#endif  // FAIRSHOT_FAIRSHOT_HPP
