/*
 * Copyright 2026 The cbdebug Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CBDEBUG_RANDOM_H_
#define CBDEBUG_RANDOM_H_

#include <cstdint>
#include <random>

namespace cbdebug {

using Rng = std::mt19937_64;

// Derives an independent stream seed from (seed, stream) so that parallel
// work items get reproducible, order-independent generators.
uint64_t DeriveSeed(uint64_t seed, uint64_t stream);

inline Rng MakeRng(uint64_t seed, uint64_t stream) {
  return Rng(DeriveSeed(seed, stream));
}

}  // namespace cbdebug

#endif  // CBDEBUG_RANDOM_H_
