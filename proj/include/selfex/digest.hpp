/*
 * Copyright 2026 The selfex Authors.
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

#pragma once

#include <cstddef>
#include <cstdint>

#include "selfex/optim.hpp"

namespace selfex {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// 64-bit FNV-1a, chainable through `state`.
inline std::uint64_t fnv1a(const void* data, std::size_t size,
                           std::uint64_t state = kFnvOffset) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state ^= bytes[i];
    state *= kFnvPrime;
  }
  return state;
}

// Digest over names, shapes and value bytes of a parameter list.
inline std::uint64_t param_digest(const ParamList& params) {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    for (std::size_t dim : p.tensor.shape()) h = fnv1a(&dim, sizeof dim, h);
    auto values = p.tensor.data();
    h = fnv1a(values.data(), values.size_bytes(), h);
  }
  return h;
}

}  // namespace selfex
