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

// Synthetic token-classification tasks with known structure.
//
// planted-patch: k of the d tokens are signal tokens. Their first channel is
// drawn around +1 or -1 and the last channel is a marker set to 1; every other
// token is standard normal with the marker at 0. The label is the sign of the
// mean signal value (two classes).
//
// linear-logit: tokens are standard normal and the label is sampled from
// softmax(sum_j W x_j) for a fixed weight matrix W drawn from the seed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "selfex/rng.hpp"
#include "selfex/tensor.hpp"

namespace selfex {

enum class DatasetKind { kPlantedPatch, kLinearLogit };
std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

struct DatasetParams {
  DatasetKind kind = DatasetKind::kPlantedPatch;
  std::size_t num_tokens = 16;
  std::size_t token_dim = 4;
  std::size_t num_classes = 2;
  std::size_t signal_tokens = 3;  // planted-patch only
  double signal_spread = 0.5;     // planted-patch: sd of signal values
  double weight_scale = 0.5;      // linear-logit: sd of W entries
  std::size_t train = 2000;
  std::size_t val = 500;
  std::size_t test = 500;

  void validate() const;
  bool operator==(const DatasetParams&) const = default;
};

struct Split {
  std::size_t num_tokens = 0;
  std::size_t token_dim = 0;
  std::vector<float> tokens;       // [n][d][m]
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> signal;  // [n][d], planted-patch ground truth

  std::size_t size() const { return labels.size(); }
  // [B, d, m] batch of the given rows.
  Tensor batch(const std::vector<std::size_t>& rows) const;
  Tensor all() const;
};

struct SyntheticDataset {
  DatasetParams params;
  std::uint64_t seed = 0;
  std::vector<float> weights;  // linear-logit W, [C][m]
  Split train;
  Split val;
  Split test;
};

SyntheticDataset generate_dataset(const DatasetParams& params, std::uint64_t seed);

}  // namespace selfex
