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

#include "selfex/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selfex/errors.hpp"

namespace selfex {

std::string to_string(DatasetKind kind) {
  return kind == DatasetKind::kPlantedPatch ? "planted-patch" : "linear-logit";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "planted-patch") return DatasetKind::kPlantedPatch;
  if (text == "linear-logit") return DatasetKind::kLinearLogit;
  throw ConfigError("unknown dataset kind '" + text + "'");
}

void DatasetParams::validate() const {
  if (num_tokens == 0 || token_dim == 0) {
    throw ConfigError("dataset needs at least one token and one channel");
  }
  if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
  if (train == 0 || val == 0 || test == 0) {
    throw ConfigError("every dataset split must be non-empty");
  }
  if (kind == DatasetKind::kPlantedPatch) {
    if (signal_tokens == 0 || signal_tokens > num_tokens) {
      throw ConfigError("planted-patch needs 1 <= k <= d signal tokens, got k=" +
                        std::to_string(signal_tokens) +
                        " d=" + std::to_string(num_tokens));
    }
    if (num_classes != 2) throw ConfigError("planted-patch is a two-class task");
    if (token_dim < 2) throw ConfigError("planted-patch needs a value and a marker channel");
  }
}

Tensor Split::batch(const std::vector<std::size_t>& rows) const {
  const std::size_t stride = num_tokens * token_dim;
  std::vector<float> out(rows.size() * stride);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b] >= size()) throw ContractError("batch row out of range");
    std::copy_n(tokens.begin() + static_cast<std::ptrdiff_t>(rows[b] * stride), stride,
                out.begin() + static_cast<std::ptrdiff_t>(b * stride));
  }
  return Tensor::from_data({rows.size(), num_tokens, token_dim}, std::move(out));
}

Tensor Split::all() const {
  std::vector<std::size_t> rows(size());
  std::iota(rows.begin(), rows.end(), 0);
  return batch(rows);
}

namespace {

void planted_sample(const DatasetParams& p, Rng& rng, Split& split) {
  const std::size_t d = p.num_tokens;
  const std::size_t m = p.token_dim;
  std::vector<float> x(d * m);
  for (float& v : x) v = static_cast<float>(rng.normal());
  for (std::size_t j = 0; j < d; ++j) x[j * m + m - 1] = 0.0f;

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < p.signal_tokens; ++i) {
    std::swap(order[i], order[i + rng.below(d - i)]);
  }
  const double centre = rng.uniform() < 0.5 ? -1.0 : 1.0;
  std::vector<std::uint8_t> signal(d, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < p.signal_tokens; ++i) {
    const std::size_t j = order[i];
    const float value = static_cast<float>(rng.normal(centre, p.signal_spread));
    x[j * m] = value;
    x[j * m + m - 1] = 1.0f;
    signal[j] = 1;
    total += value;
  }
  split.tokens.insert(split.tokens.end(), x.begin(), x.end());
  split.signal.insert(split.signal.end(), signal.begin(), signal.end());
  split.labels.push_back(total > 0.0 ? 1 : 0);
}

void linear_sample(const DatasetParams& p, const std::vector<float>& w, Rng& rng,
                   Split& split) {
  const std::size_t d = p.num_tokens;
  const std::size_t m = p.token_dim;
  const std::size_t classes = p.num_classes;
  std::vector<float> x(d * m);
  for (float& v : x) v = static_cast<float>(rng.normal());
  std::vector<double> logit(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < m; ++k) logit[c] += double(w[c * m + k]) * x[j * m + k];
    }
  }
  const double top = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  for (double& l : logit) z += (l = std::exp(l - top));
  double u = rng.uniform() * z;
  std::int32_t label = static_cast<std::int32_t>(classes - 1);
  for (std::size_t c = 0; c < classes; ++c) {
    if (u < logit[c]) {
      label = static_cast<std::int32_t>(c);
      break;
    }
    u -= logit[c];
  }
  split.tokens.insert(split.tokens.end(), x.begin(), x.end());
  split.labels.push_back(label);
}

}  // namespace

SyntheticDataset generate_dataset(const DatasetParams& params, std::uint64_t seed) {
  params.validate();
  SyntheticDataset ds;
  ds.params = params;
  ds.seed = seed;
  Rng root(seed);
  if (params.kind == DatasetKind::kLinearLogit) {
    Rng wr = root.fork(0);
    ds.weights.resize(params.num_classes * params.token_dim);
    for (float& v : ds.weights) v = static_cast<float>(wr.normal(0.0, params.weight_scale));
  }
  const std::size_t sizes[3] = {params.train, params.val, params.test};
  Split* splits[3] = {&ds.train, &ds.val, &ds.test};
  for (std::size_t s = 0; s < 3; ++s) {
    Rng rng = root.fork(s + 1);
    Split& split = *splits[s];
    split.num_tokens = params.num_tokens;
    split.token_dim = params.token_dim;
    for (std::size_t i = 0; i < sizes[s]; ++i) {
      if (params.kind == DatasetKind::kPlantedPatch) {
        planted_sample(params, rng, split);
      } else {
        linear_sample(params, ds.weights, rng, split);
      }
    }
  }
  return ds;
}

}  // namespace selfex
