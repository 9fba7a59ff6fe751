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

#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "selfex/data.hpp"
#include "selfex/errors.hpp"

namespace selfex {
namespace {

DatasetParams planted(std::size_t n) {
  DatasetParams p;
  p.num_tokens = 16;
  p.signal_tokens = 3;
  p.train = n;
  p.val = 50;
  p.test = 50;
  return p;
}

TEST(Dataset, PlantedPatchLabelsAreBalanced) {
  const SyntheticDataset d = generate_dataset(planted(2000), 11);
  std::size_t ones = 0;
  for (auto y : d.train.labels) ones += static_cast<std::size_t>(y);
  // Labels are Bernoulli(1/2); 5% of n is about 4.5 standard deviations.
  EXPECT_NEAR(double(ones) / 2000.0, 0.5, 0.05);
}

TEST(Dataset, PlantedPatchMarksExactlyTheSignalTokens) {
  const SyntheticDataset d = generate_dataset(planted(200), 12);
  const Split& s = d.train;
  const std::size_t m = s.token_dim;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t marked = 0;
    double total = 0.0;
    for (std::size_t j = 0; j < s.num_tokens; ++j) {
      const float* tok = &s.tokens[(i * s.num_tokens + j) * m];
      EXPECT_EQ(tok[m - 1] == 1.0f, s.signal[i * s.num_tokens + j] == 1);
      if (s.signal[i * s.num_tokens + j]) {
        ++marked;
        total += tok[0];
      }
    }
    EXPECT_EQ(marked, 3u);
    EXPECT_EQ(s.labels[i], total > 0.0 ? 1 : 0);
  }
}

TEST(Dataset, SameSeedSameBytesDifferentSeedDiffers) {
  const SyntheticDataset a = generate_dataset(planted(100), 5);
  const SyntheticDataset b = generate_dataset(planted(100), 5);
  const SyntheticDataset c = generate_dataset(planted(100), 6);
  EXPECT_EQ(a.train.tokens, b.train.tokens);
  EXPECT_EQ(a.test.labels, b.test.labels);
  EXPECT_NE(a.train.tokens, c.train.tokens);
}

TEST(Dataset, SplitsShareNoSamples) {
  const SyntheticDataset d = generate_dataset(planted(200), 8);
  auto rows = [](const Split& s) {
    std::set<std::vector<float>> out;
    const std::size_t stride = s.num_tokens * s.token_dim;
    for (std::size_t i = 0; i < s.size(); ++i) {
      out.emplace(s.tokens.begin() + long(i * stride), s.tokens.begin() + long((i + 1) * stride));
    }
    return out;
  };
  const auto train = rows(d.train);
  for (const auto& r : rows(d.test)) EXPECT_FALSE(train.count(r));
  for (const auto& r : rows(d.val)) EXPECT_FALSE(train.count(r));
}

TEST(Dataset, InvalidParamsAreConfigErrors) {
  DatasetParams p = planted(10);
  p.signal_tokens = 17;
  EXPECT_THROW(generate_dataset(p, 1), ConfigError);
  p = planted(10);
  p.num_classes = 3;
  EXPECT_THROW(generate_dataset(p, 1), ConfigError);
  p = planted(0);
  EXPECT_THROW(generate_dataset(p, 1), ConfigError);
  EXPECT_THROW(parse_dataset_kind("imagenette"), ConfigError);
}

TEST(Dataset, LinearLogitLabelsFollowTheGeneratingWeights) {
  DatasetParams p;
  p.kind = DatasetKind::kLinearLogit;
  p.num_tokens = 12;
  p.num_classes = 3;
  p.train = 3000;
  const SyntheticDataset d = generate_dataset(p, 21);
  ASSERT_EQ(d.weights.size(), 3u * p.token_dim);
  // Labels are drawn from softmax(W pooled x); the Bayes argmax must agree
  // with them far more often than the 1/3 chance rate.
  std::size_t agree = 0;
  const std::size_t m = p.token_dim;
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    std::vector<double> logit(3, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < p.num_tokens; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
          logit[c] += d.weights[c * m + k] * d.train.tokens[(i * p.num_tokens + j) * m + k];
        }
      }
    }
    const auto best = std::max_element(logit.begin(), logit.end()) - logit.begin();
    agree += best == d.train.labels[i];
  }
  EXPECT_GT(double(agree) / double(d.train.size()), 0.6);
}

TEST(Dataset, BatchGathersRows) {
  const SyntheticDataset d = generate_dataset(planted(10), 2);
  const Tensor b = d.train.batch({3, 0});
  const std::size_t stride = 16 * d.train.token_dim;
  EXPECT_EQ(b.shape(), (Shape{2, 16, d.train.token_dim}));
  EXPECT_EQ(b.data()[0], d.train.tokens[3 * stride]);
  EXPECT_EQ(b.data()[stride], d.train.tokens[0]);
  EXPECT_THROW(d.train.batch({10}), ContractError);
}

}  // namespace
}  // namespace selfex
