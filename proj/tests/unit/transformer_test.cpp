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

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "selfex/errors.hpp"
#include "selfex/transformer.hpp"
#include "support/gradcheck.hpp"

namespace selfex {
namespace {

using testing::random_tensor;

ModelConfig toy_config() {
  ModelConfig c;
  c.depth = 2;
  c.hidden = 16;
  c.heads = 2;
  c.num_tokens = 6;
  c.token_input_dim = 3;
  c.num_classes = 3;
  return c;
}

Mask random_mask(std::size_t d, Rng& rng) {
  Mask m = Mask::empty(d);
  for (std::size_t i = 0; i < d; ++i) m.set(i, rng.uniform() < 0.5);
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  }
  return m;
}

TEST(ModelConfig, RejectsIndivisibleHeads) {
  ModelConfig c = toy_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(CountParams, HandCountedTinyModel) {
  ModelConfig c;
  c.hidden = 2, c.depth = 1, c.heads = 1, c.num_tokens = 2;
  c.token_input_dim = 2, c.num_classes = 2;
  c.embedding = false, c.positional = false;
  // block: 2 norms (2*4) + qkv (2*6 + 6) + proj (2*2 + 2) + fc1 (2*8 + 8)
  //        + fc2 (8*2 + 2) = 8 + 18 + 6 + 24 + 18 = 74
  // class token 2, final norm 4, head 2*2 + 2 = 6
  EXPECT_EQ(count_params(c), 74u + 2u + 4u + 6u);
}

TEST(CountParams, DoublingDepthAddsOneBlock) {
  ModelConfig c;
  c.hidden = 8, c.depth = 1, c.heads = 2, c.num_tokens = 4;
  c.token_input_dim = 8, c.embedding = false, c.positional = false;
  const std::size_t one = count_params(c);
  c.depth = 2;
  EXPECT_EQ(count_params(c) - one, MsaBlock::param_count(8, 32));
}

TEST(CountParams, VitBaseTotal) {
  const double n = double(count_params(model_preset("vit-base")));
  EXPECT_NEAR(n / 85.81e6, 1.0, 0.02);
}

TEST(CountParams, MatchesInstantiatedModel) {
  Rng rng(1);
  Classifier m = Classifier::create(toy_config(), rng);
  EXPECT_EQ(total_numel(m.parameters()), count_params(toy_config()));
}

TEST(Classifier, FreshModelGivesFiniteDistribution) {
  Rng rng(2);
  Classifier m = Classifier::create(toy_config(), rng);
  Tensor x = random_tensor({4, 6, 3}, rng, false);
  Tensor p = softmax(m.logits(x));
  for (std::size_t b = 0; b < 4; ++b) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += p.data()[b * 3 + c];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Classifier, AllOnesMaskIsBitExact) {
  Rng rng(3);
  Classifier m = Classifier::create(toy_config(), rng);
  Tensor x = random_tensor({3, 6, 3}, rng, false);
  Tensor plain = m.logits(x);
  Tensor masked = m.logits(x, std::vector<Mask>(3, Mask::full(6)));
  EXPECT_TRUE(std::equal(plain.data().begin(), plain.data().end(),
                         masked.data().begin()));
}

TEST(Classifier, MaskedKeyGetsZeroAttention) {
  ModelConfig c = toy_config();
  c.num_tokens = 2;
  Rng rng(4);
  Classifier m = Classifier::create(c, rng);
  Tensor x = random_tensor({1, 2, 3}, rng, false);
  Tensor key_mask = make_key_mask({Mask(std::vector<std::uint8_t>{1, 0})});
  Tensor probs;
  m.blocks()[0].attention(m.embed(x, nullptr), key_mask, &probs);
  // [1, heads, 3, 3]; column 2 is feature token 2.
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t q = 0; q < 3; ++q) {
      const float* row = probs.data().data() + (h * 3 + q) * 3;
      EXPECT_LE(std::abs(row[2]), 1e-12);
      EXPECT_NEAR(row[0] + row[1], 1.0, 1e-6);
    }
  }
}

TEST(Classifier, MaskedTokenContentIsIgnored) {
  Rng rng(5);
  Classifier m = Classifier::create(toy_config(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({1, 6, 3}, rng, false);
    Mask s = random_mask(6, rng);
    std::vector<float> altered(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < 6; ++i) {
      if (s[i]) continue;
      for (std::size_t j = 0; j < 3; ++j) altered[i * 3 + j] += 5.0f * float(rng.normal());
    }
    Tensor x2 = Tensor::from_data({1, 6, 3}, altered);
    EXPECT_LT(max_abs_diff(m.logits(x, {s}), m.logits(x2, {s})), 1e-6);
  }
}

TEST(Classifier, SwappingTwoMaskedTokensIsInvisible) {
  Rng rng(6);
  Classifier m = Classifier::create(toy_config(), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  Mask s(std::vector<std::uint8_t>{1, 0, 1, 0, 1, 1});
  std::vector<float> swapped(x.data().begin(), x.data().end());
  for (std::size_t j = 0; j < 3; ++j) std::swap(swapped[1 * 3 + j], swapped[3 * 3 + j]);
  Tensor x2 = Tensor::from_data({1, 6, 3}, swapped);
  EXPECT_LT(max_abs_diff(m.logits(x, {s}), m.logits(x2, {s})), 1e-6);
}

TEST(Classifier, CompactPathMatchesMaskedPath) {
  Rng rng(7);
  Classifier m = Classifier::create(toy_config(), rng);
  Tensor x = random_tensor({2, 6, 3}, rng, false);
  std::vector<Mask> masks{Mask(std::vector<std::uint8_t>{1, 0, 1, 0, 0, 1}),
                          Mask(std::vector<std::uint8_t>{0, 1, 1, 1, 0, 0}),
                          Mask(std::vector<std::uint8_t>{1, 1, 0, 0, 1, 0})};
  std::vector<std::size_t> sample_of{0, 1, 1};
  Tensor expanded = concat({slice(x, 0, 0, 1), slice(x, 0, 1, 1), slice(x, 0, 1, 1)}, 0);
  Tensor masked = m.logits(expanded, masks);
  Tensor compact = m.compact_logits(compact_tokens(x, masks, sample_of));
  EXPECT_LT(max_abs_diff(masked, compact), 1e-6);
}

TEST(Classifier, EmptyCoalitionReadsClassTokenOnly) {
  Rng rng(8);
  Classifier m = Classifier::create(toy_config(), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  Tensor masked = m.logits(x, {Mask::empty(6)});
  Tensor compact = m.compact_logits(compact_tokens(x, {Mask::empty(6)}, {0}));
  EXPECT_LT(max_abs_diff(masked, compact), 1e-6);
}

TEST(Classifier, MaskLengthMismatchIsContractError) {
  Rng rng(9);
  Classifier m = Classifier::create(toy_config(), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  EXPECT_THROW(m.logits(x, {Mask::full(5)}), ContractError);
}

TEST(Classifier, CloneIsIndependent) {
  Rng rng(10);
  Classifier m = Classifier::create(toy_config(), rng);
  Classifier copy = m.clone();
  copy.parameters()[0].tensor.mutable_data()[0] += 1.0f;
  EXPECT_NE(m.parameters()[0].tensor.data()[0],
            copy.parameters()[0].tensor.data()[0]);
}

}  // namespace
}  // namespace selfex
