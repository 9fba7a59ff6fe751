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
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "selfex/errors.hpp"
#include "selfex/side.hpp"
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

SideConfig side_config(SideRole role, std::size_t r = 2) {
  SideConfig s;
  s.reduction = r;
  s.role = role;
  return s;
}

TEST(SideConfig, WidthAndHeads) {
  ModelConfig m = model_preset("vit-base");
  SideConfig s = side_config(SideRole::kSurrogate, 8);
  EXPECT_EQ(s.width(m), 96u);
  EXPECT_EQ(s.heads(m), 12u);
  s.reduction = 768;
  EXPECT_EQ(s.heads(m), 1u);
  s.reduction = 7;
  EXPECT_THROW(s.validate(m), ConfigError);
}

TEST(SideConfig, ParsesRoles) {
  EXPECT_EQ(parse_side_role("explainer"), SideRole::kExplainer);
  EXPECT_THROW(parse_side_role("oracle"), ConfigError);
}

TEST(CountSideParams, VitBaseSurrogate) {
  const double n = double(count_side_params(model_preset("vit-base"),
                                            side_config(SideRole::kSurrogate, 8)));
  EXPECT_NEAR(n / 2.23e6, 1.0, 0.10);
  EXPECT_GE(1.0 - n / double(count_params(model_preset("vit-base"))), 0.95);
}

TEST(CountSideParams, VitBaseExplainer) {
  const double n = double(count_side_params(model_preset("vit-base"),
                                            side_config(SideRole::kExplainer, 8)));
  EXPECT_NEAR(n / 2.42e6, 1.0, 0.10);
}

TEST(CountSideParams, FullReductionIsDownsamplerDominated) {
  ModelConfig m = model_preset("vit-base");
  const std::size_t n = count_side_params(m, side_config(SideRole::kSurrogate, 768));
  const std::size_t down = m.depth * Linear::param_count(768, 1);
  EXPECT_GT(double(down) / double(n), 0.5);
}

TEST(CountSideParams, MatchesInstantiatedModel) {
  Rng rng(1);
  for (SideRole role : {SideRole::kSurrogate, SideRole::kExplainer}) {
    SideModel s = SideModel::create(toy_config(), side_config(role), rng);
    EXPECT_EQ(total_numel(s.parameters()), count_side_params(toy_config(), side_config(role)));
  }
}

TEST(SideModel, SurrogateGivesDistributions) {
  Rng rng(2);
  Classifier backbone = Classifier::create(toy_config(), rng);
  SideModel s = SideModel::create(toy_config(), side_config(SideRole::kSurrogate), rng);
  Tensor x = random_tensor({4, 6, 3}, rng, false);
  Tensor p = softmax(s.surrogate_logits(backbone, x, make_key_mask(std::vector<Mask>(4, Mask::full(6)))));
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_NEAR(p.data()[b * 3] + p.data()[b * 3 + 1] + p.data()[b * 3 + 2], 1.0, 1e-6);
  }
}

TEST(SideModel, SurrogateIgnoresMaskedContent) {
  Rng rng(3);
  Classifier backbone = Classifier::create(toy_config(), rng);
  SideModel s = SideModel::create(toy_config(), side_config(SideRole::kSurrogate), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  Mask keep(std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0});
  std::vector<float> altered(x.data().begin(), x.data().end());
  for (std::size_t i : {1, 2, 5}) altered[i * 3] += 3.0f;
  Tensor key = make_key_mask({keep});
  Tensor a = s.surrogate_logits(backbone, x, key);
  Tensor b = s.surrogate_logits(backbone, Tensor::from_data({1, 6, 3}, altered), key);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a.data()[c], b.data()[c], 1e-6);
}

TEST(SideModel, CompactPathMatchesMaskedPath) {
  Rng rng(4);
  Classifier backbone = Classifier::create(toy_config(), rng);
  SideModel s = SideModel::create(toy_config(), side_config(SideRole::kSurrogate), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  std::vector<Mask> masks{Mask(std::vector<std::uint8_t>{0, 1, 1, 0, 0, 1}),
                          Mask(std::vector<std::uint8_t>{1, 0, 0, 0, 1, 1})};
  Tensor expanded = concat({x, x}, 0);
  Tensor a = s.surrogate_logits(backbone, expanded, make_key_mask(masks));
  Tensor b = s.surrogate_logits(backbone, compact_tokens(x, masks, {0, 0}));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
}

TEST(SideModel, ExplainerShapeForBothReadouts) {
  Rng rng(5);
  Classifier backbone = Classifier::create(toy_config(), rng);
  for (ExplainerReadout readout : {ExplainerReadout::kClassToken, ExplainerReadout::kTokens}) {
    SideConfig side = side_config(SideRole::kExplainer);
    side.readout = readout;
    SideModel e = SideModel::create(toy_config(), side, rng);
    Tensor phi = e.explain_raw(backbone, random_tensor({2, 6, 3}, rng, false));
    EXPECT_EQ(phi.shape(), (std::vector<std::size_t>{2, 6, 3}));
    EXPECT_EQ(total_numel(e.parameters()), count_side_params(toy_config(), side));
  }
}

TEST(SideModel, ExplainerFromSurrogateCopiesBranch) {
  Rng rng(6);
  SideModel s = SideModel::create(toy_config(), side_config(SideRole::kSurrogate), rng);
  SideModel e = SideModel::explainer_from(s, 2, ExplainerReadout::kClassToken, rng);
  EXPECT_EQ(e.role(), SideRole::kExplainer);
  auto sp = s.parameters();
  auto ep = e.parameters();
  ASSERT_EQ(sp[0].name, ep[0].name);
  EXPECT_TRUE(std::equal(sp[0].tensor.data().begin(), sp[0].tensor.data().end(),
                         ep[0].tensor.data().begin()));
  ep[0].tensor.mutable_data()[0] += 1.0f;
  EXPECT_NE(sp[0].tensor.data()[0], ep[0].tensor.data()[0]);
  EXPECT_THROW(SideModel::explainer_from(e, 2, ExplainerReadout::kClassToken, rng), RoleError);
}

TEST(SideModel, RoleMismatchIsContractError) {
  Rng rng(7);
  Classifier backbone = Classifier::create(toy_config(), rng);
  SideModel e = SideModel::create(toy_config(), side_config(SideRole::kExplainer), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  EXPECT_THROW(e.surrogate_logits(backbone, x, make_key_mask({Mask::full(6)})), ContractError);
}

TEST(SideModel, BackboneConfigMismatchIsContractError) {
  Rng rng(8);
  ModelConfig other = toy_config();
  other.num_classes = 2;
  Classifier backbone = Classifier::create(other, rng);
  SideModel s = SideModel::create(toy_config(), side_config(SideRole::kSurrogate), rng);
  Tensor x = random_tensor({1, 6, 3}, rng, false);
  EXPECT_THROW(s.surrogate_logits(backbone, x, make_key_mask({Mask::full(6)})), ContractError);
}

TEST(SideModel, GradientsReachSideOnly) {
  Rng rng(9);
  Classifier backbone = Classifier::create(toy_config(), rng);
  backbone.set_trainable(false);
  SideModel s = SideModel::create(toy_config(), side_config(SideRole::kSurrogate), rng);
  Tensor x = random_tensor({2, 6, 3}, rng, false);
  Tensor loss = sum(s.surrogate_logits(backbone, x, make_key_mask(std::vector<Mask>(2, Mask::full(6)))));
  loss.backward();
  for (const auto& p : backbone.parameters()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
  std::size_t with_grad = 0;
  for (const auto& p : s.parameters()) with_grad += p.tensor.has_grad();
  EXPECT_EQ(with_grad, s.parameters().size());
}

}  // namespace
}  // namespace selfex
