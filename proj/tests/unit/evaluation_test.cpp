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
#include <cstring>
#include <deque>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "selfex/combined.hpp"
#include "selfex/data.hpp"
#include "selfex/errors.hpp"
#include "selfex/evaluation.hpp"

namespace selfex {
namespace {

std::vector<double> random_matrix(std::size_t n, std::size_t p, Rng& rng) {
  std::vector<double> out(n * p);
  for (double& v : out) v = rng.normal();
  return out;
}

TEST(InsertionDeletion, ConstantPredictorGivesItsValue) {
  Game game(5, 2, [](const std::vector<Mask>& masks) {
    return std::vector<std::vector<double>>(masks.size(), {0.3, 0.7});
  });
  const std::vector<double> attr = {0.1, -2.0, 0.5, 0.5, 3.0};
  for (auto mode : {CurveMode::kInsertion, CurveMode::kDeletion}) {
    const auto curve = insertion_deletion(attr, game, 1, mode);
    EXPECT_NEAR(curve.auc, 0.7, 1e-12);
    EXPECT_EQ(curve.fractions.size(), 6u);
  }
}

TEST(InsertionDeletion, CountingPredictorHasHalfArea) {
  // Trapezoid over k/d at k = 0..d is exactly 1/2 for any ranking.
  Game game = Game::scalar(8, [](const Mask& s) { return double(s.count()) / 8.0; });
  Rng rng(1);
  std::vector<double> attr(8);
  for (double& a : attr) a = rng.normal();
  EXPECT_DOUBLE_EQ(insertion_deletion(attr, game, 0, CurveMode::kInsertion).auc, 0.5);
  EXPECT_DOUBLE_EQ(insertion_deletion(attr, game, 0, CurveMode::kDeletion).auc, 0.5);
}

TEST(InsertionDeletion, RanksByDescendingAttributionWithIndexTies) {
  // v(s) = s_2: inserting feature 2 first gives area 1 - 1/(2d) ... only when
  // it ranks first.
  Game game = Game::scalar(4, [](const Mask& s) { return s[2] ? 1.0 : 0.0; });
  const auto first = insertion_deletion({0.0, 0.0, 5.0, 0.0}, game, 0, CurveMode::kInsertion);
  EXPECT_EQ(first.probabilities, (std::vector<double>{0, 1, 1, 1, 1}));
  // All tied: ascending index puts feature 2 third.
  const auto tied = insertion_deletion({1.0, 1.0, 1.0, 1.0}, game, 0, CurveMode::kInsertion);
  EXPECT_EQ(tied.probabilities, (std::vector<double>{0, 0, 0, 1, 1}));
  const auto del = insertion_deletion({0.0, 0.0, 5.0, 0.0}, game, 0, CurveMode::kDeletion);
  EXPECT_EQ(del.probabilities, (std::vector<double>{1, 0, 0, 0, 0}));
}

TEST(InsertionDeletion, SymmetricPredictorMirrors) {
  Game game = Game::scalar(6, [](const Mask& s) {
    const double k = double(s.count());
    return k * k / 36.0;
  });
  const std::vector<double> attr = {6, 5, 4, 3, 2, 1};
  const auto ins = insertion_deletion(attr, game, 0, CurveMode::kInsertion);
  const auto del = insertion_deletion(attr, game, 0, CurveMode::kDeletion);
  ASSERT_EQ(ins.probabilities.size(), del.probabilities.size());
  for (std::size_t i = 0; i < ins.probabilities.size(); ++i) {
    EXPECT_DOUBLE_EQ(ins.probabilities[i], del.probabilities[6 - i]);
  }
}

TEST(InsertionDeletion, LargeInputsUseQuantileSteps) {
  Game game = Game::scalar(100, [](const Mask& s) { return double(s.count()) / 100.0; });
  std::vector<double> attr(100, 0.0);
  const auto curve = insertion_deletion(attr, game, 0, CurveMode::kInsertion);
  EXPECT_EQ(curve.fractions.size(), 65u);
  EXPECT_EQ(curve.fractions.front(), 0.0);
  EXPECT_EQ(curve.fractions.back(), 1.0);
  EXPECT_EQ(curve.probabilities.back(), 1.0);
}

TEST(Cka, IdentityAndInvariances) {
  Rng rng(2);
  const std::size_t n = 40, p = 6;
  const auto x = random_matrix(n, p, rng);
  EXPECT_NEAR(cka(x, p, x, p, n), 1.0, 1e-9);

  // Random orthogonal R from a QR factorisation.
  Eigen::MatrixXd g(p, p);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const Eigen::MatrixXd r = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  std::vector<double> xr(n * p, 0.0), xs(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) {
        xr[i * p + j] += x[i * p + k] * r(Eigen::Index(k), Eigen::Index(j));
      }
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = -3.5 * x[i];
  EXPECT_NEAR(cka(x, p, xr, p, n), 1.0, 1e-9);
  EXPECT_NEAR(cka(x, p, xs, p, n), 1.0, 1e-9);
}

TEST(Cka, SymmetricAndBounded) {
  Rng rng(3);
  const auto x = random_matrix(30, 5, rng);
  const auto y = random_matrix(30, 3, rng);
  const double xy = cka(x, 5, y, 3, 30);
  EXPECT_NEAR(xy, cka(y, 3, x, 5, 30), 1e-9);
  EXPECT_GE(xy, 0.0);
  EXPECT_LE(xy, 1.0 + 1e-12);
}

TEST(Cka, IndependentFeaturesScoreLow) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto x = random_matrix(100, 8, rng);
    const auto y = random_matrix(100, 8, rng);
    worst = std::max(worst, cka(x, 8, y, 8, 100));
  }
  EXPECT_LT(worst, 0.25);
}

TEST(Cka, ZeroVarianceIsUndefined) {
  std::vector<double> constant(20, 1.0);
  Rng rng(4);
  const auto y = random_matrix(10, 2, rng);
  EXPECT_THROW(cka(constant, 2, y, 2, 10), UndefinedError);
}

TEST(GradientConflict, CosineExamples) {
  const std::vector<double> g = {1.0, -2.0, 0.5};
  EXPECT_NEAR(gradient_conflict(g, g), 1.0, 1e-15);
  EXPECT_NEAR(gradient_conflict(g, {-1.0, 2.0, -0.5}), -1.0, 1e-15);
  EXPECT_NEAR(gradient_conflict({1, 0, 0}, {0, 1, 0}), 0.0, 1e-15);
  EXPECT_THROW(gradient_conflict({0, 0}, {1, 0}), UndefinedError);
  EXPECT_THROW(gradient_conflict({1, 0}, {1, 0, 0}), DimensionError);
}

TEST(Flops, SequenceLengthScaling) {
  ModelConfig a = model_preset("vit-tiny");
  a.num_tokens = 15;  // 16 tokens with the class token
  ModelConfig b = a;
  b.num_tokens = 31;
  const auto fa = count_flops_classifier(a);
  const auto fb = count_flops_classifier(b);
  EXPECT_NEAR(fb.attention_scores / fa.attention_scores, 4.0, 1e-12);
  EXPECT_NEAR(fb.mlp / fa.mlp, 2.0, 1e-12);
}

TEST(Flops, SharedBackboneIsCheaperThanSeparateModels) {
  SideConfig side;
  side.reduction = 8;
  side.role = SideRole::kExplainer;
  for (const auto& name : model_preset_names()) {
    const ModelConfig m = model_preset(name);
    const auto cmp = compare_flops(m, side);
    const double classifier = count_flops_classifier(m).total();
    EXPECT_DOUBLE_EQ(cmp.classifier, classifier);
    EXPECT_NEAR(cmp.separate, classifier + count_flops_separate_explainer(m).total(),
                1e-6 * cmp.separate);
    EXPECT_LT(cmp.combined, cmp.separate) << name;
    EXPECT_NEAR(cmp.reduction, 1.0 - cmp.combined / cmp.separate, 1e-12);
  }
}

TEST(Flops, PartsAddUp) {
  FlopCount a;
  a.mlp = 2.0;
  a.head = 1.0;
  FlopCount b;
  b.mlp = 3.0;
  b.norms = 4.0;
  a += b;
  EXPECT_EQ(a.mlp, 5.0);
  EXPECT_EQ(a.total(), 10.0);
}

TEST(EfficiencyReport, TrainableCountsMatchTheFrozenSet) {
  const ModelConfig m = model_preset("vit-base");
  const auto full = efficiency_report(m, nullptr);
  EXPECT_EQ(full.trainable_params, full.total_params);
  EXPECT_EQ(full.total_params, count_params(m));
  SideConfig side;
  side.reduction = 8;
  const auto tuned = efficiency_report(m, &side);
  EXPECT_EQ(tuned.trainable_params, count_side_params(m, side));
  EXPECT_EQ(tuned.total_params, count_params(m) + tuned.trainable_params);
  EXPECT_LT(tuned.memory_bytes, full.memory_bytes);
  EXPECT_GT(tuned.memory_bytes, 4.0 * double(tuned.total_params));
}

// Stub game with a known Shapley table: an explainer returning exactly those
// values has zero error, and the bound must hold for it and for noise.
TEST(ExplainerBound, ExactAndRandomExplainersPass) {
  Rng rng(6);
  std::vector<std::vector<double>> tables(3, std::vector<double>(1 << 5));
  std::deque<Game> games;  // stable addresses for the bound inputs
  for (auto& t : tables) {
    for (double& v : t) v = rng.uniform();
  }
  for (auto& t : tables) {
    games.emplace_back(5, 2, [&t](const std::vector<Mask>& masks) {
      std::vector<std::vector<double>> out;
      for (const auto& m : masks) out.push_back({t[m.to_bits()], 1.0 - t[m.to_bits()]});
      return out;
    });
  }
  std::vector<ExplainerBoundInput> exact, noisy;
  for (auto& g : games) {
    Attribution phi = exact_shapley(g);
    exact.push_back({phi, {0.5, 0.5}, &g});
    Attribution raw = Attribution::zeros(5, 2);
    for (double& v : raw.values) v = rng.normal();
    noisy.push_back({efficiency_normalize(raw, g.value(Mask::full(5)), g.value(Mask::empty(5))),
                     {0.5, 0.5}, &g});
  }
  const auto v_exact = explainer_bound(exact, 20000, 1);
  EXPECT_FALSE(v_exact.skipped);
  EXPECT_NEAR(v_exact.lhs, 0.0, 1e-9);
  EXPECT_TRUE(v_exact.pass);
  const auto v_noisy = explainer_bound(noisy, 20000, 1);
  EXPECT_GT(v_noisy.lhs, 0.1);
  EXPECT_LE(v_noisy.lhs, v_noisy.exact_rhs + 1e-9);
  EXPECT_TRUE(v_noisy.pass);
}

TEST(ExplainerBound, SkipsWithoutOracle) {
  Game big = Game::scalar(13, [](const Mask&) { return 0.0; });
  std::vector<ExplainerBoundInput> in = {{Attribution::zeros(13), {1.0}, &big}};
  const auto v = explainer_bound(in, 100, 0);
  EXPECT_TRUE(v.skipped);
  EXPECT_FALSE(v.reason.empty());
}

TEST(ConvexDecay, GapStaysUnderLinearRate) {
  const auto trace = convex_decay_experiment(4, 3, 40, 8, 200, 7);
  EXPECT_GT(trace.mu, 0.0);
  EXPECT_LE(trace.step_size, 1.0 / trace.smoothness + 1e-12);
  EXPECT_EQ(trace.gap.size(), trace.bound.size());
  EXPECT_TRUE(trace.pass) << "worst ratio " << trace.worst_ratio;
  EXPECT_LT(trace.gap.back(), trace.gap.front());
}

// --- Combined model -------------------------------------------------------

struct CombinedFixture : ::testing::Test {
  void SetUp() override {
    ModelConfig m;
    m.depth = 2;
    m.hidden = 16;
    m.heads = 2;
    m.mlp_ratio = 2.0;
    m.num_tokens = 5;
    m.token_input_dim = 3;
    m.num_classes = 3;
    Rng rng(11);
    backbone = Classifier::create(m, rng);
    SideConfig side;
    side.reduction = 2;
    surrogate = SideModel::create(m, side, rng);
    explainer = SideModel::explainer_from(surrogate, 2, ExplainerReadout::kTokens, rng);
    std::vector<float> v(4 * 5 * 3);
    for (float& f : v) f = float(rng.normal());
    x = Tensor::from_data({4, 5, 3}, v);
  }
  Classifier backbone;
  SideModel surrogate;
  SideModel explainer;
  Tensor x;
};

TEST_F(CombinedFixture, PredictionBitEqualsStandaloneClassifier) {
  const CombinedModel model = CombinedModel::assemble(backbone, surrogate, explainer);
  const CombinedOutput out = model.forward(x);
  const Tensor alone = backbone.logits(x);
  ASSERT_EQ(out.logits.shape(), alone.shape());
  EXPECT_EQ(std::memcmp(out.logits.data().data(), alone.data().data(),
                        alone.data().size_bytes()),
            0);
}

TEST_F(CombinedFixture, EveryAttributionIsEfficient) {
  const CombinedOutput out = CombinedModel::assemble(backbone, surrogate, explainer).forward(x);
  ASSERT_EQ(out.attribution.size(), 4u);
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_TRUE(out.attribution[b].normalized);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_LT(out.efficiency_residual(b, c), 1e-5);
  }
}

TEST_F(CombinedFixture, EndpointValuesMatchTheSurrogate) {
  const CombinedOutput out = CombinedModel::assemble(backbone, surrogate, explainer).forward(x);
  const Tensor full = softmax(surrogate.surrogate_logits(backbone, x, Tensor()));
  for (std::size_t i = 0; i < full.numel(); ++i) {
    EXPECT_NEAR(out.full_values.data()[i], full.data()[i], 1e-6);
  }
  // The empty coalition does not depend on the input.
  for (std::size_t b = 1; b < 4; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(out.empty_values.data()[b * 3 + c], out.empty_values.data()[c], 1e-6);
    }
  }
}

TEST_F(CombinedFixture, AssemblyChecksRoles) {
  EXPECT_THROW(CombinedModel::assemble(backbone, explainer, explainer), RoleError);
  EXPECT_THROW(CombinedModel::assemble(backbone, surrogate, surrogate), RoleError);
  ModelConfig other = backbone.config();
  other.hidden = 32;
  other.heads = 4;
  Rng rng(1);
  EXPECT_THROW(CombinedModel::assemble(Classifier::create(other, rng), surrogate, explainer),
               ContractError);
}

TEST_F(CombinedFixture, LayerwiseCkaOfAModelWithItselfIsOne) {
  for (double v : layerwise_cka(backbone, backbone.clone(), x)) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST_F(CombinedFixture, FaithfulnessReportsEfficiencyAndAverages) {
  DatasetParams p;
  p.kind = DatasetKind::kLinearLogit;
  p.num_tokens = 5;
  p.token_dim = 3;
  p.num_classes = 3;
  p.train = 4;
  p.val = 4;
  p.test = 12;
  const SyntheticDataset data = generate_dataset(p, 3);
  const auto side = faithfulness(backbone, surrogate, data.test,
                                 side_explainer(backbone, surrogate, explainer), 5, 9);
  EXPECT_EQ(side.rows, evaluation_rows(12, 5, 9));
  EXPECT_LT(side.max_efficiency_residual, 1e-5);
  EXPECT_EQ(side.fractions.size(), 6u);
  const auto exact = faithfulness(backbone, surrogate, data.test, exact_explainer(), 5, 9);
  EXPECT_LT(exact.max_efficiency_residual, 1e-9);
  const auto random = faithfulness(backbone, surrogate, data.test, random_explainer(1), 5, 9);
  EXPECT_TRUE(std::isnan(random.max_efficiency_residual));
  // Both endpoints of every curve are the same coalitions for any ranking.
  EXPECT_DOUBLE_EQ(random.insertion_curve.front(), exact.insertion_curve.front());
  EXPECT_DOUBLE_EQ(random.deletion_curve.back(), exact.deletion_curve.back());
}

TEST(EvaluationRows, DistinctAndSeeded) {
  const auto rows = evaluation_rows(50, 20, 4);
  EXPECT_EQ(rows.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(rows.begin(), rows.end()).size(), 20u);
  EXPECT_EQ(rows, evaluation_rows(50, 20, 4));
  EXPECT_EQ(evaluation_rows(10, 20, 4).size(), 10u);
}

}  // namespace
}  // namespace selfex
