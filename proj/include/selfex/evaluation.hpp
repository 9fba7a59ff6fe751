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

// Faithfulness curves, representation diagnostics, analytic cost accounting
// and runtime checks of the two convergence bounds.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "selfex/shapley.hpp"
#include "selfex/side.hpp"
#include "selfex/training.hpp"

namespace selfex {

// Value of coalition s = surrogate class probabilities on x_s, for one input
// x of shape [1, d, m]. The returned game keeps its own copies of the models.
Game surrogate_game(const Classifier& backbone, const SideModel& surrogate,
                    const Tensor& x);

enum class CurveMode { kInsertion, kDeletion };

struct InsertionDeletionCurve {
  std::vector<double> fractions;
  std::vector<double> probabilities;
  double auc = 0.0;
};

// Features ranked by descending attribution (ties by ascending index). One
// feature per step up to d = 64, else 64 quantile steps.
InsertionDeletionCurve insertion_deletion(const std::vector<double>& attribution,
                                          Game& game, std::size_t target,
                                          CurveMode mode);

// Attribution of one input [1, d, m] given its surrogate game.
using ExplainFn = std::function<Attribution(const Tensor& x, Game& game)>;

ExplainFn side_explainer(const Classifier& backbone, const SideModel& surrogate,
                         const SideModel& explainer);
// Raw head output normalised against the game's v(1) and v(0).
ExplainFn head_explainer(const HeadExplainer& model);
ExplainFn random_explainer(std::uint64_t seed);
ExplainFn exact_explainer();
ExplainFn kernelshap_explainer(std::size_t samples, std::uint64_t seed);

struct FaithfulnessReport {
  std::vector<std::size_t> rows;  // evaluated split rows
  std::vector<double> fractions;
  std::vector<double> insertion_curve;  // mean over samples
  std::vector<double> deletion_curve;
  double insertion_auc = 0.0;
  double deletion_auc = 0.0;
  // max |1'phi - (v1 - v0)| over normalised attributions, all classes; NaN
  // when none of the attributions claims to be normalised.
  double max_efficiency_residual = 0.0;
};

// Insertion and deletion AUC for the backbone's predicted class, averaged
// over `samples` rows drawn uniformly without replacement from `split`.
FaithfulnessReport faithfulness(const Classifier& backbone, const SideModel& surrogate,
                                const Split& split, const ExplainFn& explain,
                                std::size_t samples, std::uint64_t seed);
// The first `samples` rows of a seeded shuffle of the split.
std::vector<std::size_t> evaluation_rows(std::size_t split_size, std::size_t samples,
                                         std::uint64_t seed);

// CKA between the class-token states of two classifiers after every block.
std::vector<double> layerwise_cka(const Classifier& a, const Classifier& b,
                                  const Tensor& x);

// Linear CKA between n x p and n x q row-major matrices.
double cka(const std::vector<double>& x, std::size_t p, const std::vector<double>& y,
           std::size_t q, std::size_t n);

double gradient_conflict(const std::vector<double>& g1, const std::vector<double>& g2);

// Forward FLOPs (2 per multiply-accumulate) broken down by component.
struct FlopCount {
  double embedding = 0.0;
  double attention_linear = 0.0;  // qkv and output projections
  double attention_scores = 0.0;  // QK' and AV products
  double mlp = 0.0;
  double norms = 0.0;
  double downsample = 0.0;
  double head = 0.0;

  double total() const {
    return embedding + attention_linear + attention_scores + mlp + norms + downsample +
           head;
  }
  FlopCount& operator+=(const FlopCount& other);
};

FlopCount count_flops_classifier(const ModelConfig& model);
// Side branch alone: downsamplers, narrow blocks, head.
FlopCount count_flops_side(const ModelConfig& model, const SideConfig& side);
// Stand-alone explainer of the classifier's size: the backbone blocks, three
// extra attention blocks and a per-token linear head.
FlopCount count_flops_separate_explainer(const ModelConfig& model);

struct FlopsComparison {
  double classifier = 0.0;
  double separate = 0.0;  // classifier + stand-alone explainer
  double combined = 0.0;  // shared backbone + side explainer
  double reduction = 0.0;
};
FlopsComparison compare_flops(const ModelConfig& model, const SideConfig& explainer);

struct EfficiencyReport {
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;
  double forward_flops = 0.0;
  double memory_bytes = 0.0;  // params, grads, two Adam moments, activations
};
// Side tuning of `side` on a frozen backbone, or full fine-tuning of a
// backbone-sized model when `side` is null.
EfficiencyReport efficiency_report(const ModelConfig& model, const SideConfig* side);

// Check of the explainer bound E||phi_theta - phi_v|| <= sqrt(2 H (L - L*)).
struct ExplainerBoundInput {
  Attribution explained;            // normalised explainer output
  std::vector<double> class_weights;
  Game* game = nullptr;
};

struct BoundVerdict {
  bool skipped = false;
  std::string reason;
  std::size_t samples = 0;
  double lhs = 0.0;
  double loss = 0.0;          // L_exp (sampled, common masks)
  double optimal_loss = 0.0;  // L*_exp (sampled)
  double optimal_ci = 0.0;    // 95% half-width of L*_exp
  double rhs = 0.0;
  double exact_loss = 0.0;
  double exact_optimal_loss = 0.0;
  double exact_rhs = 0.0;
  bool pass = false;
};

inline constexpr std::size_t kMaxBoundPlayers = 12;

BoundVerdict explainer_bound(std::vector<ExplainerBoundInput>& inputs,
                             std::size_t mask_samples, std::uint64_t seed);

// The bound on `samples` held-out rows of a split, with class weights set to
// the surrogate's full-input probabilities. Skipped when d > kMaxBoundPlayers.
BoundVerdict explainer_bound_on_split(const Classifier& backbone, const SideModel& surrogate,
                                      const Split& split, const ExplainFn& explain,
                                      std::size_t samples, std::size_t mask_samples,
                                      std::uint64_t seed);

// Gradient descent on a strictly convex linear-softmax surrogate problem.
struct DecayTrace {
  std::vector<double> gap;    // L(beta_t) - L*
  std::vector<double> bound;  // (1 - mu alpha)^t gap_0
  double mu = 0.0;
  double smoothness = 0.0;
  double step_size = 0.0;
  double worst_ratio = 0.0;   // max_t gap_t / bound_t
  bool pass = false;
};
DecayTrace convex_decay_experiment(std::size_t features, std::size_t classes,
                                   std::size_t inputs, std::size_t masks_per_input,
                                   std::size_t steps, std::uint64_t seed,
                                   double slack = 0.05);

}  // namespace selfex
