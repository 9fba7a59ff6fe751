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

// Training stages: classifier, side surrogate, side explainer, and the two
// comparison pipelines that attach an explanation head directly to the
// classifier (froyo keeps the classifier frozen, duo fine-tunes it jointly).

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "selfex/data.hpp"
#include "selfex/optim.hpp"
#include "selfex/side.hpp"

namespace selfex {

enum class Stage { kClassifier, kSurrogate, kExplainer };
enum class Pipeline { kAutognothi, kFullFinetune, kFroyo, kDuo };
enum class ClassifierLoss { kMse, kCrossEntropy };
// How the explanation loss weights classes: by the surrogate's full-input
// probabilities, or only the ground-truth label.
enum class LabelMode { kWeighted, kLabelOnly };

std::string to_string(Stage stage);
std::string to_string(Pipeline pipeline);
std::string to_string(ClassifierLoss loss);
std::string to_string(LabelMode mode);
Stage parse_stage(const std::string& text);
Pipeline parse_pipeline(const std::string& text);
ClassifierLoss parse_classifier_loss(const std::string& text);
LabelMode parse_label_mode(const std::string& text);

struct StageConfig {
  Stage stage = Stage::kClassifier;
  Pipeline pipeline = Pipeline::kAutognothi;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;        // classifier inputs per step
  std::size_t masks_per_input = 16;   // surrogate / explainer
  std::size_t inputs_per_batch = 2;   // surrogate / explainer
  std::size_t steps_per_epoch = 0;    // 0: one pass over the training split
  std::size_t val_inputs = 0;         // 0: whole validation split
  std::size_t val_masks = 16;         // fixed masks per validation input
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  ClassifierLoss classifier_loss = ClassifierLoss::kMse;
  LabelMode label_mode = LabelMode::kWeighted;

  void validate() const;
};

struct LossRecord {
  std::vector<double> step_loss;
  std::vector<double> val_loss;  // one per epoch
  double initial_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;    // 1-based index into val_loss
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double optimal_loss = std::numeric_limits<double>::quiet_NaN();
  double optimal_loss_ci = std::numeric_limits<double>::quiet_NaN();
};

// KL(softmax(p) || softmax(q)) in double with log-sum-exp stabilisation.
double kl_divergence(const std::vector<double>& p_logits,
                     const std::vector<double>& q_logits);

// Rows of `masks` apply to x[sample_of[i]]. No gradient. Returns [n, C]
// surrogate probabilities. Masks are grouped by cardinality and evaluated on
// compact token batches.
Tensor surrogate_probabilities(const Classifier& backbone, const SideModel& surrogate,
                               const Tensor& x, const std::vector<Mask>& masks,
                               const std::vector<std::size_t>& sample_of);

// phi_raw + (v1 - v0 - 1'phi_raw) / d, in-graph. phi_raw [B, d, C], v [B, C].
Tensor normalize_in_graph(const Tensor& phi_raw, const Tensor& v1, const Tensor& v0);

// Shapley regression loss on normalised attributions.
//   phi [B, d, C], v0 [B, C], values [B, M, C], masks [B, M, d], weights [B, C]
// Returns mean over (b, m) of sum_c w_c (v(s) - v0 - s'phi)^2.
Tensor explanation_loss(const Tensor& phi, const Tensor& v0, const Tensor& values,
                        const Tensor& masks, const Tensor& weights);

struct ClassifierRun {
  Classifier model;
  LossRecord record;
};
ClassifierRun train_classifier(const ModelConfig& config, const SyntheticDataset& data,
                               const StageConfig& stage);
double classifier_loss(const Classifier& model, const Split& split, ClassifierLoss loss);
double accuracy(const Tensor& logits, const std::vector<std::int32_t>& labels);

struct SideRun {
  SideModel model;
  LossRecord record;
};
// The backbone is never modified; a change in its parameter bytes raises
// InvariantViolation.
SideRun train_surrogate(const Classifier& backbone, const SideConfig& side,
                        const SyntheticDataset& data, const StageConfig& stage);
// Initialised from the surrogate's branch with a fresh explanation head.
SideRun train_explainer(const Classifier& backbone, const SideModel& surrogate,
                        std::size_t head_depth, ExplainerReadout readout,
                        const SyntheticDataset& data, const StageConfig& stage);

// Explanation head reading the classifier's final token states.
struct HeadExplainer {
  Classifier classifier;
  ExplanationHead head;

  static HeadExplainer create(const Classifier& classifier, std::size_t head_depth,
                              ExplainerReadout readout, Rng& rng);
  Tensor explain_raw(const Tensor& x) const;
  // Logits and raw attributions from one backbone pass.
  std::pair<Tensor, Tensor> forward(const Tensor& x) const;
  ParamList head_parameters() const;
  HeadExplainer clone() const;
};

struct HeadRun {
  HeadExplainer model;
  LossRecord record;
  std::vector<double> gradient_cosine;  // duo only, one per step
};
// Only the explanation head trains.
HeadRun train_froyo(const Classifier& classifier, const SideModel& surrogate,
                    std::size_t head_depth, ExplainerReadout readout,
                    const SyntheticDataset& data, const StageConfig& stage);
// Encoder, prediction head and explanation head train on the sum of the
// classification and explanation losses; the cosine between the two task
// gradients on the shared encoder is recorded every step.
HeadRun train_duo(const Classifier& classifier, const SideModel& surrogate,
                  std::size_t head_depth, ExplainerReadout readout,
                  const SyntheticDataset& data, const StageConfig& stage);

}  // namespace selfex
