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

// Ladder side branch attached to a frozen classifier. The branch reads the
// backbone state after every block through a per-block downsampler and runs
// its own narrow blocks; nothing flows back into the backbone.
//
//   u_i = z_{i-1}^side + FC_i(z_i^main)     (z_0^side = 0)
//   z_i^side = side_block_i(u_i)

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "selfex/transformer.hpp"

namespace selfex {

enum class SideRole { kSurrogate, kExplainer };
std::string to_string(SideRole role);
SideRole parse_side_role(const std::string& text);

// Where the explanation head reads the final side state: the class token
// (one d x C output layer) or every feature token (a shared C-wide layer).
enum class ExplainerReadout { kClassToken, kTokens };
std::string to_string(ExplainerReadout readout);
ExplainerReadout parse_explainer_readout(const std::string& text);

struct SideConfig {
  std::size_t reduction = 8;
  SideRole role = SideRole::kSurrogate;
  std::size_t head_depth = 3;  // hidden FC layers of the explanation head
  ExplainerReadout readout = ExplainerReadout::kClassToken;

  std::size_t width(const ModelConfig& model) const;
  // Backbone head count when it divides the side width, else 1.
  std::size_t heads(const ModelConfig& model) const;
  void validate(const ModelConfig& model) const;
  bool operator==(const SideConfig&) const = default;
};

// Downsamplers plus narrow blocks.
struct SideBranch {
  std::vector<Linear> down;
  std::vector<MsaBlock> blocks;

  static SideBranch create(const ModelConfig& model, const SideConfig& side,
                           Rng& rng);
  Tensor operator()(const std::vector<Tensor>& taps, const Tensor& key_mask) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Norm + linear classifier on the class-token state.
struct SurrogateHead {
  LayerNorm norm;
  Linear out;

  static SurrogateHead create(std::size_t width, std::size_t classes, Rng& rng);
  Tensor operator()(const Tensor& cls) const;  // [B, w] -> [B, C]
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Norm, `depth` hidden FC+GELU layers, then a linear map to d x C values
// (class-token readout) or to C values per feature token.
struct ExplanationHead {
  LayerNorm norm;
  std::vector<Linear> hidden;
  Linear out;
  std::size_t num_tokens = 0;
  std::size_t num_classes = 0;
  ExplainerReadout readout = ExplainerReadout::kClassToken;

  static ExplanationHead create(std::size_t width, std::size_t depth,
                                std::size_t num_tokens, std::size_t classes,
                                ExplainerReadout readout, Rng& rng);
  Tensor operator()(const Tensor& tokens) const;  // [B, d + 1, w] -> [B, d, C]
  void visit(const std::string& prefix, const ParamVisitor& fn);
  static std::size_t param_count(std::size_t width, std::size_t depth,
                                 std::size_t num_tokens, std::size_t classes,
                                 ExplainerReadout readout);
};

// Trainable part of a side-tuned model. The backbone is passed in on every
// call and only read.
class SideModel {
 public:
  // Fresh side model for `side.role` with Kaiming-initialised weights.
  static SideModel create(const ModelConfig& model, const SideConfig& side,
                          Rng& rng);
  // Copies the surrogate's downsamplers and blocks; the head is new.
  static SideModel explainer_from(const SideModel& surrogate,
                                  std::size_t head_depth,
                                  ExplainerReadout readout, Rng& rng);

  // Class logits of the masked input x_s; backbone and branch share the mask.
  Tensor surrogate_logits(const Classifier& backbone, const Tensor& x,
                          const Tensor& key_mask) const;
  Tensor surrogate_logits(const Classifier& backbone,
                          const CompactBatch& batch) const;
  // Unconstrained attributions [B, d, C] for the full input.
  Tensor explain_raw(const Classifier& backbone, const Tensor& x) const;

  // Heads applied to precomputed backbone taps.
  Tensor surrogate_from_taps(const std::vector<Tensor>& taps,
                             const Tensor& key_mask) const;
  Tensor explainer_from_taps(const std::vector<Tensor>& taps) const;

  ParamList parameters() const;
  SideModel clone() const;
  void check_backbone(const Classifier& backbone) const;

  const ModelConfig& model_config() const { return model_; }
  const SideConfig& side_config() const { return side_; }
  SideRole role() const { return side_.role; }

 private:
  void visit(const ParamVisitor& fn);
  Tensor class_state(const std::vector<Tensor>& taps, const Tensor& key_mask) const;

  ModelConfig model_;
  SideConfig side_;
  SideBranch branch_;
  SurrogateHead surrogate_head_;       // surrogate role only
  ExplanationHead explanation_head_;   // explainer role only
};

// Analytic trainable-parameter count of a side model.
std::size_t count_side_params(const ModelConfig& model, const SideConfig& side);

}  // namespace selfex
