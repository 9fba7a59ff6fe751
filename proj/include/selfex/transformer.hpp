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

// Transformer encoder classifier over d feature tokens plus a class token.
// Feature removal is expressed purely through the attention key mask, so a
// removed token can still be a query but is never read by anyone.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "selfex/mask.hpp"
#include "selfex/nn.hpp"

namespace selfex {

struct ModelConfig {
  std::size_t depth = 2;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t num_tokens = 16;
  std::size_t token_input_dim = 4;
  std::size_t num_classes = 2;
  // Input projection plus learned positions. When false the raw tokens must
  // already have width `hidden`.
  bool embedding = true;
  bool positional = true;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t mlp_hidden() const;
  std::size_t sequence_length() const { return num_tokens + 1; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Dimension tables for the ViT family at 224px / 16px patches, 10 classes.
ModelConfig model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

// Analytic parameter count, including embedding, class token, final norm and
// classification head.
std::size_t count_params(const ModelConfig& config);

// [B, 1, 1, d + 1] attention key mask; the class token column is always 1.
Tensor make_key_mask(const std::vector<Mask>& masks);

// Kept-token view of a batch: rows drawn from `x` ([S, d, D]) with masked
// features dropped. Every mask in one call must retain the same count.
struct CompactBatch {
  Tensor tokens;                                // [B, k, D]
  std::vector<std::vector<std::size_t>> positions;  // feature index per row
};
CompactBatch compact_tokens(const Tensor& x, const std::vector<Mask>& masks,
                            const std::vector<std::size_t>& sample_of);

class Classifier {
 public:
  struct Trace {
    std::vector<Tensor> blocks;  // z_1 .. z_N, each [B, T, h]
    Tensor logits;               // [B, C]
  };

  static Classifier create(const ModelConfig& config, Rng& rng);

  // x: [B, T, D]. `key_mask` is [B, 1, 1, T + 1] or undefined. When
  // `positions` is given, row j of sample b is feature positions[b][j]
  // (compact batches); otherwise T must equal d.
  Trace run(const Tensor& x, const Tensor& key_mask,
            const std::vector<std::vector<std::size_t>>* positions = nullptr,
            bool keep_blocks = true) const;
  Tensor logits(const Tensor& x, const Tensor& key_mask = Tensor()) const;
  Tensor logits(const Tensor& x, const std::vector<Mask>& masks) const;
  Tensor compact_logits(const CompactBatch& batch) const;

  // Token states entering block 1.
  Tensor embed(const Tensor& x,
               const std::vector<std::vector<std::size_t>>* positions) const;
  // Class-token readout through the final norm and head.
  Tensor readout(const Tensor& final_tokens) const;

  ParamList parameters() const;
  // Parameters shared by every task head (everything except `head`).
  ParamList encoder_parameters() const;
  void set_trainable(bool trainable);
  Classifier clone() const;

  const ModelConfig& config() const { return config_; }
  const std::vector<MsaBlock>& blocks() const { return blocks_; }

 private:
  void visit(const ParamVisitor& fn, bool include_head);

  ModelConfig config_;
  Linear input_proj_;
  Tensor class_token_;  // [1, 1, h]
  Tensor positions_;    // [1, d + 1, h]
  std::vector<MsaBlock> blocks_;
  LayerNorm final_norm_;
  Linear head_;
};

// Shape check shared by every entry point taking a token batch.
void check_token_batch(const Tensor& x, const ModelConfig& config,
                       bool allow_short = false);

}  // namespace selfex
