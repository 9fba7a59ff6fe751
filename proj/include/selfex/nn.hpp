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

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "selfex/optim.hpp"
#include "selfex/rng.hpp"
#include "selfex/tensor.hpp"

namespace selfex {

// Additive constant standing in for -inf on removed attention keys.
inline constexpr float kMaskedScore = -1e9f;

enum class Init { kXavier, kKaiming };

// Visits each parameter tensor by qualified name; used for collection and
// deep copies.
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// y = x W + b, W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(std::size_t in, std::size_t out, Init init, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
  static std::size_t param_count(std::size_t in, std::size_t out) {
    return in * out + out;
  }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(std::size_t width);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
  static std::size_t param_count(std::size_t width) { return 2 * width; }
};

// Pre-norm transformer block: x + MSA(LN(x), s), then + MLP(LN(.)).
struct MsaBlock {
  LayerNorm norm1;
  Linear qkv;  // [w, 3w]: per-head W_qkv slices laid side by side
  Linear proj; // P_msa
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;
  std::size_t heads = 1;

  static MsaBlock create(std::size_t width, std::size_t heads,
                         std::size_t mlp_hidden, Init init, Rng& rng);

  // Multi-head masked self-attention on [B, T, w] token states. `key_mask` is
  // [B, 1, 1, T] with 1 for visible keys, or undefined for no masking.
  // Optionally exposes the [B, heads, T, T] attention probabilities.
  Tensor attention(const Tensor& tokens, const Tensor& key_mask,
                   Tensor* probabilities = nullptr) const;
  Tensor operator()(const Tensor& x, const Tensor& key_mask) const;
  void collect(const std::string& prefix, ParamList& out) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t width() const { return norm1.gamma.numel(); }
  static std::size_t param_count(std::size_t width, std::size_t mlp_hidden);
};

// Deep copies values of `src` into `dst`; the lists must agree by name and shape.
void copy_parameters(const ParamList& src, ParamList& dst);
void set_trainable(ParamList& params, bool trainable);
// Replaces every visited tensor with an independent copy.
ParamVisitor deep_copy_visitor();
std::size_t total_numel(const ParamList& params);

}  // namespace selfex
