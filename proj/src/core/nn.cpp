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

#include "selfex/nn.hpp"

#include <algorithm>
#include <cmath>

#include "selfex/errors.hpp"

namespace selfex {

Linear Linear::create(std::size_t in, std::size_t out, Init init, Rng& rng) {
  std::vector<float> w(in * out);
  if (init == Init::kKaiming) {
    const double stddev = std::sqrt(2.0 / double(in));
    for (float& v : w) v = static_cast<float>(rng.normal(0.0, stddev));
  } else {
    const double bound = std::sqrt(6.0 / double(in + out));
    for (float& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return Linear{Tensor::from_data({in, out}, std::move(w), true),
                Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const {
  return add(matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

LayerNorm LayerNorm::create(std::size_t width) {
  return LayerNorm{Tensor::full({width}, 1.0f, true),
                   Tensor::zeros({width}, true)};
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return layer_norm(x, gamma, beta);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

MsaBlock MsaBlock::create(std::size_t width, std::size_t heads,
                          std::size_t mlp_hidden, Init init, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("block width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  MsaBlock b;
  b.norm1 = LayerNorm::create(width);
  b.qkv = Linear::create(width, 3 * width, init, rng);
  b.proj = Linear::create(width, width, init, rng);
  b.norm2 = LayerNorm::create(width);
  b.fc1 = Linear::create(width, mlp_hidden, init, rng);
  b.fc2 = Linear::create(mlp_hidden, width, init, rng);
  b.heads = heads;
  return b;
}

std::size_t MsaBlock::param_count(std::size_t width, std::size_t mlp_hidden) {
  return 2 * LayerNorm::param_count(width) +
         Linear::param_count(width, 3 * width) +
         Linear::param_count(width, width) +
         Linear::param_count(width, mlp_hidden) +
         Linear::param_count(mlp_hidden, width);
}

Tensor MsaBlock::attention(const Tensor& tokens, const Tensor& key_mask,
                           Tensor* probabilities) const {
  if (tokens.rank() != 3 || tokens.dim(2) != width()) {
    throw DimensionError("attention: expected [B, T, " +
                         std::to_string(width()) + "] tokens, got " +
                         shape_to_string(tokens.shape()));
  }
  const std::size_t batch = tokens.dim(0);
  const std::size_t seq = tokens.dim(1);
  const std::size_t head_dim = width() / heads;
  if (key_mask.defined() && key_mask.shape() != Shape{batch, 1, 1, seq}) {
    throw ContractError("attention: key mask " +
                        shape_to_string(key_mask.shape()) +
                        " does not match tokens " +
                        shape_to_string(tokens.shape()));
  }

  Tensor qkv_out = reshape(qkv(tokens), {batch, seq, 3, heads, head_dim});
  Tensor split = permute(qkv_out, {2, 0, 3, 1, 4});  // [3, B, H, T, hd]
  const Shape per_head{batch * heads, seq, head_dim};
  Tensor q = reshape(slice(split, 0, 0, 1), per_head);
  Tensor k = reshape(slice(split, 0, 1, 1), per_head);
  Tensor v = reshape(slice(split, 0, 2, 1), per_head);

  Tensor scores = scale(bmm(q, k, /*transpose_b=*/true),
                        static_cast<float>(1.0 / std::sqrt(double(head_dim))));
  scores = reshape(scores, {batch, heads, seq, seq});
  if (key_mask.defined()) scores = masked_fill_add(scores, key_mask, kMaskedScore);
  Tensor probs = softmax(scores);
  if (probabilities) *probabilities = probs;

  Tensor mixed = bmm(reshape(probs, {batch * heads, seq, seq}), v);
  mixed = permute(reshape(mixed, {batch, heads, seq, head_dim}), {0, 2, 1, 3});
  return proj(reshape(mixed, {batch, seq, width()}));
}

Tensor MsaBlock::operator()(const Tensor& x, const Tensor& key_mask) const {
  Tensor h = add(x, attention(norm1(x), key_mask));
  return add(h, fc2(gelu(fc1(norm2(h)))));
}

void MsaBlock::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  qkv.collect(prefix + ".attn.qkv", out);
  proj.collect(prefix + ".attn.proj", out);
  norm2.collect(prefix + ".norm2", out);
  fc1.collect(prefix + ".mlp.fc1", out);
  fc2.collect(prefix + ".mlp.fc2", out);
}

void MsaBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm1.visit(prefix + ".norm1", fn);
  qkv.visit(prefix + ".attn.qkv", fn);
  proj.visit(prefix + ".attn.proj", fn);
  norm2.visit(prefix + ".norm2", fn);
  fc1.visit(prefix + ".mlp.fc1", fn);
  fc2.visit(prefix + ".mlp.fc2", fn);
}

void copy_parameters(const ParamList& src, ParamList& dst) {
  if (src.size() != dst.size()) {
    throw ContractError("copy_parameters: " + std::to_string(src.size()) +
                        " source tensors vs " + std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name ||
        src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw ContractError("copy_parameters: '" + src[i].name + "' " +
                          shape_to_string(src[i].tensor.shape()) +
                          " does not match '" + dst[i].name + "' " +
                          shape_to_string(dst[i].tensor.shape()));
    }
    auto from = src[i].tensor.data();
    auto to = dst[i].tensor.mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
  }
}

void set_trainable(ParamList& params, bool trainable) {
  for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

ParamVisitor deep_copy_visitor() {
  return [](const std::string&, Tensor& t) { t = t.clone(); };
}

std::size_t total_numel(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace selfex
