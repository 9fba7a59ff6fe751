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

#include "selfex/transformer.hpp"

#include <cmath>

#include "selfex/errors.hpp"

namespace selfex {

std::size_t ModelConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * double(hidden)));
}

void ModelConfig::validate() const {
  if (depth == 0 || hidden == 0 || heads == 0 || num_classes == 0 ||
      token_input_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (num_tokens < 2) throw ConfigError("need at least 2 feature tokens");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) {
    throw ConfigError("mlp_ratio must be positive");
  }
  if (!embedding && token_input_dim != hidden) {
    throw ConfigError("without an embedding, token_input_dim must equal hidden");
  }
  if (!embedding && positional) {
    throw ConfigError("positional encodings require the embedding");
  }
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  c.num_tokens = 196;
  c.token_input_dim = 16 * 16 * 3;
  c.num_classes = 10;
  c.mlp_ratio = 4.0;
  if (name == "vit-tiny") {
    c.hidden = 192, c.depth = 12, c.heads = 3;
  } else if (name == "vit-small") {
    c.hidden = 384, c.depth = 12, c.heads = 6;
  } else if (name == "vit-base") {
    c.hidden = 768, c.depth = 12, c.heads = 12;
  } else if (name == "vit-large") {
    c.hidden = 1024, c.depth = 24, c.heads = 16;
  } else {
    throw ConfigError("unknown model preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> model_preset_names() {
  return {"vit-tiny", "vit-small", "vit-base", "vit-large"};
}

std::size_t count_params(const ModelConfig& c) {
  c.validate();
  const std::size_t h = c.hidden;
  std::size_t n = h;  // class token
  if (c.embedding) n += Linear::param_count(c.token_input_dim, h);
  if (c.positional) n += c.sequence_length() * h;
  n += c.depth * MsaBlock::param_count(h, c.mlp_hidden());
  n += LayerNorm::param_count(h);
  n += Linear::param_count(h, c.num_classes);
  return n;
}

Tensor make_key_mask(const std::vector<Mask>& masks) {
  if (masks.empty()) throw ContractError("make_key_mask: no masks");
  const std::size_t d = masks.front().size();
  std::vector<float> data;
  data.reserve(masks.size() * (d + 1));
  for (const Mask& m : masks) {
    if (m.size() != d) {
      throw ContractError("make_key_mask: mask length " +
                          std::to_string(m.size()) + " != " +
                          std::to_string(d));
    }
    data.push_back(1.0f);
    for (std::size_t i = 0; i < d; ++i) data.push_back(m[i] ? 1.0f : 0.0f);
  }
  return Tensor::from_data({masks.size(), 1, 1, d + 1}, std::move(data));
}

CompactBatch compact_tokens(const Tensor& x, const std::vector<Mask>& masks,
                            const std::vector<std::size_t>& sample_of) {
  if (x.rank() != 3) {
    throw DimensionError("compact_tokens: expected [S, d, D], got " +
                         shape_to_string(x.shape()));
  }
  if (masks.empty() || sample_of.size() != masks.size()) {
    throw ContractError("compact_tokens: need one sample index per mask");
  }
  const std::size_t d = x.dim(1);
  const std::size_t width = x.dim(2);
  const std::size_t kept = masks.front().count();
  CompactBatch out;
  std::vector<float> data;
  data.reserve(masks.size() * kept * width);
  auto src = x.data();
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const Mask& m = masks[b];
    if (m.size() != d || m.count() != kept) {
      throw ContractError("compact_tokens: masks must share length and count");
    }
    if (sample_of[b] >= x.dim(0)) {
      throw ContractError("compact_tokens: sample index out of range");
    }
    std::vector<std::size_t> pos;
    pos.reserve(kept);
    for (std::size_t i = 0; i < d; ++i) {
      if (!m[i]) continue;
      pos.push_back(i);
      const float* row = src.data() + (sample_of[b] * d + i) * width;
      data.insert(data.end(), row, row + width);
    }
    out.positions.push_back(std::move(pos));
  }
  out.tokens = Tensor::from_data({masks.size(), kept, width}, std::move(data));
  return out;
}

void check_token_batch(const Tensor& x, const ModelConfig& c, bool allow_short) {
  const bool ok = x.defined() && x.rank() == 3 &&
                  x.dim(2) == c.token_input_dim &&
                  (allow_short ? x.dim(1) <= c.num_tokens
                               : x.dim(1) == c.num_tokens);
  if (!ok) {
    throw DimensionError(
        "expected token batch [B, " + std::to_string(c.num_tokens) + ", " +
        std::to_string(c.token_input_dim) + "], got " +
        (x.defined() ? shape_to_string(x.shape()) : std::string("nothing")));
  }
}

Classifier Classifier::create(const ModelConfig& config, Rng& rng) {
  config.validate();
  Classifier m;
  m.config_ = config;
  const std::size_t h = config.hidden;
  if (config.embedding) {
    m.input_proj_ = Linear::create(config.token_input_dim, h, Init::kXavier, rng);
  }
  std::vector<float> cls(h);
  for (float& v : cls) v = static_cast<float>(rng.normal(0.0, 0.02));
  m.class_token_ = Tensor::from_data({1, 1, h}, std::move(cls), true);
  if (config.positional) {
    std::vector<float> pos(config.sequence_length() * h);
    for (float& v : pos) v = static_cast<float>(rng.normal(0.0, 0.02));
    m.positions_ = Tensor::from_data({1, config.sequence_length(), h},
                                     std::move(pos), true);
  }
  for (std::size_t i = 0; i < config.depth; ++i) {
    m.blocks_.push_back(MsaBlock::create(h, config.heads, config.mlp_hidden(),
                                         Init::kXavier, rng));
  }
  m.final_norm_ = LayerNorm::create(h);
  m.head_ = Linear::create(h, config.num_classes, Init::kXavier, rng);
  return m;
}

Tensor Classifier::embed(
    const Tensor& x,
    const std::vector<std::vector<std::size_t>>* positions) const {
  check_token_batch(x, config_, positions != nullptr);
  const std::size_t batch = x.dim(0);
  const std::size_t seq = x.dim(1);
  const std::size_t h = config_.hidden;
  Tensor feats = config_.embedding ? input_proj_(x) : x;
  Tensor cls = add(Tensor::zeros({batch, 1, h}), class_token_);
  Tensor tokens = concat({cls, feats}, 1);
  if (!config_.positional) return tokens;
  if (!positions) return add(tokens, positions_);

  if (positions->size() != batch) {
    throw ContractError("embed: need one position list per sample");
  }
  Tensor table = reshape(positions_, {config_.sequence_length(), h});
  std::vector<Tensor> rows;
  rows.reserve(batch);
  for (const auto& p : *positions) {
    if (p.size() != seq) throw ContractError("embed: position list length");
    std::vector<std::size_t> idx{0};
    for (std::size_t f : p) idx.push_back(f + 1);
    rows.push_back(reshape(index_select(table, 0, idx), {1, seq + 1, h}));
  }
  return add(tokens, concat(rows, 0));
}

Tensor Classifier::readout(const Tensor& final_tokens) const {
  const std::size_t batch = final_tokens.dim(0);
  Tensor cls = reshape(slice(final_tokens, 1, 0, 1), {batch, config_.hidden});
  return head_(final_norm_(cls));
}

Classifier::Trace Classifier::run(
    const Tensor& x, const Tensor& key_mask,
    const std::vector<std::vector<std::size_t>>* positions,
    bool keep_blocks) const {
  Tensor z = embed(x, positions);
  Trace trace;
  for (const MsaBlock& block : blocks_) {
    z = block(z, key_mask);
    if (keep_blocks) trace.blocks.push_back(z);
  }
  trace.logits = readout(z);
  return trace;
}

Tensor Classifier::logits(const Tensor& x, const Tensor& key_mask) const {
  return run(x, key_mask, nullptr, false).logits;
}

Tensor Classifier::logits(const Tensor& x, const std::vector<Mask>& masks) const {
  return logits(x, make_key_mask(masks));
}

Tensor Classifier::compact_logits(const CompactBatch& batch) const {
  return run(batch.tokens, Tensor(), &batch.positions, false).logits;
}

void Classifier::visit(const ParamVisitor& fn, bool include_head) {
  if (config_.embedding) input_proj_.visit("embed.proj", fn);
  fn("embed.class_token", class_token_);
  if (config_.positional) fn("embed.positions", positions_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit("blocks." + std::to_string(i), fn);
  }
  final_norm_.visit("final_norm", fn);
  if (include_head) head_.visit("head", fn);
}

ParamList Classifier::parameters() const {
  ParamList out;
  const_cast<Classifier&>(*this).visit(
      [&](const std::string& name, Tensor& t) { out.push_back({name, t}); },
      true);
  return out;
}

ParamList Classifier::encoder_parameters() const {
  ParamList out;
  const_cast<Classifier&>(*this).visit(
      [&](const std::string& name, Tensor& t) { out.push_back({name, t}); },
      false);
  return out;
}

void Classifier::set_trainable(bool trainable) {
  ParamList params = parameters();
  selfex::set_trainable(params, trainable);
}

Classifier Classifier::clone() const {
  Classifier copy = *this;
  copy.visit(deep_copy_visitor(), true);
  return copy;
}

}  // namespace selfex
