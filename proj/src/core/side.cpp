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

#include "selfex/side.hpp"

#include "selfex/errors.hpp"

namespace selfex {

std::string to_string(SideRole role) {
  return role == SideRole::kSurrogate ? "surrogate" : "explainer";
}

SideRole parse_side_role(const std::string& text) {
  if (text == "surrogate") return SideRole::kSurrogate;
  if (text == "explainer") return SideRole::kExplainer;
  throw ConfigError("unknown side role '" + text + "'");
}

std::string to_string(ExplainerReadout readout) {
  return readout == ExplainerReadout::kClassToken ? "class-token" : "tokens";
}

ExplainerReadout parse_explainer_readout(const std::string& text) {
  if (text == "class-token") return ExplainerReadout::kClassToken;
  if (text == "tokens") return ExplainerReadout::kTokens;
  throw ConfigError("unknown explainer readout '" + text + "'");
}

std::size_t SideConfig::width(const ModelConfig& model) const {
  return reduction ? model.hidden / reduction : 0;
}

std::size_t SideConfig::heads(const ModelConfig& model) const {
  const std::size_t w = width(model);
  return (w % model.heads == 0) ? model.heads : 1;
}

void SideConfig::validate(const ModelConfig& model) const {
  if (reduction == 0 || model.hidden % reduction != 0) {
    throw ConfigError("reduction factor " + std::to_string(reduction) +
                      " must divide hidden size " +
                      std::to_string(model.hidden));
  }
  if (head_depth == 0) throw ConfigError("explanation head depth must be >= 1");
}

SideBranch SideBranch::create(const ModelConfig& model, const SideConfig& side,
                              Rng& rng) {
  side.validate(model);
  const std::size_t w = side.width(model);
  const std::size_t mlp = static_cast<std::size_t>(model.mlp_ratio * double(w) + 0.5);
  SideBranch b;
  for (std::size_t i = 0; i < model.depth; ++i) {
    b.down.push_back(Linear::create(model.hidden, w, Init::kKaiming, rng));
    b.blocks.push_back(MsaBlock::create(w, side.heads(model), mlp, Init::kKaiming, rng));
  }
  return b;
}

Tensor SideBranch::operator()(const std::vector<Tensor>& taps,
                              const Tensor& key_mask) const {
  if (taps.size() != blocks.size()) {
    throw ContractError("side branch expects " + std::to_string(blocks.size()) +
                        " backbone taps, got " + std::to_string(taps.size()));
  }
  Tensor z;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Tensor u = down[i](taps[i]);
    if (z.defined()) u = add(z, u);
    z = blocks[i](u, key_mask);
  }
  return z;
}

void SideBranch::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    down[i].visit(prefix + ".down." + std::to_string(i), fn);
    blocks[i].visit(prefix + ".blocks." + std::to_string(i), fn);
  }
}

SurrogateHead SurrogateHead::create(std::size_t width, std::size_t classes,
                                    Rng& rng) {
  return SurrogateHead{LayerNorm::create(width),
                       Linear::create(width, classes, Init::kKaiming, rng)};
}

Tensor SurrogateHead::operator()(const Tensor& cls) const {
  return out(norm(cls));
}

void SurrogateHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm.visit(prefix + ".norm", fn);
  out.visit(prefix + ".out", fn);
}

ExplanationHead ExplanationHead::create(std::size_t width, std::size_t depth,
                                        std::size_t num_tokens,
                                        std::size_t classes,
                                        ExplainerReadout readout, Rng& rng) {
  ExplanationHead h;
  h.norm = LayerNorm::create(width);
  for (std::size_t i = 0; i < depth; ++i) {
    h.hidden.push_back(Linear::create(width, width, Init::kKaiming, rng));
  }
  const std::size_t outputs =
      readout == ExplainerReadout::kClassToken ? num_tokens * classes : classes;
  h.out = Linear::create(width, outputs, Init::kXavier, rng);
  h.num_tokens = num_tokens;
  h.num_classes = classes;
  h.readout = readout;
  return h;
}

Tensor ExplanationHead::operator()(const Tensor& tokens) const {
  const std::size_t batch = tokens.dim(0);
  const std::size_t width = tokens.dim(2);
  Tensor h = readout == ExplainerReadout::kClassToken
                 ? reshape(slice(tokens, 1, 0, 1), {batch, width})
                 : slice(tokens, 1, 1, num_tokens);
  h = norm(h);
  for (const Linear& fc : hidden) h = gelu(fc(h));
  return reshape(out(h), {batch, num_tokens, num_classes});
}

void ExplanationHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm.visit(prefix + ".norm", fn);
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    hidden[i].visit(prefix + ".hidden." + std::to_string(i), fn);
  }
  out.visit(prefix + ".out", fn);
}

std::size_t ExplanationHead::param_count(std::size_t width, std::size_t depth,
                                         std::size_t num_tokens,
                                         std::size_t classes,
                                         ExplainerReadout readout) {
  const std::size_t outputs =
      readout == ExplainerReadout::kClassToken ? num_tokens * classes : classes;
  return LayerNorm::param_count(width) + depth * Linear::param_count(width, width) +
         Linear::param_count(width, outputs);
}

SideModel SideModel::create(const ModelConfig& model, const SideConfig& side,
                            Rng& rng) {
  model.validate();
  side.validate(model);
  SideModel s;
  s.model_ = model;
  s.side_ = side;
  s.branch_ = SideBranch::create(model, side, rng);
  const std::size_t w = side.width(model);
  if (side.role == SideRole::kSurrogate) {
    s.surrogate_head_ = SurrogateHead::create(w, model.num_classes, rng);
  } else {
    s.explanation_head_ = ExplanationHead::create(
        w, side.head_depth, model.num_tokens, model.num_classes, side.readout, rng);
  }
  return s;
}

SideModel SideModel::explainer_from(const SideModel& surrogate,
                                    std::size_t head_depth,
                                    ExplainerReadout readout, Rng& rng) {
  if (surrogate.role() != SideRole::kSurrogate) {
    throw RoleError("explainer initialisation needs a surrogate side model, got " +
                    to_string(surrogate.role()));
  }
  SideModel s;
  s.model_ = surrogate.model_;
  s.side_ = surrogate.side_;
  s.side_.role = SideRole::kExplainer;
  s.side_.head_depth = head_depth;
  s.side_.readout = readout;
  s.side_.validate(s.model_);
  s.branch_ = surrogate.branch_;
  s.branch_.visit("", deep_copy_visitor());
  s.branch_.visit("", [](const std::string&, Tensor& t) { t.set_requires_grad(true); });
  s.explanation_head_ = ExplanationHead::create(
      s.side_.width(s.model_), head_depth, s.model_.num_tokens,
      s.model_.num_classes, readout, rng);
  return s;
}

void SideModel::check_backbone(const Classifier& backbone) const {
  if (!(backbone.config() == model_)) {
    throw ContractError("side model was built for a different backbone config");
  }
}

Tensor SideModel::class_state(const std::vector<Tensor>& taps,
                              const Tensor& key_mask) const {
  Tensor z = branch_(taps, key_mask);
  const std::size_t batch = z.dim(0);
  return reshape(slice(z, 1, 0, 1), {batch, side_.width(model_)});
}

Tensor SideModel::surrogate_from_taps(const std::vector<Tensor>& taps,
                                      const Tensor& key_mask) const {
  if (role() != SideRole::kSurrogate) {
    throw ContractError("surrogate forward called on an explainer side model");
  }
  return surrogate_head_(class_state(taps, key_mask));
}

Tensor SideModel::explainer_from_taps(const std::vector<Tensor>& taps) const {
  if (role() != SideRole::kExplainer) {
    throw ContractError("explainer forward called on a surrogate side model");
  }
  return explanation_head_(branch_(taps, Tensor()));
}

Tensor SideModel::surrogate_logits(const Classifier& backbone, const Tensor& x,
                                   const Tensor& key_mask) const {
  check_backbone(backbone);
  auto trace = backbone.run(x, key_mask);
  return surrogate_from_taps(trace.blocks, key_mask);
}

Tensor SideModel::surrogate_logits(const Classifier& backbone,
                                   const CompactBatch& batch) const {
  check_backbone(backbone);
  auto trace = backbone.run(batch.tokens, Tensor(), &batch.positions);
  return surrogate_from_taps(trace.blocks, Tensor());
}

Tensor SideModel::explain_raw(const Classifier& backbone, const Tensor& x) const {
  check_backbone(backbone);
  auto trace = backbone.run(x, Tensor());
  return explainer_from_taps(trace.blocks);
}

void SideModel::visit(const ParamVisitor& fn) {
  branch_.visit("side", fn);
  if (side_.role == SideRole::kSurrogate) {
    surrogate_head_.visit("side.surrogate_head", fn);
  } else {
    explanation_head_.visit("side.explanation_head", fn);
  }
}

ParamList SideModel::parameters() const {
  ParamList out;
  const_cast<SideModel&>(*this).visit(
      [&](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

SideModel SideModel::clone() const {
  SideModel copy = *this;
  copy.visit(deep_copy_visitor());
  return copy;
}

std::size_t count_side_params(const ModelConfig& model, const SideConfig& side) {
  model.validate();
  side.validate(model);
  const std::size_t w = side.width(model);
  const std::size_t mlp = static_cast<std::size_t>(model.mlp_ratio * double(w) + 0.5);
  std::size_t n = model.depth * (Linear::param_count(model.hidden, w) +
                                 MsaBlock::param_count(w, mlp));
  if (side.role == SideRole::kSurrogate) {
    n += LayerNorm::param_count(w) + Linear::param_count(w, model.num_classes);
  } else {
    n += ExplanationHead::param_count(w, side.head_depth, model.num_tokens,
                                      model.num_classes, side.readout);
  }
  return n;
}

}  // namespace selfex
