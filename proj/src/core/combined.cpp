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

#include "selfex/combined.hpp"

#include <cmath>

#include "selfex/errors.hpp"

namespace selfex {

double CombinedOutput::efficiency_residual(std::size_t b, std::size_t c) const {
  const std::size_t classes = full_values.dim(1);
  const double gap = double(full_values.data()[b * classes + c]) -
                     double(empty_values.data()[b * classes + c]);
  return std::abs(attribution[b].total(c) - gap);
}

std::vector<Attribution> normalize_batch(const Tensor& raw, const Tensor& v1,
                                         const Tensor& v0) {
  const std::size_t batch = raw.dim(0);
  const std::size_t d = raw.dim(1);
  const std::size_t classes = raw.dim(2);
  auto r = raw.data();
  auto full = v1.data();
  auto empty = v0.data();
  std::vector<Attribution> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Attribution a = Attribution::zeros(d, classes);
    for (std::size_t i = 0; i < d * classes; ++i) a.values[i] = r[b * d * classes + i];
    std::vector<double> hi(classes), lo(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      hi[c] = full[b * classes + c];
      lo[c] = empty[b * classes + c];
    }
    out.push_back(efficiency_normalize(a, hi, lo));
  }
  return out;
}

CombinedModel CombinedModel::assemble(const Classifier& backbone, const SideModel& surrogate,
                                      const SideModel& explainer) {
  if (surrogate.role() != SideRole::kSurrogate) {
    throw RoleError("combined model: surrogate slot holds a " + to_string(surrogate.role()));
  }
  if (explainer.role() != SideRole::kExplainer) {
    throw RoleError("combined model: explainer slot holds a " + to_string(explainer.role()));
  }
  surrogate.check_backbone(backbone);
  explainer.check_backbone(backbone);
  CombinedModel m;
  m.backbone_ = backbone.clone();
  m.surrogate_ = surrogate.clone();
  m.explainer_ = explainer.clone();
  m.backbone_.set_trainable(false);
  return m;
}

CombinedOutput CombinedModel::forward(const Tensor& x) const {
  NoGradGuard no_grad;
  CombinedOutput out;
  auto trace = backbone_.run(x, Tensor());
  out.logits = trace.logits;
  out.full_values = softmax(surrogate_.surrogate_from_taps(trace.blocks, Tensor()));
  out.raw_attribution = explainer_.explainer_from_taps(trace.blocks);
  const std::size_t batch = x.dim(0);
  std::vector<std::size_t> samples(batch);
  for (std::size_t b = 0; b < batch; ++b) samples[b] = b;
  out.empty_values = softmax(surrogate_.surrogate_logits(
      backbone_,
      compact_tokens(x, std::vector<Mask>(batch, Mask::empty(x.dim(1))), samples)));
  out.attribution = normalize_batch(out.raw_attribution, out.full_values, out.empty_values);
  return out;
}

}  // namespace selfex
