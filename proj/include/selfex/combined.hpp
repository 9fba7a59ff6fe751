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

// Self-interpretable model: one backbone pass feeds the original prediction
// head, the surrogate branch (for v1) and the explainer branch. The empty
// coalition value v0 needs a second, class-token-only pass.

#pragma once

#include <cstddef>
#include <vector>

#include "selfex/shapley.hpp"
#include "selfex/side.hpp"

namespace selfex {

struct CombinedOutput {
  Tensor logits;            // [B, C], the classifier's own output
  Tensor full_values;       // [B, C], surrogate probabilities on x
  Tensor empty_values;      // [B, C], surrogate probabilities on x_0
  Tensor raw_attribution;   // [B, d, C]
  std::vector<Attribution> attribution;  // normalised, one per input

  // |1'phi - (v1 - v0)| for input b and class c.
  double efficiency_residual(std::size_t b, std::size_t c) const;
};

class CombinedModel {
 public:
  static CombinedModel assemble(const Classifier& backbone, const SideModel& surrogate,
                                const SideModel& explainer);

  CombinedOutput forward(const Tensor& x) const;

  const Classifier& backbone() const { return backbone_; }
  const SideModel& surrogate() const { return surrogate_; }
  const SideModel& explainer() const { return explainer_; }

 private:
  Classifier backbone_;
  SideModel surrogate_;
  SideModel explainer_;
};

// Efficiency-normalised attributions from raw [B, d, C] output and the
// per-input v1, v0 rows, computed in double precision.
std::vector<Attribution> normalize_batch(const Tensor& raw, const Tensor& v1,
                                         const Tensor& v0);

}  // namespace selfex
