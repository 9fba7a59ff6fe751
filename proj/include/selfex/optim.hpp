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
#include <string>
#include <vector>

#include "selfex/tensor.hpp"

namespace selfex {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

enum class OptimizerScheme { kPlainGd, kAdam };

struct OptimizerConfig {
  double step_size = 1e-4;
  std::size_t steps = 0;  // budget used by fixed-step loops; 0 = epoch driven
  OptimizerScheme scheme = OptimizerScheme::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled, AdamW-style

  void validate() const;
};

std::string to_string(OptimizerScheme scheme);
OptimizerScheme parse_optimizer_scheme(const std::string& text);

// First-order optimiser over an explicit trainable set. Parameters not in the
// set are never touched, whatever their requires_grad flag says.
class Optimizer {
 public:
  Optimizer(ParamList params, OptimizerConfig config);

  // Applies one update from the current gradients. Throws ContractError when a
  // trainable parameter carries no gradient and DivergenceError when the
  // update produces a non-finite value.
  void step();
  void zero_grad();

  std::size_t step_count() const { return t_; }
  const ParamList& params() const { return params_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  ParamList params_;
  OptimizerConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::size_t t_ = 0;
};

}  // namespace selfex
