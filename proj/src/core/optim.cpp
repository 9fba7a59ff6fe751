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

#include "selfex/optim.hpp"

#include <cmath>

#include "selfex/errors.hpp"

namespace selfex {

void OptimizerConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("optimizer step_size must be positive, got " +
                      std::to_string(step_size));
  }
  if (scheme == OptimizerScheme::kAdam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

std::string to_string(OptimizerScheme scheme) {
  return scheme == OptimizerScheme::kPlainGd ? "plain-gd" : "adam-style";
}

OptimizerScheme parse_optimizer_scheme(const std::string& text) {
  if (text == "plain-gd" || text == "gd") return OptimizerScheme::kPlainGd;
  if (text == "adam-style" || text == "adam") return OptimizerScheme::kAdam;
  throw ConfigError("unknown optimizer scheme '" + text + "'");
}

Optimizer::Optimizer(ParamList params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf()) {
      throw ContractError("optimizer: '" + p.name + "' is not a leaf tensor");
    }
    if (config_.scheme == OptimizerScheme::kAdam) {
      m_.emplace_back(p.tensor.numel(), 0.0f);
      v_.emplace_back(p.tensor.numel(), 0.0f);
    }
  }
}

void Optimizer::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) {
      throw ContractError("optimizer: trainable parameter '" + p.name +
                          "' has no gradient");
    }
  }
  ++t_;
  const double alpha = config_.step_size;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& tensor = params_[k].tensor;
    std::span<float> w = tensor.mutable_data();
    std::span<const float> g = tensor.grad();
    if (config_.scheme == OptimizerScheme::kPlainGd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<float>(double(w[i]) - alpha * double(g[i]));
      }
    } else {
      std::vector<float>& m = m_[k];
      std::vector<float>& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        const double mi = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
        const double vi = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        double wi = w[i];
        if (config_.weight_decay > 0.0) wi -= alpha * config_.weight_decay * wi;
        wi -= alpha * (mi / bc1) / (std::sqrt(vi / bc2) + config_.epsilon);
        w[i] = static_cast<float>(wi);
      }
    }
    for (float x : w) {
      if (!std::isfinite(x)) {
        throw DivergenceError("optimizer step " + std::to_string(t_) +
                              ": parameter '" + params_[k].name +
                              "' became non-finite");
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace selfex
