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

// Cooperative games over d players and the Shapley machinery built on them:
// exact enumeration, the Shapley kernel subset distribution, KernelSHAP, the
// additive efficiency correction and the kernel's second-moment matrix.
// All arithmetic here is double precision.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfex/mask.hpp"
#include "selfex/rng.hpp"

namespace selfex {

// Per-player, per-output attribution values, feature-major.
struct Attribution {
  std::size_t players = 0;
  std::size_t classes = 1;
  std::vector<double> values;  // [players][classes]
  bool normalized = false;

  static Attribution zeros(std::size_t players, std::size_t classes = 1);
  double& at(std::size_t i, std::size_t c = 0) { return values[i * classes + c]; }
  double at(std::size_t i, std::size_t c = 0) const {
    return values[i * classes + c];
  }
  std::vector<double> for_class(std::size_t c) const;
  double total(std::size_t c = 0) const;
};

// A game with `outputs` real values per coalition (one per class). Values
// are memoised by coalition; evaluation requests are batched so model-backed
// games can run many coalitions per forward pass.
class Game {
 public:
  using BatchFn =
      std::function<std::vector<std::vector<double>>(const std::vector<Mask>&)>;

  Game(std::size_t players, std::size_t outputs, BatchFn fn);
  static Game scalar(std::size_t players, std::function<double(const Mask&)> fn);
  // Moving is not thread-safe; the source must not be in use.
  Game(Game&& other) noexcept;
  Game& operator=(Game&&) = delete;
  Game(const Game&) = delete;

  std::size_t players() const { return players_; }
  std::size_t outputs() const { return outputs_; }

  // Evaluates every coalition not yet cached, in one batched call.
  void prefetch(const std::vector<Mask>& masks);
  std::vector<double> value(const Mask& mask);
  double value(const Mask& mask, std::size_t output) {
    return value(mask)[output];
  }
  std::size_t cached() const;

 private:
  static std::string key(const Mask& mask);

  std::size_t players_;
  std::size_t outputs_;
  BatchFn fn_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<double>> memo_;
};

inline constexpr std::size_t kMaxExactPlayers = 20;

// All 2^d coalitions ordered by (cardinality, lexicographic over features).
std::vector<Mask> enumerate_coalitions(std::size_t d);

// Exact Shapley values of every output by full enumeration.
Attribution exact_shapley(Game& game);

double harmonic(std::size_t n);
double binomial(std::size_t n, std::size_t k);

// q(s) restricted to proper, non-empty coalitions.
struct ShapleyKernelDist {
  std::size_t d = 0;
  double normalizer = 0.0;               // Q
  std::vector<double> subset_prob;       // p_k for one subset of size k
  std::vector<double> cardinality_prob;  // C(d,k) p_k

  double probability(const Mask& s) const { return subset_prob[s.count()]; }
};
ShapleyKernelDist shapley_kernel(std::size_t d);

// A uniformly random subset of exactly k of the d features.
Mask random_subset(std::size_t d, std::size_t k, Rng& rng);

// n draws from q(s). When paired, each draw is followed by its complement.
std::vector<Mask> sample_subsets(const ShapleyKernelDist& dist, std::size_t n,
                                 bool paired, Rng& rng);

// Training masks for the surrogate: cardinality uniform on {0, ..., d}, then
// a uniform subset of that size.
std::vector<Mask> sample_equicardinality(std::size_t d, std::size_t n, Rng& rng);

struct KernelShapOptions {
  std::size_t samples = 2048;
  bool paired = true;
};

// Constrained weighted least squares over q(s)-sampled coalitions; the
// efficiency constraint is enforced exactly by eliminating the last player.
Attribution kernelshap(Game& game, const KernelShapOptions& options, Rng& rng);

// Shifts every player by (v1 - v0 - 1'phi) / d, per output.
Attribution efficiency_normalize(const Attribution& raw,
                                 const std::vector<double>& v1,
                                 const std::vector<double>& v0);

struct SecondMomentMatrix {
  std::size_t d = 0;
  std::vector<double> matrix;  // d x d, E_q[s s']
  double diagonal = 0.0;       // b = P(s_i = 1)
  double off_diagonal = 0.0;   // c = P(s_i = s_j = 1)
  double lambda_min_closed = 0.0;
  double lambda_min_eigen = 0.0;
};
// Exact summation over all proper coalitions; d <= 16.
SecondMomentMatrix second_moment_matrix(std::size_t d);

// E_q[(v(s) - v0 - s'phi)^2] for one output, summed exactly over all proper
// coalitions. The game must cover every coalition (d <= kMaxExactPlayers).
double exact_regression_loss(Game& game, const Attribution& phi,
                             std::size_t output);

}  // namespace selfex
