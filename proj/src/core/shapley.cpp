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

#include "selfex/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "selfex/errors.hpp"

namespace selfex {

Attribution Attribution::zeros(std::size_t players, std::size_t classes) {
  Attribution a;
  a.players = players;
  a.classes = classes;
  a.values.assign(players * classes, 0.0);
  return a;
}

std::vector<double> Attribution::for_class(std::size_t c) const {
  std::vector<double> out(players);
  for (std::size_t i = 0; i < players; ++i) out[i] = at(i, c);
  return out;
}

double Attribution::total(std::size_t c) const {
  double s = 0.0;
  for (std::size_t i = 0; i < players; ++i) s += at(i, c);
  return s;
}

Game::Game(std::size_t players, std::size_t outputs, BatchFn fn)
    : players_(players), outputs_(outputs), fn_(std::move(fn)) {
  if (players == 0 || outputs == 0) {
    throw ContractError("game needs at least one player and one output");
  }
}

Game::Game(Game&& other) noexcept
    : players_(other.players_),
      outputs_(other.outputs_),
      fn_(std::move(other.fn_)),
      memo_(std::move(other.memo_)) {}

Game Game::scalar(std::size_t players, std::function<double(const Mask&)> fn) {
  return Game(players, 1, [fn = std::move(fn)](const std::vector<Mask>& masks) {
    std::vector<std::vector<double>> out;
    out.reserve(masks.size());
    for (const Mask& m : masks) out.push_back({fn(m)});
    return out;
  });
}

std::string Game::key(const Mask& mask) {
  const auto& bits = mask.bits();
  return std::string(bits.begin(), bits.end());
}

void Game::prefetch(const std::vector<Mask>& masks) {
  std::vector<Mask> missing;
  {
    std::lock_guard<std::mutex> lock(mu_);
    std::unordered_map<std::string, bool> queued;
    for (const Mask& m : masks) {
      if (m.size() != players_) {
        throw ContractError("game over " + std::to_string(players_) +
                            " players got a mask of length " +
                            std::to_string(m.size()));
      }
      std::string k = key(m);
      if (memo_.count(k) || queued.count(k)) continue;
      queued.emplace(std::move(k), true);
      missing.push_back(m);
    }
  }
  if (missing.empty()) return;
  auto values = fn_(missing);
  if (values.size() != missing.size()) {
    throw ContractError("game value function returned the wrong batch size");
  }
  std::lock_guard<std::mutex> lock(mu_);
  for (std::size_t i = 0; i < missing.size(); ++i) {
    if (values[i].size() != outputs_) {
      throw ContractError("game value function returned the wrong output count");
    }
    memo_.try_emplace(key(missing[i]), std::move(values[i]));
  }
}

std::vector<double> Game::value(const Mask& mask) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = memo_.find(key(mask));
    if (it != memo_.end()) return it->second;
  }
  prefetch({mask});
  std::lock_guard<std::mutex> lock(mu_);
  return memo_.at(key(mask));
}

std::size_t Game::cached() const {
  std::lock_guard<std::mutex> lock(mu_);
  return memo_.size();
}

std::vector<Mask> enumerate_coalitions(std::size_t d) {
  if (d > kMaxExactPlayers) {
    throw BudgetError("coalition enumeration limited to d <= " +
                      std::to_string(kMaxExactPlayers) + ", got " +
                      std::to_string(d));
  }
  std::vector<Mask> out;
  out.reserve(std::size_t{1} << d);
  for (std::size_t k = 0; k <= d; ++k) {
    // Lexicographic over the indicator read from feature 0: prev_permutation
    // of a sorted-descending bit pattern walks combinations in that order.
    std::vector<std::uint8_t> bits(d, 0);
    std::fill(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(k), 1);
    do {
      out.emplace_back(bits);
    } while (std::prev_permutation(bits.begin(), bits.end()));
  }
  return out;
}

double harmonic(std::size_t n) {
  if (n == 0) throw ContractError("harmonic number needs n >= 1");
  double s = 0.0;
  for (std::size_t k = 1; k <= n; ++k) s += 1.0 / double(k);
  return s;
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return std::round(r);
}

Attribution exact_shapley(Game& game) {
  const std::size_t d = game.players();
  const std::size_t outputs = game.outputs();
  auto coalitions = enumerate_coalitions(d);
  game.prefetch(coalitions);

  // Dense table indexed by the little-endian bitmask.
  std::vector<std::vector<double>> table(std::size_t{1} << d);
  for (const Mask& m : coalitions) table[m.to_bits()] = game.value(m);

  // weight(k) = k! (d - k - 1)! / d! = 1 / (d * C(d - 1, k))
  std::vector<double> weight(d);
  for (std::size_t k = 0; k < d; ++k) weight[k] = 1.0 / (double(d) * binomial(d - 1, k));

  Attribution phi = Attribution::zeros(d, outputs);
  for (std::uint64_t s = 0; s < table.size(); ++s) {
    const std::size_t k = static_cast<std::size_t>(std::popcount(s));
    if (k == d) continue;
    const auto& base = table[s];
    for (std::size_t i = 0; i < d; ++i) {
      const std::uint64_t bit = std::uint64_t{1} << i;
      if (s & bit) continue;
      const auto& with = table[s | bit];
      for (std::size_t c = 0; c < outputs; ++c) {
        phi.at(i, c) += weight[k] * (with[c] - base[c]);
      }
    }
  }
  phi.normalized = true;  // efficiency holds by construction
  return phi;
}

ShapleyKernelDist shapley_kernel(std::size_t d) {
  if (d < 2) throw ContractError("Shapley kernel needs d >= 2");
  ShapleyKernelDist dist;
  dist.d = d;
  dist.subset_prob.assign(d + 1, 0.0);
  dist.cardinality_prob.assign(d + 1, 0.0);
  // Unnormalised per-cardinality mass C(d,k) * (d-1) / (C(d,k) k (d-k)).
  double q = 0.0;
  for (std::size_t k = 1; k < d; ++k) {
    q += double(d - 1) / (double(k) * double(d - k));
  }
  dist.normalizer = q;
  for (std::size_t k = 1; k < d; ++k) {
    const double mass = double(d - 1) / (double(k) * double(d - k)) / q;
    dist.cardinality_prob[k] = mass;
    dist.subset_prob[k] = mass / binomial(d, k);
  }
  return dist;
}

Mask random_subset(std::size_t d, std::size_t k, Rng& rng) {
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates prefix: the first k slots end up a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(d - i));
    std::swap(order[i], order[j]);
  }
  Mask m = Mask::empty(d);
  for (std::size_t i = 0; i < k; ++i) m.set(order[i], true);
  return m;
}

namespace {

std::size_t draw_cardinality(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    acc += probs[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

}  // namespace

std::vector<Mask> sample_subsets(const ShapleyKernelDist& dist, std::size_t n,
                                 bool paired, Rng& rng) {
  if (paired && n % 2 != 0) {
    throw ContractError("paired sampling needs an even sample count, got " +
                        std::to_string(n));
  }
  std::vector<Mask> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::size_t k = draw_cardinality(dist.cardinality_prob, rng);
    Mask m = random_subset(dist.d, k, rng);
    out.push_back(m);
    if (paired) out.push_back(m.complement());
  }
  return out;
}

std::vector<Mask> sample_equicardinality(std::size_t d, std::size_t n, Rng& rng) {
  std::vector<Mask> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(rng.below(d + 1));
    out.push_back(random_subset(d, k, rng));
  }
  return out;
}

Attribution kernelshap(Game& game, const KernelShapOptions& options, Rng& rng) {
  const std::size_t d = game.players();
  if (d < 2) throw ContractError("KernelSHAP needs d >= 2");
  const auto dist = shapley_kernel(d);
  auto samples = sample_subsets(dist, options.samples, options.paired, rng);
  std::vector<Mask> all = samples;
  all.push_back(Mask::full(d));
  all.push_back(Mask::empty(d));
  game.prefetch(all);
  const auto v1 = game.value(Mask::full(d));
  const auto v0 = game.value(Mask::empty(d));

  // Samples come from q(s), so the regression weights are uniform. With
  // phi_d = delta - sum_{i<d} phi_i the residual becomes
  //   v(s) - v0 - s_d delta - sum_{i<d} (s_i - s_d) phi_i.
  const std::size_t n = samples.size();
  Eigen::MatrixXd design(n, d - 1);
  for (std::size_t j = 0; j < n; ++j) {
    const double last = samples[j][d - 1] ? 1.0 : 0.0;
    for (std::size_t i = 0; i + 1 < d; ++i) {
      design(j, i) = (samples[j][i] ? 1.0 : 0.0) - last;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(d - 1)) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design);
    const auto& sv = svd.singularValues();
    std::ostringstream msg;
    msg << "KernelSHAP regression is rank deficient: rank " << qr.rank()
        << " of " << (d - 1) << " over " << n << " samples; singular values ["
        << sv.maxCoeff() << " .. " << sv.minCoeff() << "]";
    throw SingularSystemError(msg.str());
  }

  Attribution phi = Attribution::zeros(d, game.outputs());
  Eigen::VectorXd target(n);
  for (std::size_t c = 0; c < game.outputs(); ++c) {
    const double delta = v1[c] - v0[c];
    for (std::size_t j = 0; j < n; ++j) {
      const double last = samples[j][d - 1] ? 1.0 : 0.0;
      target(j) = game.value(samples[j], c) - v0[c] - last * delta;
    }
    Eigen::VectorXd head = qr.solve(target);
    double rest = delta;
    for (std::size_t i = 0; i + 1 < d; ++i) {
      phi.at(i, c) = head(static_cast<Eigen::Index>(i));
      rest -= head(static_cast<Eigen::Index>(i));
    }
    phi.at(d - 1, c) = rest;
  }
  phi.normalized = true;
  return phi;
}

Attribution efficiency_normalize(const Attribution& raw,
                                 const std::vector<double>& v1,
                                 const std::vector<double>& v0) {
  if (v1.size() != raw.classes || v0.size() != raw.classes) {
    throw ContractError("efficiency_normalize: need one v1/v0 per class");
  }
  Attribution out = raw;
  for (std::size_t c = 0; c < raw.classes; ++c) {
    const double shift = (v1[c] - v0[c] - raw.total(c)) / double(raw.players);
    for (std::size_t i = 0; i < raw.players; ++i) out.at(i, c) += shift;
  }
  out.normalized = true;
  return out;
}

SecondMomentMatrix second_moment_matrix(std::size_t d) {
  if (d < 2 || d > 16) {
    throw BudgetError("second moment matrix is enumerated for 2 <= d <= 16");
  }
  const auto dist = shapley_kernel(d);
  SecondMomentMatrix a;
  a.d = d;
  a.matrix.assign(d * d, 0.0);
  const std::uint64_t full = (std::uint64_t{1} << d) - 1;
  for (std::uint64_t s = 1; s < full; ++s) {
    const double p = dist.subset_prob[static_cast<std::size_t>(std::popcount(s))];
    for (std::size_t i = 0; i < d; ++i) {
      if (!(s >> i & 1U)) continue;
      for (std::size_t j = 0; j < d; ++j) {
        if (s >> j & 1U) a.matrix[i * d + j] += p;
      }
    }
  }
  // b = sum_k p_k C(d-1, k-1), c = sum_k p_k C(d-2, k-2)
  for (std::size_t k = 1; k < d; ++k) {
    a.diagonal += dist.subset_prob[k] * binomial(d - 1, k - 1);
    if (k >= 2) a.off_diagonal += dist.subset_prob[k] * binomial(d - 2, k - 2);
  }
  a.lambda_min_closed = a.diagonal - a.off_diagonal;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      m(a.matrix.data(), static_cast<Eigen::Index>(d),
        static_cast<Eigen::Index>(d));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  a.lambda_min_eigen = eig.eigenvalues().minCoeff();
  return a;
}

double exact_regression_loss(Game& game, const Attribution& phi,
                             std::size_t output) {
  const std::size_t d = game.players();
  const auto dist = shapley_kernel(d);
  auto coalitions = enumerate_coalitions(d);
  game.prefetch(coalitions);
  const double v0 = game.value(Mask::empty(d), output);
  double loss = 0.0;
  for (const Mask& s : coalitions) {
    const std::size_t k = s.count();
    if (k == 0 || k == d) continue;
    double pred = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (s[i]) pred += phi.at(i, output);
    }
    const double r = game.value(s, output) - v0 - pred;
    loss += dist.subset_prob[k] * r * r;
  }
  return loss;
}

}  // namespace selfex
