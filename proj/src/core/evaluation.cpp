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

#include "selfex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <numeric>

#include <Eigen/Dense>

#include "selfex/combined.hpp"
#include "selfex/errors.hpp"

namespace selfex {

Game surrogate_game(const Classifier& backbone, const SideModel& surrogate,
                    const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != 1) {
    throw ContractError("surrogate_game takes a single input of shape [1, d, m]");
  }
  struct Models {
    Classifier backbone;
    SideModel surrogate;
    Tensor x;
  };
  auto models = std::make_shared<Models>(Models{backbone, surrogate, x.detach()});
  const std::size_t classes = surrogate.model_config().num_classes;
  return Game(x.dim(1), classes, [models, classes](const std::vector<Mask>& masks) {
    Tensor p = surrogate_probabilities(models->backbone, models->surrogate, models->x,
                                       masks, std::vector<std::size_t>(masks.size(), 0));
    auto pd = p.data();
    std::vector<std::vector<double>> out(masks.size(), std::vector<double>(classes));
    for (std::size_t i = 0; i < masks.size(); ++i) {
      for (std::size_t c = 0; c < classes; ++c) out[i][c] = pd[i * classes + c];
    }
    return out;
  });
}

InsertionDeletionCurve insertion_deletion(const std::vector<double>& attribution,
                                          Game& game, std::size_t target,
                                          CurveMode mode) {
  const std::size_t d = game.players();
  if (attribution.size() != d) {
    throw ContractError("insertion_deletion: attribution length " +
                        std::to_string(attribution.size()) + " vs " + std::to_string(d) +
                        " players");
  }
  if (target >= game.outputs()) throw ContractError("insertion_deletion: target out of range");
  std::vector<std::size_t> rank(d);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    return attribution[a] > attribution[b];
  });

  std::vector<std::size_t> counts;
  if (d <= 64) {
    for (std::size_t k = 0; k <= d; ++k) counts.push_back(k);
  } else {
    for (std::size_t i = 0; i <= 64; ++i) {
      counts.push_back(static_cast<std::size_t>(std::llround(double(i) * double(d) / 64.0)));
    }
  }
  std::vector<Mask> masks;
  for (std::size_t k : counts) {
    // Insertion keeps the top-k features; deletion removes them.
    Mask m = mode == CurveMode::kInsertion ? Mask::empty(d) : Mask::full(d);
    for (std::size_t i = 0; i < k; ++i) m.set(rank[i], mode == CurveMode::kInsertion);
    masks.push_back(std::move(m));
  }
  game.prefetch(masks);

  InsertionDeletionCurve curve;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    curve.fractions.push_back(double(counts[i]) / double(d));
    curve.probabilities.push_back(game.value(masks[i], target));
  }
  for (std::size_t i = 1; i < masks.size(); ++i) {
    curve.auc += 0.5 * (curve.probabilities[i] + curve.probabilities[i - 1]) *
                 (curve.fractions[i] - curve.fractions[i - 1]);
  }
  return curve;
}

double cka(const std::vector<double>& x, std::size_t p, const std::vector<double>& y,
           std::size_t q, std::size_t n) {
  if (n < 2) throw ContractError("cka needs at least two rows");
  if (x.size() != n * p || y.size() != n * q) {
    throw ContractError("cka: matrix sizes do not match n x p and n x q");
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXd a = Eigen::Map<const RowMat>(x.data(), Eigen::Index(n), Eigen::Index(p));
  Eigen::MatrixXd b = Eigen::Map<const RowMat>(y.data(), Eigen::Index(n), Eigen::Index(q));
  a.rowwise() -= a.colwise().mean();
  b.rowwise() -= b.colwise().mean();
  const double xx = (a.transpose() * a).norm();
  const double yy = (b.transpose() * b).norm();
  if (xx == 0.0 || yy == 0.0) {
    throw UndefinedError("cka is undefined for a zero-variance representation");
  }
  return (b.transpose() * a).squaredNorm() / (xx * yy);
}

double gradient_conflict(const std::vector<double>& g1, const std::vector<double>& g2) {
  if (g1.size() != g2.size()) {
    throw DimensionError("gradient_conflict: gradient lengths differ (" +
                        std::to_string(g1.size()) + " vs " + std::to_string(g2.size()) + ")");
  }
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    dot += g1[i] * g2[i];
    n1 += g1[i] * g1[i];
    n2 += g2[i] * g2[i];
  }
  if (n1 == 0.0 || n2 == 0.0) {
    throw UndefinedError("gradient_conflict is undefined for a zero gradient");
  }
  return std::clamp(dot / std::sqrt(n1 * n2), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// FLOPs

FlopCount& FlopCount::operator+=(const FlopCount& o) {
  embedding += o.embedding;
  attention_linear += o.attention_linear;
  attention_scores += o.attention_scores;
  mlp += o.mlp;
  norms += o.norms;
  downsample += o.downsample;
  head += o.head;
  return *this;
}

namespace {

// Layer norm: mean, variance, normalise, scale, shift.
constexpr double kNormFlopsPerElement = 5.0;

FlopCount block_flops(double tokens, double width, double mlp) {
  FlopCount f;
  f.attention_linear = 2.0 * tokens * width * (3.0 * width) + 2.0 * tokens * width * width;
  f.attention_scores = 2.0 * (2.0 * tokens * tokens * width);
  f.mlp = 2.0 * (2.0 * tokens * width * mlp);
  f.norms = 2.0 * kNormFlopsPerElement * tokens * width;
  return f;
}

double side_mlp(const ModelConfig& model, std::size_t width) {
  return std::round(model.mlp_ratio * double(width));
}

}  // namespace

FlopCount count_flops_classifier(const ModelConfig& model) {
  model.validate();
  const double t = double(model.sequence_length());
  const double h = double(model.hidden);
  FlopCount f;
  if (model.embedding) f.embedding = 2.0 * double(model.num_tokens * model.token_input_dim) * h;
  for (std::size_t i = 0; i < model.depth; ++i) f += block_flops(t, h, double(model.mlp_hidden()));
  f.norms += kNormFlopsPerElement * h;  // final norm on the class token
  f.head = 2.0 * h * double(model.num_classes);
  return f;
}

FlopCount count_flops_side(const ModelConfig& model, const SideConfig& side) {
  side.validate(model);
  const double t = double(model.sequence_length());
  const double d = double(model.num_tokens);
  const double c = double(model.num_classes);
  const std::size_t width = side.width(model);
  const double w = double(width);
  FlopCount f;
  for (std::size_t i = 0; i < model.depth; ++i) {
    f.downsample += 2.0 * t * double(model.hidden) * w;
    f += block_flops(t, w, side_mlp(model, width));
  }
  if (side.role == SideRole::kSurrogate) {
    f.norms += kNormFlopsPerElement * w;
    f.head = 2.0 * w * c;
  } else if (side.readout == ExplainerReadout::kClassToken) {
    f.norms += kNormFlopsPerElement * w;
    f.head = double(side.head_depth) * 2.0 * w * w + 2.0 * w * d * c;
  } else {
    f.norms += kNormFlopsPerElement * w * d;
    f.head = d * (double(side.head_depth) * 2.0 * w * w + 2.0 * w * c);
  }
  return f;
}

FlopCount count_flops_separate_explainer(const ModelConfig& model) {
  ModelConfig deeper = model;
  deeper.depth = model.depth + 3;
  FlopCount f = count_flops_classifier(deeper);
  const double h = double(model.hidden);
  const double d = double(model.num_tokens);
  f.norms += kNormFlopsPerElement * h * (d - 1.0);
  f.head = 2.0 * d * h * double(model.num_classes);
  return f;
}

FlopsComparison compare_flops(const ModelConfig& model, const SideConfig& explainer) {
  FlopsComparison c;
  c.classifier = count_flops_classifier(model).total();
  c.separate = c.classifier + count_flops_separate_explainer(model).total();
  c.combined = c.classifier + count_flops_side(model, explainer).total();
  c.reduction = 1.0 - c.combined / c.separate;
  return c;
}

EfficiencyReport efficiency_report(const ModelConfig& model, const SideConfig* side) {
  const double t = double(model.sequence_length());
  auto block_activations = [t](double width, double heads, double mlp) {
    return t * (10.0 * width + 2.0 * mlp) + 2.0 * heads * t * t;
  };
  EfficiencyReport r;
  const std::size_t backbone = count_params(model);
  double activations = 0.0;
  if (side == nullptr) {
    r.total_params = backbone;
    r.trainable_params = backbone;
    r.forward_flops = count_flops_classifier(model).total();
    activations += t * double(model.hidden);
    for (std::size_t i = 0; i < model.depth; ++i) {
      activations += block_activations(double(model.hidden), double(model.heads),
                                       double(model.mlp_hidden()));
    }
  } else {
    const std::size_t width = side->width(model);
    r.trainable_params = count_side_params(model, *side);
    r.total_params = backbone + r.trainable_params;
    r.forward_flops =
        count_flops_classifier(model).total() + count_flops_side(model, *side).total();
    // The frozen backbone keeps only the taps that feed the downsamplers.
    for (std::size_t i = 0; i < model.depth; ++i) {
      activations += t * double(model.hidden);
      activations += block_activations(double(width), double(side->heads(model)),
                                       side_mlp(model, width));
    }
  }
  r.memory_bytes = 4.0 * (double(r.total_params) + 3.0 * double(r.trainable_params) + activations);
  return r;
}

// ---------------------------------------------------------------------------
// Explainer bound

BoundVerdict explainer_bound(std::vector<ExplainerBoundInput>& inputs,
                             std::size_t mask_samples, std::uint64_t seed) {
  BoundVerdict v;
  v.samples = inputs.size();
  if (inputs.empty()) {
    v.skipped = true;
    v.reason = "no held-out samples";
    return v;
  }
  const std::size_t d = inputs.front().game->players();
  if (d > kMaxBoundPlayers) {
    v.skipped = true;
    v.reason = "exact oracle limited to d <= " + std::to_string(kMaxBoundPlayers);
    return v;
  }
  const auto dist = shapley_kernel(d);
  const double h = harmonic(d - 1);
  double lhs = 0.0, loss = 0.0, opt = 0.0, opt_sq = 0.0, exact_loss = 0.0, exact_opt = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& in = inputs[i];
    Game& game = *in.game;
    const std::size_t classes = game.outputs();
    if (in.explained.players != d || in.explained.classes != classes ||
        in.class_weights.size() != classes) {
      throw ContractError("explainer_bound: attribution or weights do not match the game");
    }
    const Attribution oracle = exact_shapley(game);
    for (std::size_t c = 0; c < classes; ++c) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = in.explained.at(j, c) - oracle.at(j, c);
        sq += diff * diff;
      }
      lhs += in.class_weights[c] * std::sqrt(sq);
      exact_loss += in.class_weights[c] * exact_regression_loss(game, in.explained, c);
      exact_opt += in.class_weights[c] * exact_regression_loss(game, oracle, c);
    }
    Rng rng = Rng(seed).fork(i);
    const auto v0 = game.value(Mask::empty(d));
    for (const Mask& s : sample_subsets(dist, mask_samples, false, rng)) {
      const auto value = game.value(s);
      double t_model = 0.0, t_oracle = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        double pm = 0.0, po = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (!s[j]) continue;
          pm += in.explained.at(j, c);
          po += oracle.at(j, c);
        }
        const double rm = value[c] - v0[c] - pm;
        const double ro = value[c] - v0[c] - po;
        t_model += in.class_weights[c] * rm * rm;
        t_oracle += in.class_weights[c] * ro * ro;
      }
      loss += t_model;
      opt += t_oracle;
      opt_sq += t_oracle * t_oracle;
      ++terms;
    }
  }
  const double n = double(inputs.size());
  const double m = double(terms);
  v.lhs = lhs / n;
  v.loss = loss / m;
  v.optimal_loss = opt / m;
  const double var = std::max(0.0, opt_sq / m - v.optimal_loss * v.optimal_loss);
  v.optimal_ci = 1.96 * std::sqrt(var / m);
  v.rhs = std::sqrt(2.0 * h * std::max(0.0, v.loss - v.optimal_loss + v.optimal_ci));
  v.exact_loss = exact_loss / n;
  v.exact_optimal_loss = exact_opt / n;
  v.exact_rhs = std::sqrt(2.0 * h * std::max(0.0, v.exact_loss - v.exact_optimal_loss));
  v.pass = v.lhs <= v.rhs;
  return v;
}

// ---------------------------------------------------------------------------
// Convex decay

BoundVerdict explainer_bound_on_split(const Classifier& backbone, const SideModel& surrogate,
                                      const Split& split, const ExplainFn& explain,
                                      std::size_t samples, std::size_t mask_samples,
                                      std::uint64_t seed) {
  if (split.num_tokens > kMaxBoundPlayers) {
    BoundVerdict v;
    v.skipped = true;
    v.reason = "exact oracle limited to d <= " + std::to_string(kMaxBoundPlayers);
    return v;
  }
  std::deque<Game> games;  // Game is not movable; inputs point into this
  std::vector<ExplainerBoundInput> inputs;
  for (std::size_t row : evaluation_rows(split.size(), samples, seed)) {
    const Tensor x = split.batch({row});
    Game& game = games.emplace_back(surrogate_game(backbone, surrogate, x));
    Attribution a = explain(x, game);
    inputs.push_back({std::move(a), game.value(Mask::full(split.num_tokens)), &game});
  }
  return explainer_bound(inputs, mask_samples, seed);
}

DecayTrace convex_decay_experiment(std::size_t features, std::size_t classes,
                                   std::size_t inputs, std::size_t masks_per_input,
                                   std::size_t steps, std::uint64_t seed, double slack) {
  if (features == 0 || classes < 2 || inputs == 0 || masks_per_input == 0) {
    throw ConfigError("convex decay experiment needs features, >= 2 classes and data");
  }
  Rng rng(seed);
  const auto d = Eigen::Index(features);
  const auto k = Eigen::Index(classes - 1);  // class 0 is the reference logit
  Eigen::MatrixXd teacher(Eigen::Index(classes), d);
  for (Eigen::Index i = 0; i < teacher.size(); ++i) teacher.data()[i] = rng.normal();

  // Rows: masked input x_s and the teacher's full-input distribution f(x).
  const auto rows = Eigen::Index(inputs * masks_per_input);
  Eigen::MatrixXd xs(rows, d);
  Eigen::MatrixXd target(rows, Eigen::Index(classes));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < inputs; ++i) {
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = rng.normal();
    Eigen::VectorXd logits = teacher * x;
    Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
    p /= p.sum();
    for (const Mask& s : sample_equicardinality(features, masks_per_input, rng)) {
      for (Eigen::Index j = 0; j < d; ++j) xs(r, j) = s[std::size_t(j)] ? x(j) : 0.0;
      target.row(r) = p.transpose();
      ++r;
    }
  }

  auto probs = [&](const Eigen::MatrixXd& beta, Eigen::Index row) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(classes));
    z(0) = 0.0;
    z.tail(k) = beta * xs.row(row).transpose();
    Eigen::VectorXd q = (z.array() - z.maxCoeff()).exp();
    return Eigen::VectorXd(q / q.sum());
  };
  auto loss = [&](const Eigen::MatrixXd& beta) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::VectorXd q = probs(beta, i);
      for (Eigen::Index c = 0; c < Eigen::Index(classes); ++c) {
        const double p = target(i, c);
        if (p > 0.0) total += p * (std::log(p) - std::log(q(c)));
      }
    }
    return total / double(rows);
  };
  auto gradient = [&](const Eigen::MatrixXd& beta) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k, d);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::VectorXd q = probs(beta, i);
      g += (q.tail(k) - target.row(i).tail(k).transpose()) * xs.row(i);
    }
    return Eigen::MatrixXd(g / double(rows));
  };
  // Hessian over vec(beta) with row-major (class, feature) ordering.
  auto hessian = [&](const Eigen::MatrixXd& beta) {
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(k * d, k * d);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::VectorXd q = probs(beta, i).tail(k);
      Eigen::MatrixXd cov = -q * q.transpose();
      cov.diagonal() += q;
      const Eigen::MatrixXd xx = xs.row(i).transpose() * xs.row(i);
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) hess.block(a * d, b * d, d, d) += cov(a, b) * xx;
      }
    }
    return Eigen::MatrixXd(hess / double(rows));
  };
  auto flat = [&](const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(k * d);
    for (Eigen::Index a = 0; a < k; ++a) v.segment(a * d, d) = m.row(a).transpose();
    return v;
  };
  auto unflat = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd m(k, d);
    for (Eigen::Index a = 0; a < k; ++a) m.row(a) = v.segment(a * d, d).transpose();
    return m;
  };
  auto min_eig = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
  };

  // Optimum by damped Newton.
  Eigen::MatrixXd opt = Eigen::MatrixXd::Zero(k, d);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd g = flat(gradient(opt));
    if (g.norm() < 1e-13) break;
    const Eigen::VectorXd dir = hessian(opt).ldlt().solve(g);
    double t = 1.0;
    const double base = loss(opt);
    while (t > 1e-8 && loss(opt - unflat(t * dir)) > base - 1e-4 * t * g.dot(dir)) t *= 0.5;
    opt -= unflat(t * dir);
  }
  const double best = loss(opt);

  // Global smoothness: the softmax covariance has spectral norm <= 1/2.
  const Eigen::MatrixXd gram = xs.transpose() * xs / double(rows);
  DecayTrace trace;
  trace.smoothness =
      0.5 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
  trace.step_size = 1.0 / trace.smoothness;

  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(k, d);
  double mu = min_eig(hessian(opt));
  std::vector<double> gaps;
  for (std::size_t t = 0; t <= steps; ++t) {
    gaps.push_back(std::max(0.0, loss(beta) - best));
    mu = std::min(mu, min_eig(hessian(beta)));
    if (t < steps) beta -= trace.step_size * gradient(beta);
  }
  trace.mu = mu;
  trace.gap = gaps;
  trace.pass = true;
  const double rate = 1.0 - mu * trace.step_size;
  for (std::size_t t = 0; t < gaps.size(); ++t) {
    const double b = std::pow(rate, double(t)) * gaps[0];
    trace.bound.push_back(b);
    const double ratio = b > 0.0 ? gaps[t] / b : (gaps[t] > 0.0 ? INFINITY : 0.0);
    trace.worst_ratio = std::max(trace.worst_ratio, ratio);
    if (gaps[t] > b * (1.0 + slack)) trace.pass = false;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Faithfulness over a split

ExplainFn side_explainer(const Classifier& backbone, const SideModel& surrogate,
                         const SideModel& explainer) {
  auto model = std::make_shared<CombinedModel>(
      CombinedModel::assemble(backbone, surrogate, explainer));
  return [model](const Tensor& x, Game&) { return model->forward(x).attribution.at(0); };
}

ExplainFn head_explainer(const HeadExplainer& model) {
  auto head = std::make_shared<HeadExplainer>(model);
  return [head](const Tensor& x, Game& game) {
    NoGradGuard no_grad;
    const Tensor raw = head->explain_raw(x);
    const std::size_t d = raw.dim(1), classes = raw.dim(2);
    Attribution a = Attribution::zeros(d, classes);
    auto r = raw.data();
    std::copy(r.begin(), r.end(), a.values.begin());
    return efficiency_normalize(a, game.value(Mask::full(d)), game.value(Mask::empty(d)));
  };
}

ExplainFn random_explainer(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const Tensor&, Game& game) {
    Attribution a = Attribution::zeros(game.players(), game.outputs());
    for (double& v : a.values) v = rng->normal();
    return a;
  };
}

ExplainFn exact_explainer() {
  return [](const Tensor&, Game& game) { return exact_shapley(game); };
}

ExplainFn kernelshap_explainer(std::size_t samples, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng, samples](const Tensor&, Game& game) {
    return kernelshap(game, KernelShapOptions{samples, true}, *rng);
  };
}

std::vector<std::size_t> evaluation_rows(std::size_t split_size, std::size_t samples,
                                         std::uint64_t seed) {
  std::vector<std::size_t> rows(split_size);
  std::iota(rows.begin(), rows.end(), 0);
  const std::size_t n = std::min(samples, split_size);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(rows[i], rows[i + rng.below(split_size - i)]);
  }
  rows.resize(n);
  return rows;
}

FaithfulnessReport faithfulness(const Classifier& backbone, const SideModel& surrogate,
                                const Split& split, const ExplainFn& explain,
                                std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ConfigError("faithfulness needs at least one sample");
  FaithfulnessReport report;
  report.rows = evaluation_rows(split.size(), samples, seed);
  bool any_normalized = false;
  for (std::size_t row : report.rows) {
    const Tensor x = split.batch({row});
    std::size_t target = 0;
    {
      NoGradGuard no_grad;
      const Tensor out = backbone.logits(x);
      auto logits = out.data();
      target = std::size_t(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    Game game = surrogate_game(backbone, surrogate, x);
    const Attribution a = explain(x, game);
    if (a.players != game.players() || a.classes != game.outputs()) {
      throw DimensionError("explainer returned a " + std::to_string(a.players) + "x" +
                           std::to_string(a.classes) + " attribution for a " +
                           std::to_string(game.players()) + "-player game");
    }
    if (a.normalized) {
      any_normalized = true;
      const auto v1 = game.value(Mask::full(a.players));
      const auto v0 = game.value(Mask::empty(a.players));
      for (std::size_t c = 0; c < a.classes; ++c) {
        report.max_efficiency_residual = std::max(
            report.max_efficiency_residual, std::abs(a.total(c) - (v1[c] - v0[c])));
      }
    }
    const auto scores = a.for_class(target);
    const auto ins = insertion_deletion(scores, game, target, CurveMode::kInsertion);
    const auto del = insertion_deletion(scores, game, target, CurveMode::kDeletion);
    if (report.fractions.empty()) {
      report.fractions = ins.fractions;
      report.insertion_curve.assign(ins.fractions.size(), 0.0);
      report.deletion_curve.assign(del.fractions.size(), 0.0);
    }
    for (std::size_t i = 0; i < ins.probabilities.size(); ++i) {
      report.insertion_curve[i] += ins.probabilities[i];
      report.deletion_curve[i] += del.probabilities[i];
    }
    report.insertion_auc += ins.auc;
    report.deletion_auc += del.auc;
  }
  const double n = double(report.rows.size());
  for (double& v : report.insertion_curve) v /= n;
  for (double& v : report.deletion_curve) v /= n;
  report.insertion_auc /= n;
  report.deletion_auc /= n;
  if (!any_normalized) report.max_efficiency_residual = std::nan("");
  return report;
}

std::vector<double> layerwise_cka(const Classifier& a, const Classifier& b, const Tensor& x) {
  if (a.config().depth != b.config().depth || a.config().hidden != b.config().hidden) {
    throw ContractError("layerwise_cka needs two classifiers of the same shape");
  }
  NoGradGuard no_grad;
  const auto ta = a.run(x, Tensor());
  const auto tb = b.run(x, Tensor());
  const std::size_t n = x.dim(0);
  const std::size_t h = a.config().hidden;
  std::vector<double> out;
  for (std::size_t l = 0; l < ta.blocks.size(); ++l) {
    auto class_rows = [&](const Tensor& z) {
      std::vector<double> rows(n * h);
      auto zd = z.data();
      const std::size_t t = z.dim(1);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < h; ++k) rows[i * h + k] = zd[i * t * h + k];
      }
      return rows;
    };
    out.push_back(cka(class_rows(ta.blocks[l]), h, class_rows(tb.blocks[l]), h, n));
  }
  return out;
}

}  // namespace selfex
