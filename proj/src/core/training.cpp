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

#include "selfex/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "selfex/digest.hpp"
#include "selfex/errors.hpp"
#include "selfex/shapley.hpp"

namespace selfex {

namespace {

template <typename E>
struct NamedEnum {
  E value;
  const char* name;
};

constexpr NamedEnum<Stage> kStages[] = {{Stage::kClassifier, "classifier"},
                                        {Stage::kSurrogate, "surrogate"},
                                        {Stage::kExplainer, "explainer"}};
constexpr NamedEnum<Pipeline> kPipelines[] = {
    {Pipeline::kAutognothi, "autognothi"},
    {Pipeline::kFullFinetune, "full-finetune"},
    {Pipeline::kFroyo, "froyo"},
    {Pipeline::kDuo, "duo"}};
constexpr NamedEnum<ClassifierLoss> kLosses[] = {
    {ClassifierLoss::kMse, "mse"}, {ClassifierLoss::kCrossEntropy, "cross-entropy"}};
constexpr NamedEnum<LabelMode> kLabelModes[] = {{LabelMode::kWeighted, "weighted"},
                                                {LabelMode::kLabelOnly, "label-only"}};

template <typename E, std::size_t N>
std::string name_of(const NamedEnum<E> (&table)[N], E value) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  return "?";
}

template <typename E, std::size_t N>
E parse_named(const NamedEnum<E> (&table)[N], const std::string& text,
              const char* what) {
  for (const auto& entry : table) {
    if (text == entry.name) return entry.value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace

std::string to_string(Stage stage) { return name_of(kStages, stage); }
std::string to_string(Pipeline pipeline) { return name_of(kPipelines, pipeline); }
std::string to_string(ClassifierLoss loss) { return name_of(kLosses, loss); }
std::string to_string(LabelMode mode) { return name_of(kLabelModes, mode); }
Stage parse_stage(const std::string& text) { return parse_named(kStages, text, "stage"); }
Pipeline parse_pipeline(const std::string& text) {
  return parse_named(kPipelines, text, "pipeline");
}
ClassifierLoss parse_classifier_loss(const std::string& text) {
  return parse_named(kLosses, text, "classifier loss");
}
LabelMode parse_label_mode(const std::string& text) {
  return parse_named(kLabelModes, text, "label mode");
}

void StageConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0 || inputs_per_batch == 0) {
    throw ConfigError("batch sizes must be >= 1");
  }
  if (masks_per_input == 0 || masks_per_input % 2 != 0) {
    throw ConfigError("masks_per_input must be positive and even for paired sampling, got " +
                      std::to_string(masks_per_input));
  }
  if (val_masks == 0 || val_masks % 2 != 0) {
    throw ConfigError("val_masks must be positive and even");
  }
  optimizer.validate();
}

double kl_divergence(const std::vector<double>& p_logits,
                     const std::vector<double>& q_logits) {
  if (p_logits.size() != q_logits.size() || p_logits.empty()) {
    throw ContractError("kl_divergence: logit vectors must share a non-zero length");
  }
  auto log_softmax = [](const std::vector<double>& z) {
    const double top = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - top);
    const double lse = top + std::log(s);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
    return out;
  };
  const auto lp = log_softmax(p_logits);
  const auto lq = log_softmax(q_logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return std::max(kl, 0.0);
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

void shuffle(std::vector<std::size_t>& rows, Rng& rng) {
  for (std::size_t i = rows.size(); i > 1; --i) {
    std::swap(rows[i - 1], rows[rng.below(i)]);
  }
}

Tensor one_hot(const std::vector<std::int32_t>& labels, std::size_t classes) {
  std::vector<float> out(labels.size() * classes, 0.0f);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i * classes + static_cast<std::size_t>(labels[i])] = 1.0f;
  }
  return Tensor::from_data({labels.size(), classes}, std::move(out));
}

std::vector<std::int32_t> labels_of(const Split& split,
                                    const std::vector<std::size_t>& rows) {
  std::vector<std::int32_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(split.labels[r]);
  return out;
}

// Repeats each row of x [B, d, m] `times` times along the batch axis.
Tensor repeat_rows(const Tensor& x, std::size_t times) {
  std::vector<std::size_t> idx;
  idx.reserve(x.dim(0) * times);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    for (std::size_t t = 0; t < times; ++t) idx.push_back(b);
  }
  return index_select(x, 0, idx);
}

Tensor mask_matrix(const std::vector<Mask>& masks, std::size_t batch,
                   std::size_t per_input) {
  const std::size_t d = masks.front().size();
  std::vector<float> out(masks.size() * d);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = masks[i][j] ? 1.0f : 0.0f;
  }
  return Tensor::from_data({batch, per_input, d}, std::move(out));
}

// Snapshot of parameter values, restorable into the live tensors.
struct Snapshot {
  std::vector<std::vector<float>> values;

  static Snapshot of(const ParamList& params) {
    Snapshot s;
    for (const auto& p : params) s.values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return s;
  }
  void restore(ParamList& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].tensor.mutable_data();
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  }
};

// Fixed-epoch loop with best-validation checkpointing.
template <typename StepFn, typename ValFn>
LossRecord run_epochs(const StageConfig& stage, ParamList trainable,
                      std::size_t train_size, std::size_t per_step, StepFn step,
                      ValFn validate) {
  LossRecord record;
  Optimizer optimizer(trainable, stage.optimizer);
  record.initial_val_loss = validate();
  Snapshot best = Snapshot::of(trainable);
  double best_loss = std::numeric_limits<double>::infinity();
  const std::size_t steps = stage.steps_per_epoch
                                ? stage.steps_per_epoch
                                : (train_size + per_step - 1) / per_step;
  Rng order_rng = Rng(stage.seed).fork(0x5eed);
  std::vector<std::size_t> order = iota_rows(train_size);
  std::size_t cursor = train_size;
  for (std::size_t epoch = 1; epoch <= stage.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<std::size_t> rows;
      while (rows.size() < per_step) {
        if (cursor == train_size) {
          shuffle(order, order_rng);
          cursor = 0;
        }
        rows.push_back(order[cursor++]);
      }
      optimizer.zero_grad();
      double loss = 0.0;
      try {
        loss = step(rows);
        optimizer.step();
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(s) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(s));
      }
      record.step_loss.push_back(loss);
    }
    const double val = validate();
    record.val_loss.push_back(val);
    if (val < best_loss) {
      best_loss = val;
      record.best_epoch = epoch;
      best = Snapshot::of(trainable);
    }
  }
  best.restore(trainable);
  record.final_loss = best_loss;
  return record;
}

Classifier frozen_copy(const Classifier& model) {
  Classifier copy = model.clone();
  copy.set_trainable(false);
  return copy;
}

void guard_backbone(const Classifier& frozen, std::uint64_t expected) {
  if (param_digest(frozen.parameters()) != expected) {
    throw InvariantViolation("backbone parameters changed during side training");
  }
}

Tensor classification_loss(const Tensor& logits, const Tensor& targets,
                           ClassifierLoss kind) {
  const float inv_batch = 1.0f / float(logits.dim(0));
  if (kind == ClassifierLoss::kMse) {
    return scale(sum(square(sub(softmax(logits), targets))), inv_batch);
  }
  return scale(sum(mul(log_softmax(logits), targets)), -inv_batch);
}

// Fixed explanation-loss targets for a set of inputs.
struct ExplanationBatch {
  Tensor x;        // [B, d, m]
  Tensor v1;       // [B, C]
  Tensor v0;       // [B, C]
  Tensor values;   // [B, M, C]
  Tensor masks;    // [B, M, d]
  Tensor weights;  // [B, C]
};

ExplanationBatch explanation_batch(const Classifier& backbone, const SideModel& surrogate,
                                   const Split& split, const std::vector<std::size_t>& rows,
                                   std::size_t per_input, LabelMode mode, Rng& rng) {
  const std::size_t d = split.num_tokens;
  const std::size_t classes = surrogate.model_config().num_classes;
  const std::size_t batch = rows.size();
  const auto dist = shapley_kernel(d);
  ExplanationBatch out;
  out.x = split.batch(rows);
  std::vector<Mask> sampled;
  std::vector<Mask> all;
  std::vector<std::size_t> sample_of;
  for (std::size_t b = 0; b < batch; ++b) {
    auto masks = sample_subsets(dist, per_input, true, rng);
    for (auto& m : masks) {
      all.push_back(m);
      sample_of.push_back(b);
      sampled.push_back(std::move(m));
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    all.push_back(Mask::full(d));
    sample_of.push_back(b);
    all.push_back(Mask::empty(d));
    sample_of.push_back(b);
  }
  Tensor probs = surrogate_probabilities(backbone, surrogate, out.x, all, sample_of);
  const std::size_t n_sampled = batch * per_input;
  out.values = reshape(slice(probs, 0, 0, n_sampled), {batch, per_input, classes});
  std::vector<std::size_t> full_rows;
  std::vector<std::size_t> empty_rows;
  for (std::size_t b = 0; b < batch; ++b) {
    full_rows.push_back(n_sampled + 2 * b);
    empty_rows.push_back(n_sampled + 2 * b + 1);
  }
  out.v1 = index_select(probs, 0, full_rows);
  out.v0 = index_select(probs, 0, empty_rows);
  out.masks = mask_matrix(sampled, batch, per_input);
  out.weights = mode == LabelMode::kWeighted ? out.v1
                                             : one_hot(labels_of(split, rows), classes);
  return out;
}

// Precomputed validation targets, evaluated in chunks of inputs.
struct ExplanationValidation {
  std::vector<ExplanationBatch> chunks;
  std::size_t inputs = 0;

  template <typename ExplainFn>
  double loss(ExplainFn explain_raw) const {
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& c : chunks) {
      Tensor phi = normalize_in_graph(explain_raw(c.x), c.v1, c.v0);
      total += double(explanation_loss(phi, c.v0, c.values, c.masks, c.weights).item()) *
               double(c.x.dim(0));
    }
    return total / double(inputs);
  }
};

ExplanationValidation explanation_validation(const Classifier& backbone,
                                             const SideModel& surrogate,
                                             const SyntheticDataset& data,
                                             const StageConfig& stage) {
  ExplanationValidation v;
  v.inputs = stage.val_inputs ? std::min(stage.val_inputs, data.val.size()) : data.val.size();
  Rng rng = Rng(stage.seed).fork(0xa11);
  const std::size_t chunk = std::max<std::size_t>(1, kEvalChunk / stage.val_masks);
  for (std::size_t start = 0; start < v.inputs; start += chunk) {
    std::vector<std::size_t> rows;
    for (std::size_t r = start; r < std::min(v.inputs, start + chunk); ++r) rows.push_back(r);
    v.chunks.push_back(explanation_batch(backbone, surrogate, data.val, rows,
                                         stage.val_masks, stage.label_mode, rng));
  }
  return v;
}

void check_surrogate(const SideModel& surrogate) {
  if (surrogate.role() != SideRole::kSurrogate) {
    throw RoleError("explanation training needs a surrogate side model, got " +
                    to_string(surrogate.role()));
  }
}

}  // namespace

Tensor surrogate_probabilities(const Classifier& backbone, const SideModel& surrogate,
                               const Tensor& x, const std::vector<Mask>& masks,
                               const std::vector<std::size_t>& sample_of) {
  NoGradGuard no_grad;
  if (masks.size() != sample_of.size()) {
    throw ContractError("surrogate_probabilities: one sample index per mask");
  }
  const std::size_t classes = surrogate.model_config().num_classes;
  std::map<std::size_t, std::vector<std::size_t>> by_count;
  for (std::size_t i = 0; i < masks.size(); ++i) by_count[masks[i].count()].push_back(i);
  std::vector<float> out(masks.size() * classes);
  for (const auto& [count, members] : by_count) {
    for (std::size_t start = 0; start < members.size(); start += kEvalChunk) {
      const std::size_t end = std::min(members.size(), start + kEvalChunk);
      std::vector<Mask> group;
      std::vector<std::size_t> group_samples;
      for (std::size_t k = start; k < end; ++k) {
        group.push_back(masks[members[k]]);
        group_samples.push_back(sample_of[members[k]]);
      }
      Tensor p = softmax(surrogate.surrogate_logits(
          backbone, compact_tokens(x, group, group_samples)));
      auto pd = p.data();
      for (std::size_t k = start; k < end; ++k) {
        std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>((k - start) * classes), classes,
                    out.begin() + static_cast<std::ptrdiff_t>(members[k] * classes));
      }
    }
  }
  return Tensor::from_data({masks.size(), classes}, std::move(out));
}

Tensor normalize_in_graph(const Tensor& phi_raw, const Tensor& v1, const Tensor& v0) {
  const std::size_t batch = phi_raw.dim(0);
  const std::size_t d = phi_raw.dim(1);
  const std::size_t classes = phi_raw.dim(2);
  Tensor gap = reshape(sub(v1, v0), {batch, 1, classes});
  Tensor shift = scale(sub(gap, sum_axis(phi_raw, 1, true)), 1.0f / float(d));
  return add(phi_raw, shift);
}

Tensor explanation_loss(const Tensor& phi, const Tensor& v0, const Tensor& values,
                        const Tensor& masks, const Tensor& weights) {
  const std::size_t batch = phi.dim(0);
  const std::size_t classes = phi.dim(2);
  const std::size_t per_input = values.dim(1);
  Tensor pred = bmm(masks, phi);  // [B, M, C]
  Tensor resid = sub(sub(values, reshape(v0, {batch, 1, classes})), pred);
  Tensor weighted = mul(square(resid), reshape(weights, {batch, 1, classes}));
  return scale(sum(weighted), 1.0f / float(batch * per_input));
}

// ---------------------------------------------------------------------------
// Classifier

double accuracy(const Tensor& logits, const std::vector<std::int32_t>& labels) {
  const std::size_t classes = logits.dim(1);
  auto v = logits.data();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = v.subspan(i * classes, classes);
    const auto top = std::max_element(row.begin(), row.end()) - row.begin();
    hits += top == labels[i];
  }
  return double(hits) / double(labels.size());
}

double classifier_loss(const Classifier& model, const Split& split, ClassifierLoss loss) {
  NoGradGuard no_grad;
  double total = 0.0;
  const auto rows = iota_rows(split.size());
  for (std::size_t start = 0; start < rows.size(); start += kEvalChunk) {
    std::vector<std::size_t> chunk(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                   rows.begin() + static_cast<std::ptrdiff_t>(
                                                      std::min(rows.size(), start + kEvalChunk)));
    Tensor logits = model.logits(split.batch(chunk));
    Tensor targets = one_hot(labels_of(split, chunk), model.config().num_classes);
    total += double(classification_loss(logits, targets, loss).item()) * double(chunk.size());
  }
  return total / double(split.size());
}

ClassifierRun train_classifier(const ModelConfig& config, const SyntheticDataset& data,
                               const StageConfig& stage) {
  stage.validate();
  config.validate();
  if (config.num_tokens != data.params.num_tokens ||
      config.token_input_dim != data.params.token_dim ||
      config.num_classes != data.params.num_classes) {
    throw ConfigError("model config does not match the dataset dimensions");
  }
  Rng rng = Rng(stage.seed).fork(1);
  ClassifierRun run{Classifier::create(config, rng), {}};
  run.model.set_trainable(true);
  auto step = [&](const std::vector<std::size_t>& rows) {
    Tensor logits = run.model.logits(data.train.batch(rows));
    Tensor loss = classification_loss(
        logits, one_hot(labels_of(data.train, rows), config.num_classes),
        stage.classifier_loss);
    loss.backward();
    return double(loss.item());
  };
  auto validate = [&] { return classifier_loss(run.model, data.val, stage.classifier_loss); };
  run.record = run_epochs(stage, run.model.parameters(), data.train.size(),
                          stage.batch_size, step, validate);
  return run;
}

// ---------------------------------------------------------------------------
// Surrogate

SideRun train_surrogate(const Classifier& backbone, const SideConfig& side,
                        const SyntheticDataset& data, const StageConfig& stage) {
  stage.validate();
  if (side.role != SideRole::kSurrogate) {
    throw RoleError("train_surrogate needs a surrogate side config");
  }
  const std::uint64_t digest = param_digest(backbone.parameters());
  const Classifier frozen = frozen_copy(backbone);
  const ModelConfig& config = frozen.config();
  const std::size_t d = config.num_tokens;
  const std::size_t classes = config.num_classes;
  Rng rng = Rng(stage.seed).fork(2);
  SideRun run{SideModel::create(config, side, rng), {}};

  // Frozen full-input targets for every training input.
  Tensor train_probs;
  {
    NoGradGuard no_grad;
    std::vector<Tensor> parts;
    const auto rows = iota_rows(data.train.size());
    for (std::size_t start = 0; start < rows.size(); start += kEvalChunk) {
      std::vector<std::size_t> chunk(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                     rows.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                        rows.size(), start + kEvalChunk)));
      parts.push_back(softmax(frozen.logits(data.train.batch(chunk))));
    }
    train_probs = concat(parts, 0);
  }

  // KL(p || softmax(logits)) averaged over rows; p and log p are constants.
  auto kl_loss = [&](const Tensor& p, const Tensor& logits) {
    std::vector<float> logp(p.numel());
    auto pd = p.data();
    for (std::size_t i = 0; i < logp.size(); ++i) {
      logp[i] = pd[i] > 0.0f ? std::log(pd[i]) : 0.0f;
    }
    Tensor diff = sub(Tensor::from_data(p.shape(), std::move(logp)), log_softmax(logits));
    return scale(sum(mul(p, diff)), 1.0f / float(p.dim(0)));
  };

  // Fixed validation masks.
  const std::size_t val_n =
      stage.val_inputs ? std::min(stage.val_inputs, data.val.size()) : data.val.size();
  Rng val_rng = Rng(stage.seed).fork(0xa11);
  std::vector<Mask> val_masks;
  std::vector<std::size_t> val_sample;
  for (std::size_t i = 0; i < val_n; ++i) {
    for (auto& m : sample_equicardinality(d, stage.val_masks, val_rng)) {
      val_masks.push_back(std::move(m));
      val_sample.push_back(i);
    }
  }
  const Tensor val_x = data.val.batch(iota_rows(val_n));
  Tensor val_target;
  {
    NoGradGuard no_grad;
    val_target = index_select(softmax(frozen.logits(val_x)), 0, val_sample);
  }
  auto validate = [&] {
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t start = 0; start < val_masks.size(); start += kEvalChunk) {
      const std::size_t end = std::min(val_masks.size(), start + kEvalChunk);
      std::vector<Mask> masks(val_masks.begin() + static_cast<std::ptrdiff_t>(start),
                              val_masks.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<std::size_t> idx(val_sample.begin() + static_cast<std::ptrdiff_t>(start),
                                   val_sample.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor logits = run.model.surrogate_logits(frozen, index_select(val_x, 0, idx),
                                                 make_key_mask(masks));
      Tensor target = slice(val_target, 0, start, end - start);
      total += double(kl_loss(target, logits).item()) * double(end - start);
    }
    return total / double(val_masks.size());
  };

  Rng mask_rng = Rng(stage.seed).fork(3);
  auto step = [&](const std::vector<std::size_t>& rows) {
    const std::size_t per = stage.masks_per_input;
    std::vector<Mask> masks = sample_equicardinality(d, rows.size() * per, mask_rng);
    Tensor x = repeat_rows(data.train.batch(rows), per);
    std::vector<std::size_t> target_rows;
    for (std::size_t r : rows) target_rows.insert(target_rows.end(), per, r);
    Tensor target = index_select(train_probs, 0, target_rows);
    Tensor logits = run.model.surrogate_logits(frozen, x, make_key_mask(masks));
    Tensor loss = kl_loss(target, logits);
    loss.backward();
    return double(loss.item());
  };
  (void)classes;
  run.record = run_epochs(stage, run.model.parameters(), data.train.size(),
                          stage.inputs_per_batch, step, validate);
  guard_backbone(frozen, digest);
  guard_backbone(backbone, digest);
  return run;
}

// ---------------------------------------------------------------------------
// Explainer

SideRun train_explainer(const Classifier& backbone, const SideModel& surrogate,
                        std::size_t head_depth, ExplainerReadout readout,
                        const SyntheticDataset& data, const StageConfig& stage) {
  stage.validate();
  check_surrogate(surrogate);
  const std::uint64_t digest = param_digest(backbone.parameters());
  const Classifier frozen = frozen_copy(backbone);
  SideModel game = surrogate.clone();
  for (auto& p : game.parameters()) p.tensor.set_requires_grad(false);

  Rng rng = Rng(stage.seed).fork(4);
  SideRun run{SideModel::explainer_from(game, head_depth, readout, rng), {}};
  const auto val = explanation_validation(frozen, game, data, stage);
  auto validate = [&] {
    return val.loss([&](const Tensor& x) { return run.model.explain_raw(frozen, x); });
  };
  Rng mask_rng = Rng(stage.seed).fork(5);
  auto step = [&](const std::vector<std::size_t>& rows) {
    auto batch = explanation_batch(frozen, game, data.train, rows, stage.masks_per_input,
                                   stage.label_mode, mask_rng);
    Tensor phi = normalize_in_graph(run.model.explain_raw(frozen, batch.x), batch.v1, batch.v0);
    Tensor loss = explanation_loss(phi, batch.v0, batch.values, batch.masks, batch.weights);
    loss.backward();
    return double(loss.item());
  };
  run.record = run_epochs(stage, run.model.parameters(), data.train.size(),
                          stage.inputs_per_batch, step, validate);
  guard_backbone(frozen, digest);
  guard_backbone(backbone, digest);
  return run;
}

// ---------------------------------------------------------------------------
// Head explainers on the classifier itself

HeadExplainer HeadExplainer::create(const Classifier& classifier, std::size_t head_depth,
                                    ExplainerReadout readout, Rng& rng) {
  const ModelConfig& c = classifier.config();
  return HeadExplainer{classifier.clone(),
                       ExplanationHead::create(c.hidden, head_depth, c.num_tokens,
                                               c.num_classes, readout, rng)};
}

std::pair<Tensor, Tensor> HeadExplainer::forward(const Tensor& x) const {
  auto trace = classifier.run(x, Tensor());
  return {trace.logits, head(trace.blocks.back())};
}

Tensor HeadExplainer::explain_raw(const Tensor& x) const { return forward(x).second; }

ParamList HeadExplainer::head_parameters() const {
  ParamList out;
  const_cast<ExplanationHead&>(head).visit(
      "explanation_head", [&](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

HeadExplainer HeadExplainer::clone() const {
  HeadExplainer copy{classifier.clone(), head};
  copy.head.visit("", deep_copy_visitor());
  return copy;
}

HeadRun train_froyo(const Classifier& classifier, const SideModel& surrogate,
                    std::size_t head_depth, ExplainerReadout readout,
                    const SyntheticDataset& data, const StageConfig& stage) {
  stage.validate();
  check_surrogate(surrogate);
  const std::uint64_t digest = param_digest(classifier.parameters());
  const Classifier frozen = frozen_copy(classifier);
  SideModel game = surrogate.clone();
  for (auto& p : game.parameters()) p.tensor.set_requires_grad(false);

  Rng rng = Rng(stage.seed).fork(6);
  HeadRun run{HeadExplainer::create(frozen, head_depth, readout, rng), {}, {}};
  run.model.classifier.set_trainable(false);
  const auto val = explanation_validation(frozen, game, data, stage);
  auto validate = [&] {
    return val.loss([&](const Tensor& x) { return run.model.explain_raw(x); });
  };
  Rng mask_rng = Rng(stage.seed).fork(7);
  auto step = [&](const std::vector<std::size_t>& rows) {
    auto batch = explanation_batch(frozen, game, data.train, rows, stage.masks_per_input,
                                   stage.label_mode, mask_rng);
    Tensor phi = normalize_in_graph(run.model.explain_raw(batch.x), batch.v1, batch.v0);
    Tensor loss = explanation_loss(phi, batch.v0, batch.values, batch.masks, batch.weights);
    loss.backward();
    return double(loss.item());
  };
  run.record = run_epochs(stage, run.model.head_parameters(), data.train.size(),
                          stage.inputs_per_batch, step, validate);
  guard_backbone(run.model.classifier, digest);
  return run;
}

HeadRun train_duo(const Classifier& classifier, const SideModel& surrogate,
                  std::size_t head_depth, ExplainerReadout readout,
                  const SyntheticDataset& data, const StageConfig& stage) {
  stage.validate();
  check_surrogate(surrogate);
  const Classifier frozen = frozen_copy(classifier);
  SideModel game = surrogate.clone();
  for (auto& p : game.parameters()) p.tensor.set_requires_grad(false);

  Rng rng = Rng(stage.seed).fork(8);
  HeadRun run{HeadExplainer::create(frozen, head_depth, readout, rng), {}, {}};
  run.model.classifier.set_trainable(true);
  const std::size_t classes = frozen.config().num_classes;
  ParamList trainable = run.model.classifier.parameters();
  for (auto& p : run.model.head_parameters()) trainable.push_back(p);
  const ParamList shared = run.model.classifier.encoder_parameters();

  const auto val = explanation_validation(frozen, game, data, stage);
  auto validate = [&] {
    return val.loss([&](const Tensor& x) { return run.model.explain_raw(x); }) +
           classifier_loss(run.model.classifier, data.val, stage.classifier_loss);
  };

  auto flat_grads = [&] {
    std::vector<double> g;
    for (const auto& p : shared) {
      if (p.tensor.has_grad()) {
        auto gr = p.tensor.grad();
        g.insert(g.end(), gr.begin(), gr.end());
      } else {
        g.insert(g.end(), p.tensor.numel(), 0.0);
      }
    }
    return g;
  };

  Rng mask_rng = Rng(stage.seed).fork(9);
  auto step = [&](const std::vector<std::size_t>& rows) {
    // Explanation targets come from the frozen surrogate game of the
    // original classifier, so both pipelines regress onto the same values.
    auto batch = explanation_batch(frozen, game, data.train, rows, stage.masks_per_input,
                                   stage.label_mode, mask_rng);
    auto [logits, phi_raw] = run.model.forward(batch.x);
    Tensor cls_loss = classification_loss(
        logits, one_hot(labels_of(data.train, rows), classes), stage.classifier_loss);
    Tensor phi = normalize_in_graph(phi_raw, batch.v1, batch.v0);
    Tensor exp_loss = explanation_loss(phi, batch.v0, batch.values, batch.masks, batch.weights);
    cls_loss.backward();
    const auto g_cls = flat_grads();
    exp_loss.backward();
    auto g_exp = flat_grads();
    for (std::size_t i = 0; i < g_exp.size(); ++i) g_exp[i] -= g_cls[i];
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < g_exp.size(); ++i) {
      dot += g_cls[i] * g_exp[i];
      n1 += g_cls[i] * g_cls[i];
      n2 += g_exp[i] * g_exp[i];
    }
    run.gradient_cosine.push_back(n1 > 0.0 && n2 > 0.0 ? dot / std::sqrt(n1 * n2) : 0.0);
    return double(cls_loss.item()) + double(exp_loss.item());
  };
  run.record = run_epochs(stage, trainable, data.train.size(), stage.inputs_per_batch,
                          step, validate);
  return run;
}

}  // namespace selfex
