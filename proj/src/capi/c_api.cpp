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

#include "selfex/c_api.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "selfex/combined.hpp"
#include "selfex/digest.hpp"
#include "selfex/errors.hpp"
#include "selfex/evaluation.hpp"
#include "selfex/io.hpp"

using nlohmann::json;
using namespace selfex;

struct selfex_dataset {
  SyntheticDataset data;
};

struct selfex_model {
  CheckpointRole role = CheckpointRole::kClassifier;
  std::optional<Classifier> classifier;
  std::optional<SideModel> side;
  std::optional<HeadExplainer> head;
};

struct selfex_combined {
  CombinedModel model;
};

namespace {

thread_local std::string g_last_error;

// Runs `body`, which returns a status, and maps exceptions onto status codes.
template <typename Body>
int guarded(Body&& body) noexcept {
  try {
    g_last_error.clear();
    return body();
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SELFEX_ERR_INVARIANT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SELFEX_ERR_INVARIANT;
  } catch (...) {
    g_last_error = "unknown error";
    return SELFEX_ERR_INVARIANT;
  }
}

template <typename T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw ContractError(std::string(what) + " must not be NULL");
}

char* duplicate(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

void emit(char** out, const std::string& text) {
  if (out != nullptr) *out = duplicate(text);
}

ConfigMap config_of(const char* text) { return text ? parse_config(text) : ConfigMap{}; }

const Split& split_of(const SyntheticDataset& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw ConfigError("unknown split '" + name + "' (train, val or test)");
}

const Classifier& classifier_of(const selfex_model* m, const char* slot) {
  require(m, slot);
  if (m->role != CheckpointRole::kClassifier) {
    throw RoleError(std::string(slot) + " slot needs a classifier, got " + to_string(m->role));
  }
  return *m->classifier;
}

const SideModel& side_of(const selfex_model* m, CheckpointRole role, const char* slot) {
  require(m, slot);
  if (m->role != role) {
    throw RoleError(std::string(slot) + " slot needs a " + to_string(role) + ", got " +
                    to_string(m->role));
  }
  return *m->side;
}

Checkpoint checkpoint_of(const selfex_model& m) {
  switch (m.role) {
    case CheckpointRole::kClassifier: return to_checkpoint(*m.classifier);
    case CheckpointRole::kSurrogate:
    case CheckpointRole::kExplainer: return to_checkpoint(*m.side);
    case CheckpointRole::kDuo:
    case CheckpointRole::kFroyo: return to_checkpoint(*m.head, m.role);
  }
  throw InvariantViolation("unhandled model role");
}

selfex_model* model_from(const Checkpoint& ck) {
  auto m = std::make_unique<selfex_model>();
  m->role = ck.role;
  switch (ck.role) {
    case CheckpointRole::kClassifier: m->classifier = classifier_from(ck); break;
    case CheckpointRole::kSurrogate: m->side = side_model_from(ck, SideRole::kSurrogate); break;
    case CheckpointRole::kExplainer: m->side = side_model_from(ck, SideRole::kExplainer); break;
    case CheckpointRole::kDuo:
    case CheckpointRole::kFroyo: m->head = head_explainer_from(ck); break;
  }
  return m.release();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::size_t argmax(std::span<const float> row) {
  return std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
}

// Explanation function for an explainer, duo or froyo model.
ExplainFn explain_fn_of(const selfex_model* m, const Classifier& backbone,
                        const SideModel& surrogate) {
  require(m, "explainer");
  switch (m->role) {
    case CheckpointRole::kExplainer: return side_explainer(backbone, surrogate, *m->side);
    case CheckpointRole::kDuo:
    case CheckpointRole::kFroyo: return head_explainer(*m->head);
    default:
      throw RoleError("explainer slot needs an explainer, duo or froyo model, got " +
                      to_string(m->role));
  }
}

double split_accuracy(const Classifier& model, const Split& split) {
  NoGradGuard no_grad;
  return accuracy(model.logits(split.all()), split.labels);
}

double surrogate_accuracy(const Classifier& backbone, const SideModel& surrogate,
                          const Split& split) {
  std::vector<std::size_t> rows(split.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Tensor p = surrogate_probabilities(backbone, surrogate, split.all(),
                                           std::vector<Mask>(rows.size(),
                                                             Mask::full(split.num_tokens)),
                                           rows);
  return accuracy(p, split.labels);
}

}  // namespace

extern "C" {

const char* selfex_version(void) { return "0.1.0"; }

const char* selfex_last_error(void) { return g_last_error.c_str(); }

void selfex_string_free(char* text) { std::free(text); }

int selfex_config_merge(const char* base, const char* overrides, char** merged) {
  return guarded([&] {
    require(merged, "merged");
    *merged = duplicate(format_config(merge_config(config_of(base), config_of(overrides))));
    return SELFEX_OK;
  });
}

int selfex_config_resolve(const char* config, char** resolved) {
  return guarded([&] {
    require(resolved, "resolved");
    ConfigMap cfg = config_of(config);
    ConfigMap full;
    write_dataset_params(read_dataset_params(cfg), full);
    write_model_config(read_model_config(cfg), full);
    write_side_config(read_side_config(cfg), full);
    write_stage_config(read_stage_config(cfg), full);
    cfg.erase("model.preset");
    *resolved = duplicate(format_config(merge_config(cfg, full)));
    return SELFEX_OK;
  });
}

int selfex_config_get(const char* config, const char* key, char** value) {
  return guarded([&] {
    require(key, "key");
    require(value, "value");
    const ConfigMap cfg = config_of(config);
    auto it = cfg.find(key);
    *value = it == cfg.end() ? nullptr : duplicate(it->second);
    return SELFEX_OK;
  });
}

// ---------------------------------------------------------------------------
// Datasets

int selfex_dataset_generate(const char* config, uint64_t seed, selfex_dataset** out) {
  return guarded([&] {
    require(out, "out");
    const DatasetParams params = read_dataset_params(config_of(config));
    *out = new selfex_dataset{generate_dataset(params, seed)};
    return SELFEX_OK;
  });
}

int selfex_dataset_load(const char* path, selfex_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new selfex_dataset{load_dataset(path)};
    return SELFEX_OK;
  });
}

int selfex_dataset_save(const selfex_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "dataset");
    require(path, "path");
    save_dataset(data->data, path);
    return SELFEX_OK;
  });
}

int selfex_dataset_describe(const selfex_dataset* data, char** out) {
  return guarded([&] {
    require(data, "dataset");
    ConfigMap params;
    write_dataset_params(data->data.params, params);
    json j;
    j["seed"] = data->data.seed;
    j["params"] = params;
    j["train"] = data->data.train.size();
    j["val"] = data->data.val.size();
    j["test"] = data->data.test.size();
    emit(out, j.dump(2));
    return SELFEX_OK;
  });
}

int selfex_dataset_split_shape(const selfex_dataset* data, const char* split, size_t* rows,
                               size_t* tokens, size_t* dim) {
  return guarded([&] {
    require(data, "dataset");
    require(split, "split");
    const Split& s = split_of(data->data, split);
    if (rows) *rows = s.size();
    if (tokens) *tokens = s.num_tokens;
    if (dim) *dim = s.token_dim;
    return SELFEX_OK;
  });
}

int selfex_dataset_row(const selfex_dataset* data, const char* split, size_t row,
                       float* out) {
  return guarded([&] {
    require(data, "dataset");
    require(split, "split");
    require(out, "out");
    const Split& s = split_of(data->data, split);
    if (row >= s.size()) throw ContractError("row " + std::to_string(row) + " out of range");
    const std::size_t stride = s.num_tokens * s.token_dim;
    std::memcpy(out, s.tokens.data() + row * stride, stride * sizeof(float));
    return SELFEX_OK;
  });
}

void selfex_dataset_free(selfex_dataset* data) { delete data; }

// ---------------------------------------------------------------------------
// Models

int selfex_model_load(const char* path, selfex_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = model_from(load_checkpoint(path));
    return SELFEX_OK;
  });
}

int selfex_model_save(const selfex_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(checkpoint_of(*model), path);
    return SELFEX_OK;
  });
}

int selfex_model_describe(const selfex_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    const Checkpoint ck = checkpoint_of(*model);
    json j;
    j["role"] = to_string(ck.role);
    j["config"] = ck.config;
    j["parameters"] = total_numel(ck.tensors);
    j["tensors"] = ck.tensors.size();
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(param_digest(ck.tensors)));
    j["digest"] = digest;
    emit(out, j.dump(2));
    return SELFEX_OK;
  });
}

void selfex_model_free(selfex_model* model) { delete model; }

// ---------------------------------------------------------------------------
// Training

int selfex_train(const char* config, const selfex_dataset* data, const selfex_model* backbone,
                 const selfex_model* surrogate, selfex_model** out, char** record_json) {
  return guarded([&] {
    require(data, "dataset");
    require(out, "out");
    const ConfigMap cfg = config_of(config);
    const StageConfig stage = read_stage_config(cfg);
    auto model = std::make_unique<selfex_model>();
    LossRecord record;
    json extra = json::object();
    switch (stage.stage) {
      case Stage::kClassifier: {
        const ModelConfig mc = read_model_config(cfg);
        ClassifierRun run = train_classifier(mc, data->data, stage);
        extra["val_accuracy"] = split_accuracy(run.model, data->data.val);
        model->role = CheckpointRole::kClassifier;
        model->classifier = std::move(run.model);
        record = std::move(run.record);
        break;
      }
      case Stage::kSurrogate: {
        const Classifier& bb = classifier_of(backbone, "backbone");
        const SideConfig side = read_side_config(cfg);
        SideRun run = train_surrogate(bb, side, data->data, stage);
        extra["val_accuracy"] = surrogate_accuracy(bb, run.model, data->data.val);
        model->role = CheckpointRole::kSurrogate;
        model->side = std::move(run.model);
        record = std::move(run.record);
        break;
      }
      case Stage::kExplainer: {
        const Classifier& bb = classifier_of(backbone, "backbone");
        const SideModel& sur = side_of(surrogate, CheckpointRole::kSurrogate, "surrogate");
        SideConfig side = read_side_config(cfg, sur.side_config());
        if (stage.pipeline == Pipeline::kAutognothi) {
          SideRun run = train_explainer(bb, sur, side.head_depth, side.readout, data->data,
                                        stage);
          model->role = CheckpointRole::kExplainer;
          model->side = std::move(run.model);
          record = std::move(run.record);
        } else if (stage.pipeline == Pipeline::kFroyo || stage.pipeline == Pipeline::kDuo) {
          const bool duo = stage.pipeline == Pipeline::kDuo;
          HeadRun run = duo ? train_duo(bb, sur, side.head_depth, side.readout, data->data, stage)
                            : train_froyo(bb, sur, side.head_depth, side.readout, data->data,
                                          stage);
          if (duo) {
            extra["gradient_cosine"] = run.gradient_cosine;
            std::size_t negative = 0;
            for (double c : run.gradient_cosine) negative += c < 0.0;
            extra["negative_cosine_steps"] = negative;
            extra["val_accuracy"] = split_accuracy(run.model.classifier, data->data.val);
          }
          model->role = duo ? CheckpointRole::kDuo : CheckpointRole::kFroyo;
          model->head = std::move(run.model);
          record = std::move(run.record);
        } else {
          throw ConfigError("the explainer stage runs the autognothi, froyo or duo pipeline");
        }
        break;
      }
    }
    if (record_json != nullptr) {
      json j = json::parse(loss_record_json(record));
      j["stage"] = to_string(stage.stage);
      j["pipeline"] = to_string(stage.pipeline);
      j["role"] = to_string(model->role);
      j.update(extra);
      *record_json = duplicate(j.dump(2));
    }
    *out = model.release();
    return SELFEX_OK;
  });
}

// ---------------------------------------------------------------------------
// Combined model

int selfex_combined_create(const selfex_model* backbone, const selfex_model* surrogate,
                           const selfex_model* explainer, selfex_combined** out) {
  return guarded([&] {
    require(out, "out");
    const Classifier& bb = classifier_of(backbone, "backbone");
    const SideModel& sur = side_of(surrogate, CheckpointRole::kSurrogate, "surrogate");
    const SideModel& exp = side_of(explainer, CheckpointRole::kExplainer, "explainer");
    *out = new selfex_combined{CombinedModel::assemble(bb, sur, exp)};
    return SELFEX_OK;
  });
}

int selfex_combined_explain(const selfex_combined* model, const float* tokens, size_t batch,
                            size_t num_tokens, size_t dim, char** out) {
  return guarded([&] {
    require(model, "model");
    require(tokens, "tokens");
    if (batch == 0) throw ContractError("explain needs at least one input");
    const std::size_t n = batch * num_tokens * dim;
    const Tensor x = Tensor::from_data({batch, num_tokens, dim},
                                       std::vector<float>(tokens, tokens + n));
    const CombinedOutput o = model->model.forward(x);
    const std::size_t classes = o.logits.dim(1);
    json items = json::array();
    for (std::size_t b = 0; b < batch; ++b) {
      const auto logits = o.logits.data().subspan(b * classes, classes);
      json item;
      item["prediction"] = argmax(logits);
      item["logits"] = std::vector<double>(logits.begin(), logits.end());
      const auto full = o.full_values.data().subspan(b * classes, classes);
      const auto empty = o.empty_values.data().subspan(b * classes, classes);
      item["full_values"] = std::vector<double>(full.begin(), full.end());
      item["empty_values"] = std::vector<double>(empty.begin(), empty.end());
      const Attribution& a = o.attribution[b];
      json grid = json::array();
      for (std::size_t i = 0; i < a.players; ++i) {
        json row = json::array();
        for (std::size_t c = 0; c < a.classes; ++c) row.push_back(a.at(i, c));
        grid.push_back(std::move(row));
      }
      item["attribution"] = std::move(grid);
      double residual = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        residual = std::max(residual, o.efficiency_residual(b, c));
      }
      item["efficiency_residual"] = residual;
      items.push_back(std::move(item));
    }
    emit(out, items.dump(2));
    return SELFEX_OK;
  });
}

void selfex_combined_free(selfex_combined* model) { delete model; }

// ---------------------------------------------------------------------------
// Evaluation

int selfex_evaluate(const char* config, const selfex_dataset* data,
                    const selfex_model* backbone, const selfex_model* surrogate,
                    const selfex_model* explainer, char** report_json, char** curves_csv) {
  return guarded([&] {
    require(data, "dataset");
    const ConfigMap cfg = config_of(config);
    std::string split_name = "test", source = "model";
    std::size_t samples = 200, ks_samples = 4096;
    std::uint64_t seed = 0;
    ConfigReader r(cfg, "eval.");
    r.text("split", split_name);
    r.size("samples", samples);
    r.u64("seed", seed);
    r.text("attribution", source);
    r.size("kernelshap_samples", ks_samples);
    r.finish();

    const Classifier& bb = classifier_of(backbone, "backbone");
    const SideModel& sur = side_of(surrogate, CheckpointRole::kSurrogate, "surrogate");
    const Split& split = split_of(data->data, split_name);

    ExplainFn explain;
    if (source == "model") {
      explain = explain_fn_of(explainer, bb, sur);
    } else if (source == "random") {
      explain = random_explainer(Rng(seed).fork(1).seed());
    } else if (source == "exact") {
      explain = exact_explainer();
    } else if (source == "kernelshap") {
      explain = kernelshap_explainer(ks_samples, Rng(seed).fork(2).seed());
    } else {
      throw ConfigError("eval.attribution must be model, random, exact or kernelshap, got '" +
                        source + "'");
    }
    const FaithfulnessReport f = faithfulness(bb, sur, split, explain, samples, seed);

    json j;
    j["split"] = split_name;
    j["attribution"] = source;
    if (source == "model") j["explainer_role"] = to_string(explainer->role);
    j["samples"] = f.rows.size();
    j["seed"] = seed;
    j["classifier_accuracy"] = split_accuracy(bb, split);
    j["surrogate_accuracy"] = surrogate_accuracy(bb, sur, split);
    j["insertion_auc"] = f.insertion_auc;
    j["deletion_auc"] = f.deletion_auc;
    j["max_efficiency_residual"] = finite_or_null(f.max_efficiency_residual);
    if (source == "model" && explainer->role == CheckpointRole::kDuo) {
      const Classifier& tuned = explainer->head->classifier;
      j["duo_accuracy"] = split_accuracy(tuned, split);
      j["layer_cka"] = layerwise_cka(bb, tuned, split.batch(f.rows));
    }
    emit(report_json, j.dump(2));

    if (curves_csv != nullptr) {
      std::string csv = "fraction,insertion,deletion\n";
      char line[96];
      for (std::size_t i = 0; i < f.fractions.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", f.fractions[i],
                      f.insertion_curve[i], f.deletion_curve[i]);
        csv += line;
      }
      *curves_csv = duplicate(csv);
    }
    return SELFEX_OK;
  });
}

// ---------------------------------------------------------------------------
// Accounting

int selfex_count_params(const char* config, char** out) {
  return guarded([&] {
    const ConfigMap cfg = config_of(config);
    const ModelConfig mc = read_model_config(cfg);
    const SideConfig side = read_side_config(cfg);
    side.validate(mc);
    const std::size_t backbone = count_params(mc);
    const std::size_t trainable = count_side_params(mc, side);
    const auto full = efficiency_report(mc, nullptr);
    const auto tuned = efficiency_report(mc, &side);
    json j;
    j["backbone_params"] = backbone;
    j["side_role"] = to_string(side.role);
    j["side_reduction"] = side.reduction;
    j["side_width"] = side.width(mc);
    j["side_params"] = trainable;
    j["trainable_reduction_percent"] = 100.0 * (1.0 - double(trainable) / double(backbone));
    j["full_finetune_memory_mb"] = full.memory_bytes / (1024.0 * 1024.0);
    j["side_tuning_memory_mb"] = tuned.memory_bytes / (1024.0 * 1024.0);
    emit(out, j.dump(2));
    return SELFEX_OK;
  });
}

int selfex_count_flops(const char* config, char** out) {
  return guarded([&] {
    const ConfigMap cfg = config_of(config);
    const ModelConfig mc = read_model_config(cfg);
    SideConfig side = read_side_config(cfg);
    side.role = SideRole::kExplainer;
    const FlopsComparison cmp = compare_flops(mc, side);
    const FlopCount cls = count_flops_classifier(mc);
    json j;
    j["classifier_gflops"] = cmp.classifier / 1e9;
    j["separate_gflops"] = cmp.separate / 1e9;
    j["combined_gflops"] = cmp.combined / 1e9;
    j["reduction_percent"] = 100.0 * cmp.reduction;
    j["classifier_breakdown_gflops"] = {
        {"embedding", cls.embedding / 1e9},
        {"attention_linear", cls.attention_linear / 1e9},
        {"attention_scores", cls.attention_scores / 1e9},
        {"mlp", cls.mlp / 1e9},
        {"norms", cls.norms / 1e9},
        {"head", cls.head / 1e9}};
    emit(out, j.dump(2));
    return SELFEX_OK;
  });
}

// ---------------------------------------------------------------------------
// Checks

int selfex_check_lemma(size_t max_d, char** out) {
  return guarded([&] {
    if (max_d < 2 || max_d > 16) throw ConfigError("max_d must lie in [2, 16]");
    json rows = json::array();
    double worst = 0.0;
    for (std::size_t d = 2; d <= max_d; ++d) {
      const SecondMomentMatrix a = second_moment_matrix(d);
      const double expected = 1.0 / (2.0 * harmonic(d - 1));
      const double diff = std::max(std::abs(a.lambda_min_closed - expected),
                                   std::abs(a.lambda_min_eigen - expected));
      worst = std::max(worst, diff);
      rows.push_back({{"d", d},
                      {"expected", expected},
                      {"closed_form", a.lambda_min_closed},
                      {"eigensolve", a.lambda_min_eigen},
                      {"abs_diff", diff}});
    }
    const bool pass = worst < 1e-9;
    emit(out, json{{"rows", rows}, {"max_abs_diff", worst}, {"pass", pass}}.dump(2));
    if (!pass) {
      g_last_error = "eigenvalue identity off by " + std::to_string(worst);
      return SELFEX_ERR_INVARIANT;
    }
    return SELFEX_OK;
  });
}

int selfex_check_bounds(const char* config, const selfex_dataset* data,
                        const selfex_model* backbone, const selfex_model* surrogate,
                        const selfex_model* explainer, char** out) {
  return guarded([&] {
    const ConfigMap cfg = config_of(config);
    std::string split_name = "test";
    std::size_t samples = 50, masks = 50000;
    std::size_t decay_features = 4, decay_classes = 3, decay_inputs = 64, decay_masks = 16,
                decay_steps = 300;
    std::uint64_t seed = 0;
    ConfigReader r(cfg, "bounds.");
    r.text("split", split_name);
    r.size("samples", samples);
    r.size("masks", masks);
    r.u64("seed", seed);
    r.size("decay_features", decay_features);
    r.size("decay_classes", decay_classes);
    r.size("decay_inputs", decay_inputs);
    r.size("decay_masks", decay_masks);
    r.size("decay_steps", decay_steps);
    r.finish();

    json j;
    bool failed = false;
    if (explainer == nullptr) {
      j["explainer_bound"] = {{"skipped", true}, {"reason", "no explainer given"}};
    } else {
      require(data, "dataset");
      const Classifier& bb = classifier_of(backbone, "backbone");
      const SideModel& sur = side_of(surrogate, CheckpointRole::kSurrogate, "surrogate");
      const BoundVerdict v = explainer_bound_on_split(
          bb, sur, split_of(data->data, split_name), explain_fn_of(explainer, bb, sur), samples,
          masks, seed);
      json b = {{"skipped", v.skipped}, {"reason", v.reason}, {"samples", v.samples}};
      if (!v.skipped) {
        b.update({{"lhs", v.lhs},
                  {"loss", v.loss},
                  {"optimal_loss", v.optimal_loss},
                  {"optimal_loss_ci", v.optimal_ci},
                  {"rhs", v.rhs},
                  {"exact_loss", v.exact_loss},
                  {"exact_optimal_loss", v.exact_optimal_loss},
                  {"exact_rhs", v.exact_rhs},
                  {"pass", v.pass}});
        failed = failed || !v.pass;
      }
      j["explainer_bound"] = std::move(b);
    }
    const DecayTrace t = convex_decay_experiment(decay_features, decay_classes, decay_inputs,
                                                 decay_masks, decay_steps, seed);
    j["convex_decay"] = {{"mu", t.mu},
                         {"smoothness", t.smoothness},
                         {"step_size", t.step_size},
                         {"worst_ratio", t.worst_ratio},
                         {"initial_gap", t.gap.empty() ? 0.0 : t.gap.front()},
                         {"final_gap", t.gap.empty() ? 0.0 : t.gap.back()},
                         {"pass", t.pass}};
    failed = failed || !t.pass;
    emit(out, j.dump(2));
    if (failed) {
      g_last_error = "a bound verdict failed";
      return SELFEX_ERR_INVARIANT;
    }
    return SELFEX_OK;
  });
}

}  // extern "C"
