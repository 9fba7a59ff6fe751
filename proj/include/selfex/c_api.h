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

/* Stable C interface to the selfex library. Every call returns a status code
 * (SELFEX_OK or one of the error classes below); on failure the message is
 * available from selfex_last_error() on the calling thread. Strings returned
 * through char** out-parameters are owned by the caller and released with
 * selfex_string_free(). Handles are released with their *_free function;
 * passing NULL to any *_free function is a no-op.
 *
 * Configuration is passed as text in the flat "section.key = value" format.
 * Each call reads only the sections it needs and rejects unknown keys inside
 * those sections. */

#ifndef SELFEX_C_API_H_
#define SELFEX_C_API_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SELFEX_API __declspec(dllexport)
#else
#define SELFEX_API __attribute__((visibility("default")))
#endif

enum {
  SELFEX_OK = 0,
  SELFEX_ERR_USAGE = 1,     /* bad arguments, config, roles or shapes */
  SELFEX_ERR_INVARIANT = 2, /* divergence, failed bound or invariant */
  SELFEX_ERR_IO = 3         /* file access, corruption, version */
};

typedef struct selfex_dataset selfex_dataset;
typedef struct selfex_model selfex_model;
typedef struct selfex_combined selfex_combined;

SELFEX_API const char* selfex_version(void);
SELFEX_API const char* selfex_last_error(void);
SELFEX_API void selfex_string_free(char* text);

/* Config text helpers. merge: entries of `overrides` replace those of `base`;
 * the result is normalised to one "key = value" line per entry, sorted.
 * get: *value is NULL when the key is absent. */
SELFEX_API int selfex_config_merge(const char* base, const char* overrides, char** merged);
/* Fills in defaults for the data, model, side, stage and optimizer sections
 * (a model.preset is expanded) and keeps every other key as given. */
SELFEX_API int selfex_config_resolve(const char* config, char** resolved);
SELFEX_API int selfex_config_get(const char* config, const char* key, char** value);

/* Datasets. Keys: data.* */
SELFEX_API int selfex_dataset_generate(const char* config, uint64_t seed,
                                       selfex_dataset** out);
SELFEX_API int selfex_dataset_load(const char* path, selfex_dataset** out);
SELFEX_API int selfex_dataset_save(const selfex_dataset* data, const char* path);
/* JSON with the generator parameters, seed and split sizes. */
SELFEX_API int selfex_dataset_describe(const selfex_dataset* data, char** json);
/* split is "train", "val" or "test". */
SELFEX_API int selfex_dataset_split_shape(const selfex_dataset* data, const char* split,
                                          size_t* rows, size_t* tokens, size_t* dim);
/* Copies one row (tokens * dim floats) into out. */
SELFEX_API int selfex_dataset_row(const selfex_dataset* data, const char* split,
                                  size_t row, float* out);
SELFEX_API void selfex_dataset_free(selfex_dataset* data);

/* Models of any checkpoint role: classifier, surrogate, explainer, duo, froyo. */
SELFEX_API int selfex_model_load(const char* path, selfex_model** out);
SELFEX_API int selfex_model_save(const selfex_model* model, const char* path);
/* JSON with role, config snapshot, parameter count and content digest. */
SELFEX_API int selfex_model_describe(const selfex_model* model, char** json);
SELFEX_API void selfex_model_free(selfex_model* model);

/* Runs one training stage. Keys: stage.*, optimizer.*, plus model.* for the
 * classifier stage and side.* for the side stages. stage.stage and
 * stage.pipeline choose the trainer:
 *   classifier                       -> classifier (no inputs)
 *   surrogate                        -> surrogate (backbone)
 *   explainer + autognothi           -> explainer (backbone, surrogate)
 *   explainer + froyo | duo          -> froyo | duo (backbone, surrogate)
 * The loss record (and, for duo, the gradient-cosine trace) is returned as
 * JSON when record_json is not NULL. */
SELFEX_API int selfex_train(const char* config, const selfex_dataset* data,
                            const selfex_model* backbone, const selfex_model* surrogate,
                            selfex_model** out, char** record_json);

/* Self-interpretable model: classifier, surrogate and side explainer. */
SELFEX_API int selfex_combined_create(const selfex_model* backbone,
                                      const selfex_model* surrogate,
                                      const selfex_model* explainer,
                                      selfex_combined** out);
/* tokens: batch x num_tokens x dim floats. Returns a JSON array with one
 * object per input: prediction, logits, attribution[d][classes],
 * efficiency_residual, full_values, empty_values. */
SELFEX_API int selfex_combined_explain(const selfex_combined* model, const float* tokens,
                                       size_t batch, size_t num_tokens, size_t dim,
                                       char** json);
SELFEX_API void selfex_combined_free(selfex_combined* model);

/* Accuracy and insertion/deletion faithfulness on a split. Keys: eval.*
 *   eval.split (test), eval.samples (200), eval.seed (0),
 *   eval.attribution: model | random | exact | kernelshap (model),
 *   eval.kernelshap_samples (4096).
 * `explainer` may be an explainer, duo or froyo model; it is required only
 * for eval.attribution = model. Curves are returned as CSV. */
SELFEX_API int selfex_evaluate(const char* config, const selfex_dataset* data,
                               const selfex_model* backbone, const selfex_model* surrogate,
                               const selfex_model* explainer, char** report_json,
                               char** curves_csv);

/* Keys: model.* (model.preset allowed), side.*; count.side = true|false. */
SELFEX_API int selfex_count_params(const char* config, char** json);
/* Keys: model.*, side.*. Classifier, separate and combined forward FLOPs. */
SELFEX_API int selfex_count_flops(const char* config, char** json);

/* Minimum-eigenvalue sweep for d = 2..max_d (max_d <= 16). Returns
 * SELFEX_ERR_INVARIANT when any difference reaches 1e-9. */
SELFEX_API int selfex_check_lemma(size_t max_d, char** json);
/* Explainer bound on held-out rows (d <= 12) and the convex decay check.
 * Keys: bounds.samples (50), bounds.masks (50000), bounds.seed (0),
 * bounds.split (test). Returns SELFEX_ERR_INVARIANT when a verdict that ran
 * fails; a skipped verdict is not a failure. */
SELFEX_API int selfex_check_bounds(const char* config, const selfex_dataset* data,
                                   const selfex_model* backbone,
                                   const selfex_model* surrogate,
                                   const selfex_model* explainer, char** json);

#ifdef __cplusplus
}
#endif

#endif /* SELFEX_C_API_H_ */
