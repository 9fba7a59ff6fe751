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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "selfex/c_api.h"

namespace {

using nlohmann::json;

std::string take(char* text) {
  std::string out = text ? text : "";
  selfex_string_free(text);
  return out;
}

std::string temp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("selfex_capi_" + name)).string();
}

const char* kConfig = R"(
[data]
num_tokens = 5
token_dim = 3
signal_tokens = 2
train = 48
val = 12
test = 12
[model]
depth = 1
hidden = 8
heads = 2
mlp_ratio = 2
num_tokens = 5
token_input_dim = 3
[side]
reduction = 2
head_depth = 1
readout = tokens
[stage]
epochs = 1
steps_per_epoch = 2
batch_size = 8
masks_per_input = 4
val_inputs = 4
val_masks = 4
)";

std::string with_stage(const std::string& stage, const std::string& pipeline = "autognothi") {
  char* merged = nullptr;
  const std::string extra = "stage.stage = " + stage + "\nstage.pipeline = " + pipeline + "\n";
  EXPECT_EQ(selfex_config_merge(kConfig, extra.c_str(), &merged), SELFEX_OK);
  return take(merged);
}

struct Pipeline : ::testing::Test {
  void SetUp() override {
    ASSERT_EQ(selfex_dataset_generate(kConfig, 5, &data), SELFEX_OK) << selfex_last_error();
    ASSERT_EQ(selfex_train(with_stage("classifier").c_str(), data, nullptr, nullptr,
                           &backbone, nullptr),
              SELFEX_OK)
        << selfex_last_error();
    ASSERT_EQ(selfex_train(with_stage("surrogate").c_str(), data, backbone, nullptr,
                           &surrogate, nullptr),
              SELFEX_OK)
        << selfex_last_error();
    ASSERT_EQ(selfex_train(with_stage("explainer").c_str(), data, backbone, surrogate,
                           &explainer, nullptr),
              SELFEX_OK)
        << selfex_last_error();
  }
  void TearDown() override {
    selfex_model_free(explainer);
    selfex_model_free(surrogate);
    selfex_model_free(backbone);
    selfex_dataset_free(data);
  }
  selfex_dataset* data = nullptr;
  selfex_model* backbone = nullptr;
  selfex_model* surrogate = nullptr;
  selfex_model* explainer = nullptr;
};

TEST(CApi, NullArgumentsAreUsageErrors) {
  EXPECT_STRNE(selfex_version(), "");
  EXPECT_EQ(selfex_dataset_save(nullptr, "x"), SELFEX_ERR_USAGE);
  EXPECT_NE(std::string(selfex_last_error()).find("NULL"), std::string::npos);
  selfex_dataset_free(nullptr);
  selfex_model_free(nullptr);
  selfex_combined_free(nullptr);
  selfex_string_free(nullptr);
}

TEST(CApi, ConfigHelpers) {
  char* merged = nullptr;
  ASSERT_EQ(selfex_config_merge("a.x = 1\na.y = 2", "a.y = 3", &merged), SELFEX_OK);
  const std::string text = take(merged);
  EXPECT_EQ(text, "a.x = 1\na.y = 3\n");
  char* value = nullptr;
  ASSERT_EQ(selfex_config_get(text.c_str(), "a.y", &value), SELFEX_OK);
  EXPECT_EQ(take(value), "3");
  ASSERT_EQ(selfex_config_get(text.c_str(), "a.z", &value), SELFEX_OK);
  EXPECT_EQ(value, nullptr);
  char* resolved = nullptr;
  ASSERT_EQ(selfex_config_resolve("model.preset = vit-small\nrun.seed = 4", &resolved),
            SELFEX_OK);
  const std::string full = take(resolved);
  EXPECT_NE(full.find("model.hidden = 384"), std::string::npos);
  EXPECT_NE(full.find("run.seed = 4"), std::string::npos);
  EXPECT_EQ(full.find("model.preset"), std::string::npos);
  EXPECT_EQ(selfex_config_merge("broken line", "", &merged), SELFEX_ERR_USAGE);
}

TEST(CApi, DatasetRoundTripAndErrors) {
  selfex_dataset* d = nullptr;
  ASSERT_EQ(selfex_dataset_generate(kConfig, 9, &d), SELFEX_OK);
  const std::string path = temp("data.agnd");
  ASSERT_EQ(selfex_dataset_save(d, path.c_str()), SELFEX_OK);
  selfex_dataset* back = nullptr;
  ASSERT_EQ(selfex_dataset_load(path.c_str(), &back), SELFEX_OK);
  char* a = nullptr;
  char* b = nullptr;
  selfex_dataset_describe(d, &a);
  selfex_dataset_describe(back, &b);
  EXPECT_EQ(take(a), take(b));
  std::size_t rows = 0, tokens = 0, dim = 0;
  ASSERT_EQ(selfex_dataset_split_shape(back, "val", &rows, &tokens, &dim), SELFEX_OK);
  EXPECT_EQ(rows, 12u);
  EXPECT_EQ(tokens, 5u);
  std::vector<float> row(tokens * dim);
  EXPECT_EQ(selfex_dataset_row(back, "val", 11, row.data()), SELFEX_OK);
  EXPECT_EQ(selfex_dataset_row(back, "val", 12, row.data()), SELFEX_ERR_USAGE);
  EXPECT_EQ(selfex_dataset_split_shape(back, "holdout", &rows, &tokens, &dim),
            SELFEX_ERR_USAGE);
  selfex_dataset_free(back);
  selfex_dataset_free(d);

  selfex_dataset* bad = nullptr;
  EXPECT_EQ(selfex_dataset_generate("data.signal_tokens = 99", 1, &bad), SELFEX_ERR_USAGE);
  EXPECT_EQ(selfex_dataset_load(temp("missing").c_str(), &bad), SELFEX_ERR_IO);
  std::filesystem::resize_file(path, 40);
  EXPECT_EQ(selfex_dataset_load(path.c_str(), &bad), SELFEX_ERR_IO);
  std::filesystem::remove(path);
}

TEST_F(Pipeline, CheckpointsRoundTripThroughFiles) {
  for (selfex_model* m : {backbone, surrogate, explainer}) {
    const std::string path = temp("model.agn");
    ASSERT_EQ(selfex_model_save(m, path.c_str()), SELFEX_OK);
    selfex_model* back = nullptr;
    ASSERT_EQ(selfex_model_load(path.c_str(), &back), SELFEX_OK);
    char* a = nullptr;
    char* b = nullptr;
    selfex_model_describe(m, &a);
    selfex_model_describe(back, &b);
    EXPECT_EQ(take(a), take(b));
    selfex_model_free(back);
    std::filesystem::remove(path);
  }
}

TEST_F(Pipeline, SlotsCheckRoles) {
  selfex_model* out = nullptr;
  EXPECT_EQ(selfex_train(with_stage("surrogate").c_str(), data, surrogate, nullptr, &out,
                         nullptr),
            SELFEX_ERR_USAGE);
  EXPECT_EQ(selfex_train(with_stage("explainer").c_str(), data, backbone, explainer, &out,
                         nullptr),
            SELFEX_ERR_USAGE);
  selfex_combined* c = nullptr;
  EXPECT_EQ(selfex_combined_create(backbone, explainer, explainer, &c), SELFEX_ERR_USAGE);
}

TEST_F(Pipeline, ExplainEmitsEfficientAttributions) {
  selfex_combined* c = nullptr;
  ASSERT_EQ(selfex_combined_create(backbone, surrogate, explainer, &c), SELFEX_OK);
  std::vector<float> x(2 * 5 * 3);
  ASSERT_EQ(selfex_dataset_row(data, "test", 0, x.data()), SELFEX_OK);
  ASSERT_EQ(selfex_dataset_row(data, "test", 1, x.data() + 15), SELFEX_OK);
  char* out = nullptr;
  ASSERT_EQ(selfex_combined_explain(c, x.data(), 2, 5, 3, &out), SELFEX_OK);
  const json j = json::parse(take(out));
  ASSERT_EQ(j.size(), 2u);
  for (const auto& item : j) {
    EXPECT_LT(item.at("efficiency_residual").get<double>(), 1e-5);
    EXPECT_EQ(item.at("attribution").size(), 5u);
    EXPECT_EQ(item.at("attribution")[0].size(), 2u);
    EXPECT_TRUE(item.contains("prediction"));
    EXPECT_TRUE(item.contains("logits"));
  }
  EXPECT_EQ(selfex_combined_explain(c, x.data(), 1, 4, 3, &out), SELFEX_ERR_USAGE);
  selfex_combined_free(c);
}

TEST_F(Pipeline, EvaluateAndHeadPipelines) {
  selfex_model* duo = nullptr;
  char* record = nullptr;
  ASSERT_EQ(selfex_train(with_stage("explainer", "duo").c_str(), data, backbone, surrogate,
                         &duo, &record),
            SELFEX_OK)
      << selfex_last_error();
  const json r = json::parse(take(record));
  EXPECT_EQ(r.at("role"), "duo");
  EXPECT_EQ(r.at("gradient_cosine").size(), 2u);

  char* report = nullptr;
  char* curves = nullptr;
  ASSERT_EQ(selfex_evaluate("eval.samples = 4", data, backbone, surrogate, duo, &report,
                            &curves),
            SELFEX_OK)
      << selfex_last_error();
  const json e = json::parse(take(report));
  EXPECT_EQ(e.at("samples"), 4);
  EXPECT_EQ(e.at("layer_cka").size(), 1u);
  EXPECT_EQ(take(curves).substr(0, 27), "fraction,insertion,deletion");
  ASSERT_EQ(selfex_evaluate("eval.samples = 4\neval.attribution = exact", data, backbone,
                            surrogate, nullptr, &report, nullptr),
            SELFEX_OK);
  EXPECT_LT(json::parse(take(report)).at("max_efficiency_residual").get<double>(), 1e-9);
  EXPECT_EQ(selfex_evaluate("eval.attribution = lime", data, backbone, surrogate, nullptr,
                            &report, nullptr),
            SELFEX_ERR_USAGE);
  selfex_model_free(duo);
}

TEST_F(Pipeline, BoundsReportBothVerdicts) {
  char* out = nullptr;
  const int status = selfex_check_bounds("bounds.samples = 3\nbounds.masks = 2000", data,
                                         backbone, surrogate, explainer, &out);
  const json j = json::parse(take(out));
  EXPECT_FALSE(j.at("explainer_bound").at("skipped").get<bool>());
  EXPECT_TRUE(j.at("convex_decay").at("pass").get<bool>());
  EXPECT_EQ(status == SELFEX_OK, j.at("explainer_bound").at("pass").get<bool>());
}

TEST(CApi, LemmaAndCounts) {
  char* out = nullptr;
  ASSERT_EQ(selfex_check_lemma(16, &out), SELFEX_OK);
  const json lemma = json::parse(take(out));
  EXPECT_EQ(lemma.at("rows").size(), 15u);
  EXPECT_TRUE(lemma.at("pass").get<bool>());
  EXPECT_EQ(selfex_check_lemma(17, &out), SELFEX_ERR_USAGE);

  ASSERT_EQ(selfex_count_params("model.preset = vit-base\nside.reduction = 8", &out),
            SELFEX_OK);
  const json p = json::parse(take(out));
  EXPECT_NEAR(p.at("side_params").get<double>() / 1e6, 2.23, 0.223);
  EXPECT_GE(p.at("trainable_reduction_percent").get<double>(), 95.0);
  ASSERT_EQ(selfex_count_flops("model.preset = vit-base\nside.reduction = 8", &out),
            SELFEX_OK);
  const json f = json::parse(take(out));
  EXPECT_LT(f.at("combined_gflops").get<double>(), f.at("separate_gflops").get<double>());
  EXPECT_EQ(selfex_count_params("side.reduction = 7", &out), SELFEX_ERR_USAGE);
}

}  // namespace
