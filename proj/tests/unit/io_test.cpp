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

#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "selfex/errors.hpp"
#include "selfex/io.hpp"

namespace selfex {
namespace {

ModelConfig toy_model() {
  ModelConfig c;
  c.depth = 2;
  c.hidden = 16;
  c.heads = 2;
  c.mlp_ratio = 2.0;
  c.num_tokens = 5;
  c.token_input_dim = 3;
  c.num_classes = 3;
  return c;
}

void expect_bit_equal(const ParamList& a, const ParamList& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    ASSERT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    auto x = a[i].tensor.data();
    auto y = b[i].tensor.data();
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size_bytes()), 0) << a[i].name;
  }
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("selfex_io_test_" + name);
}

TEST(Config, ParsesSectionsCommentsAndOverrides) {
  const ConfigMap c = parse_config(
      "# run\nmodel.depth = 3\n[data]\nkind = linear-logit  # trailing\n\n"
      "train=10\n");
  EXPECT_EQ(c.at("model.depth"), "3");
  EXPECT_EQ(c.at("data.kind"), "linear-logit");
  EXPECT_EQ(c.at("data.train"), "10");
  const ConfigMap merged = merge_config(c, {{"data.train", "20"}});
  EXPECT_EQ(merged.at("data.train"), "20");
  EXPECT_EQ(merged.at("model.depth"), "3");
}

TEST(Config, RejectsMalformedLinesAndUnknownKeys) {
  EXPECT_THROW(parse_config("no equals sign"), ConfigError);
  EXPECT_THROW(parse_config("[open"), ConfigError);
  EXPECT_THROW(read_model_config({{"model.dept", "2"}}), ConfigError);
  EXPECT_THROW(read_model_config({{"model.depth", "two"}}), ConfigError);
  EXPECT_THROW(read_stage_config({{"optimizer.step_size", "nan"}}), ConfigError);
}

TEST(Config, WriteThenReadRoundTrips) {
  ConfigMap c;
  const ModelConfig m = toy_model();
  SideConfig s;
  s.reduction = 4;
  s.role = SideRole::kExplainer;
  s.readout = ExplainerReadout::kTokens;
  DatasetParams p;
  p.kind = DatasetKind::kLinearLogit;
  p.weight_scale = 0.1 + 0.2;  // not exactly representable as a short decimal
  StageConfig st;
  st.stage = Stage::kExplainer;
  st.optimizer.step_size = 3e-4;
  st.seed = 123456789012345ULL;
  write_model_config(m, c);
  write_side_config(s, c);
  write_dataset_params(p, c);
  write_stage_config(st, c);
  const ConfigMap back = parse_config(format_config(c));
  EXPECT_EQ(read_model_config(back), m);
  EXPECT_EQ(read_side_config(back), s);
  EXPECT_EQ(read_dataset_params(back), p);
  const StageConfig st2 = read_stage_config(back);
  EXPECT_EQ(st2.stage, Stage::kExplainer);
  EXPECT_EQ(st2.seed, st.seed);
  EXPECT_EQ(st2.optimizer.step_size, st.optimizer.step_size);
}

TEST(Config, PresetThenOverride) {
  const ModelConfig m = read_model_config({{"model.preset", "vit-base"},
                                           {"model.num_classes", "5"}});
  EXPECT_EQ(m.hidden, 768u);
  EXPECT_EQ(m.num_classes, 5u);
}

TEST(Checkpoint, ClassifierRoundTripIsBitEqual) {
  Rng rng(3);
  const Classifier model = Classifier::create(toy_model(), rng);
  const auto path = temp_path("classifier.agn");
  save_checkpoint(to_checkpoint(model), path);
  const Classifier back = classifier_from(load_checkpoint(path));
  EXPECT_EQ(back.config(), model.config());
  expect_bit_equal(model.parameters(), back.parameters());
  std::filesystem::remove(path);
}

TEST(Checkpoint, SideAndHeadModelsRoundTrip) {
  Rng rng(4);
  const Classifier model = Classifier::create(toy_model(), rng);
  SideConfig s;
  s.reduction = 2;
  const SideModel surrogate = SideModel::create(model.config(), s, rng);
  const SideModel explainer =
      SideModel::explainer_from(surrogate, 2, ExplainerReadout::kTokens, rng);
  expect_bit_equal(surrogate.parameters(),
                   side_model_from(decode_checkpoint(encode_checkpoint(to_checkpoint(surrogate))),
                                   SideRole::kSurrogate)
                       .parameters());
  const SideModel e2 = side_model_from(
      decode_checkpoint(encode_checkpoint(to_checkpoint(explainer))), SideRole::kExplainer);
  EXPECT_EQ(e2.side_config(), explainer.side_config());
  expect_bit_equal(explainer.parameters(), e2.parameters());

  const HeadExplainer head = HeadExplainer::create(model, 1, ExplainerReadout::kTokens, rng);
  const HeadExplainer h2 = head_explainer_from(
      decode_checkpoint(encode_checkpoint(to_checkpoint(head, CheckpointRole::kDuo))));
  expect_bit_equal(head.head_parameters(), h2.head_parameters());
  expect_bit_equal(head.classifier.parameters(), h2.classifier.parameters());
}

TEST(Checkpoint, EncodingIsDeterministic) {
  Rng a(9), b(9);
  const auto x = encode_checkpoint(to_checkpoint(Classifier::create(toy_model(), a)));
  const auto y = encode_checkpoint(to_checkpoint(Classifier::create(toy_model(), b)));
  EXPECT_EQ(x, y);
}

TEST(Checkpoint, TruncationAndBitFlipsAreCorruption) {
  Rng rng(5);
  const std::string bytes = encode_checkpoint(to_checkpoint(Classifier::create(toy_model(), rng)));
  for (std::size_t keep : {std::size_t(0), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, keep)), CorruptionError) << keep;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), CorruptionError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CorruptionError);
}

TEST(Checkpoint, VersionMismatchIsVersionError) {
  Rng rng(5);
  std::string bytes = encode_checkpoint(to_checkpoint(Classifier::create(toy_model(), rng)));
  const std::uint32_t future = kCheckpointVersion + 1;
  std::memcpy(bytes.data() + 4, &future, sizeof future);
  EXPECT_THROW(decode_checkpoint(bytes), VersionError);
}

TEST(Checkpoint, WrongSlotIsRoleError) {
  Rng rng(6);
  const Classifier model = Classifier::create(toy_model(), rng);
  SideConfig s;
  s.reduction = 2;
  const Checkpoint ck = to_checkpoint(SideModel::create(model.config(), s, rng));
  EXPECT_THROW(side_model_from(ck, SideRole::kExplainer), RoleError);
  EXPECT_THROW(classifier_from(ck), RoleError);
  EXPECT_THROW(head_explainer_from(ck), RoleError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist")), IoError);
}

TEST(DatasetFile, RoundTripsBitExactly) {
  DatasetParams p;
  p.train = 40;
  p.val = 10;
  p.test = 10;
  const SyntheticDataset d = generate_dataset(p, 77);
  const std::string bytes = encode_dataset(d);
  const SyntheticDataset back = decode_dataset(bytes);
  EXPECT_EQ(back.params, d.params);
  EXPECT_EQ(back.seed, d.seed);
  EXPECT_EQ(back.train.tokens, d.train.tokens);
  EXPECT_EQ(back.test.labels, d.test.labels);
  EXPECT_EQ(back.val.signal, d.val.signal);
  EXPECT_EQ(encode_dataset(back), bytes);
  EXPECT_THROW(decode_dataset(bytes.substr(0, bytes.size() - 3)), CorruptionError);
}

TEST(Reports, AttributionExports) {
  Attribution a = Attribution::zeros(2, 2);
  a.at(0, 0) = 0.5;
  a.at(1, 1) = -0.25;
  EXPECT_EQ(attribution_csv(a), "feature,class_0,class_1\n0,0.5,0\n1,0,-0.25\n");
  const std::string json = attribution_json(a);
  EXPECT_NE(json.find("\"players\": 2"), std::string::npos);
  EXPECT_NE(json.find("-0.25"), std::string::npos);
}

TEST(Reports, LossRecordJsonWritesNullForMissingValues) {
  LossRecord r;
  r.step_loss = {1.0, 0.5};
  r.val_loss = {0.7};
  r.best_epoch = 1;
  const std::string json = loss_record_json(r);
  EXPECT_NE(json.find("\"optimal_loss\": null"), std::string::npos);
  EXPECT_NE(json.find("\"best_epoch\": 1"), std::string::npos);
}

TEST(Paths, OutputDirFollowsEnvironment) {
  ::setenv("SELFEX_OUT_DIR", "/tmp/selfex_env_dir", 1);
  EXPECT_EQ(default_output_dir(), std::filesystem::path("/tmp/selfex_env_dir"));
  ::unsetenv("SELFEX_OUT_DIR");
  EXPECT_EQ(default_output_dir(), std::filesystem::path("selfex_out"));
}

}  // namespace
}  // namespace selfex
