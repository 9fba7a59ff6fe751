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

// Persistence and configuration: flat dotted key-value configs, binary
// checkpoints and dataset files, and JSON/CSV report exports.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "selfex/combined.hpp"
#include "selfex/data.hpp"
#include "selfex/evaluation.hpp"
#include "selfex/training.hpp"

namespace selfex {

// ---------------------------------------------------------------------------
// Config

// "section.key = value" lines; "[section]" headers prefix the keys that follow;
// '#' starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string& text);
ConfigMap load_config(const std::filesystem::path& path);
std::string format_config(const ConfigMap& config);
// Entries of `overrides` replace those of `base`.
ConfigMap merge_config(ConfigMap base, const ConfigMap& overrides);

// Typed access to the keys under one prefix. finish() raises ConfigError for
// any key under the prefix that was never asked for.
class ConfigReader {
 public:
  ConfigReader(const ConfigMap& config, std::string prefix);

  const std::string* raw(const std::string& name);
  void size(const std::string& name, std::size_t& out);
  void u64(const std::string& name, std::uint64_t& out);
  void real(const std::string& name, double& out);
  void flag(const std::string& name, bool& out);
  void text(const std::string& name, std::string& out);
  template <typename E, typename Parse>
  void choice(const std::string& name, E& out, Parse parse) {
    if (const auto* v = raw(name)) out = parse(*v);
  }
  void finish() const;

 private:
  [[noreturn]] void fail(const std::string& name, const std::string& value,
                         const char* expected) const;

  const ConfigMap& config_;
  std::string prefix_;
  std::set<std::string> seen_;
};

// Readers consume the keys under their prefix; keys they do not know raise
// ConfigError so typos never pass silently.
ModelConfig read_model_config(const ConfigMap& config, const ModelConfig& defaults = {});
SideConfig read_side_config(const ConfigMap& config, const SideConfig& defaults = {});
DatasetParams read_dataset_params(const ConfigMap& config,
                                  const DatasetParams& defaults = {});
StageConfig read_stage_config(const ConfigMap& config, const StageConfig& defaults = {});

void write_model_config(const ModelConfig& model, ConfigMap& out);
void write_side_config(const SideConfig& side, ConfigMap& out);
void write_dataset_params(const DatasetParams& params, ConfigMap& out);
void write_stage_config(const StageConfig& stage, ConfigMap& out);

// SELFEX_OUT_DIR when set, else "selfex_out".
std::filesystem::path default_output_dir();

// ---------------------------------------------------------------------------
// Checkpoints

enum class CheckpointRole { kClassifier, kSurrogate, kExplainer, kDuo, kFroyo };
std::string to_string(CheckpointRole role);
CheckpointRole parse_checkpoint_role(const std::string& text);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  CheckpointRole role = CheckpointRole::kClassifier;
  ConfigMap config;
  ParamList tensors;
};

// Layout: "AGN1", u32 version, u32 role, config text, tensors (name, shape,
// little-endian float32 values), then a 64-bit FNV-1a digest of everything
// after the magic.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const Classifier& model);
Checkpoint to_checkpoint(const SideModel& model);
Checkpoint to_checkpoint(const HeadExplainer& model, CheckpointRole role);
Classifier classifier_from(const Checkpoint& checkpoint);
SideModel side_model_from(const Checkpoint& checkpoint, SideRole expected);
HeadExplainer head_explainer_from(const Checkpoint& checkpoint);

// ---------------------------------------------------------------------------
// Datasets

std::string encode_dataset(const SyntheticDataset& data);
SyntheticDataset decode_dataset(const std::string& bytes);
void save_dataset(const SyntheticDataset& data, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Reports

std::string attribution_csv(const Attribution& attribution);
std::string attribution_json(const Attribution& attribution);
std::string loss_record_csv(const LossRecord& record);
std::string loss_record_json(const LossRecord& record);
std::string curve_csv(const InsertionDeletionCurve& curve);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace selfex
