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

#include "selfex/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selfex/digest.hpp"
#include "selfex/errors.hpp"

namespace selfex {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config text

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

ConfigReader::ConfigReader(const ConfigMap& config, std::string prefix)
    : config_(config), prefix_(std::move(prefix)) {}

const std::string* ConfigReader::raw(const std::string& name) {
  const std::string key = prefix_ + name;
  seen_.insert(key);
  auto it = config_.find(key);
  return it == config_.end() ? nullptr : &it->second;
}

void ConfigReader::size(const std::string& name, std::size_t& out) {
  if (const auto* v = raw(name)) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
    if (ec != std::errc() || ptr != v->data() + v->size()) fail(name, *v, "an unsigned integer");
    out = value;
  }
}

void ConfigReader::u64(const std::string& name, std::uint64_t& out) {
  if (const auto* v = raw(name)) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
    if (ec != std::errc() || ptr != v->data() + v->size()) fail(name, *v, "an unsigned integer");
    out = value;
  }
}

void ConfigReader::real(const std::string& name, double& out) {
  if (const auto* v = raw(name)) {
    double value = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
    if (ec != std::errc() || ptr != v->data() + v->size() || !std::isfinite(value)) {
      fail(name, *v, "a finite number");
    }
    out = value;
  }
}

void ConfigReader::flag(const std::string& name, bool& out) {
  if (const auto* v = raw(name)) {
    if (*v == "true" || *v == "1") {
      out = true;
    } else if (*v == "false" || *v == "0") {
      out = false;
    } else {
      fail(name, *v, "true or false");
    }
  }
}

void ConfigReader::text(const std::string& name, std::string& out) {
  if (const auto* v = raw(name)) out = *v;
}

void ConfigReader::finish() const {
  for (const auto& [key, value] : config_) {
    if (key.rfind(prefix_, 0) == 0 && !seen_.count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

void ConfigReader::fail(const std::string& name, const std::string& value,
                        const char* expected) const {
  throw ConfigError("config key '" + prefix_ + name + "' = '" + value + "' is not " +
                    expected);
}

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (!section.empty()) section += '.';
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out[section + key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::string format_config(const ConfigMap& config) {
  std::string out;
  for (const auto& [key, value] : config) out += key + " = " + value + "\n";
  return out;
}

ConfigMap merge_config(ConfigMap base, const ConfigMap& overrides) {
  for (const auto& [key, value] : overrides) base[key] = value;
  return base;
}

ModelConfig read_model_config(const ConfigMap& config, const ModelConfig& defaults) {
  ModelConfig m = defaults;
  ConfigReader r(config, "model.");
  if (const auto* preset = r.raw("preset")) m = model_preset(*preset);
  r.size("depth", m.depth);
  r.size("hidden", m.hidden);
  r.size("heads", m.heads);
  r.real("mlp_ratio", m.mlp_ratio);
  r.size("num_tokens", m.num_tokens);
  r.size("token_input_dim", m.token_input_dim);
  r.size("num_classes", m.num_classes);
  r.flag("embedding", m.embedding);
  r.flag("positional", m.positional);
  r.finish();
  m.validate();
  return m;
}

SideConfig read_side_config(const ConfigMap& config, const SideConfig& defaults) {
  SideConfig s = defaults;
  ConfigReader r(config, "side.");
  r.size("reduction", s.reduction);
  r.choice("role", s.role, parse_side_role);
  r.size("head_depth", s.head_depth);
  r.choice("readout", s.readout, parse_explainer_readout);
  r.finish();
  return s;
}

DatasetParams read_dataset_params(const ConfigMap& config, const DatasetParams& defaults) {
  DatasetParams p = defaults;
  ConfigReader r(config, "data.");
  r.choice("kind", p.kind, parse_dataset_kind);
  r.size("num_tokens", p.num_tokens);
  r.size("token_dim", p.token_dim);
  r.size("num_classes", p.num_classes);
  r.size("signal_tokens", p.signal_tokens);
  r.real("signal_spread", p.signal_spread);
  r.real("weight_scale", p.weight_scale);
  r.size("train", p.train);
  r.size("val", p.val);
  r.size("test", p.test);
  r.finish();
  p.validate();
  return p;
}

StageConfig read_stage_config(const ConfigMap& config, const StageConfig& defaults) {
  StageConfig s = defaults;
  ConfigReader r(config, "stage.");
  r.choice("stage", s.stage, parse_stage);
  r.choice("pipeline", s.pipeline, parse_pipeline);
  r.size("epochs", s.epochs);
  r.size("batch_size", s.batch_size);
  r.size("masks_per_input", s.masks_per_input);
  r.size("inputs_per_batch", s.inputs_per_batch);
  r.size("steps_per_epoch", s.steps_per_epoch);
  r.size("val_inputs", s.val_inputs);
  r.size("val_masks", s.val_masks);
  r.u64("seed", s.seed);
  r.choice("classifier_loss", s.classifier_loss, parse_classifier_loss);
  r.choice("label_mode", s.label_mode, parse_label_mode);
  r.finish();
  ConfigReader o(config, "optimizer.");
  o.choice("scheme", s.optimizer.scheme, parse_optimizer_scheme);
  o.real("step_size", s.optimizer.step_size);
  o.size("steps", s.optimizer.steps);
  o.real("beta1", s.optimizer.beta1);
  o.real("beta2", s.optimizer.beta2);
  o.real("epsilon", s.optimizer.epsilon);
  o.real("weight_decay", s.optimizer.weight_decay);
  o.finish();
  s.validate();
  return s;
}

void write_model_config(const ModelConfig& m, ConfigMap& out) {
  out["model.depth"] = std::to_string(m.depth);
  out["model.hidden"] = std::to_string(m.hidden);
  out["model.heads"] = std::to_string(m.heads);
  out["model.mlp_ratio"] = format_double(m.mlp_ratio);
  out["model.num_tokens"] = std::to_string(m.num_tokens);
  out["model.token_input_dim"] = std::to_string(m.token_input_dim);
  out["model.num_classes"] = std::to_string(m.num_classes);
  out["model.embedding"] = m.embedding ? "true" : "false";
  out["model.positional"] = m.positional ? "true" : "false";
}

void write_side_config(const SideConfig& s, ConfigMap& out) {
  out["side.reduction"] = std::to_string(s.reduction);
  out["side.role"] = to_string(s.role);
  out["side.head_depth"] = std::to_string(s.head_depth);
  out["side.readout"] = to_string(s.readout);
}

void write_dataset_params(const DatasetParams& p, ConfigMap& out) {
  out["data.kind"] = to_string(p.kind);
  out["data.num_tokens"] = std::to_string(p.num_tokens);
  out["data.token_dim"] = std::to_string(p.token_dim);
  out["data.num_classes"] = std::to_string(p.num_classes);
  out["data.signal_tokens"] = std::to_string(p.signal_tokens);
  out["data.signal_spread"] = format_double(p.signal_spread);
  out["data.weight_scale"] = format_double(p.weight_scale);
  out["data.train"] = std::to_string(p.train);
  out["data.val"] = std::to_string(p.val);
  out["data.test"] = std::to_string(p.test);
}

void write_stage_config(const StageConfig& s, ConfigMap& out) {
  out["stage.stage"] = to_string(s.stage);
  out["stage.pipeline"] = to_string(s.pipeline);
  out["stage.epochs"] = std::to_string(s.epochs);
  out["stage.batch_size"] = std::to_string(s.batch_size);
  out["stage.masks_per_input"] = std::to_string(s.masks_per_input);
  out["stage.inputs_per_batch"] = std::to_string(s.inputs_per_batch);
  out["stage.steps_per_epoch"] = std::to_string(s.steps_per_epoch);
  out["stage.val_inputs"] = std::to_string(s.val_inputs);
  out["stage.val_masks"] = std::to_string(s.val_masks);
  out["stage.seed"] = std::to_string(s.seed);
  out["stage.classifier_loss"] = to_string(s.classifier_loss);
  out["stage.label_mode"] = to_string(s.label_mode);
  out["optimizer.scheme"] = to_string(s.optimizer.scheme);
  out["optimizer.step_size"] = format_double(s.optimizer.step_size);
  out["optimizer.steps"] = std::to_string(s.optimizer.steps);
  out["optimizer.beta1"] = format_double(s.optimizer.beta1);
  out["optimizer.beta2"] = format_double(s.optimizer.beta2);
  out["optimizer.epsilon"] = format_double(s.optimizer.epsilon);
  out["optimizer.weight_decay"] = format_double(s.optimizer.weight_decay);
}

fs::path default_output_dir() {
  const char* env = std::getenv("SELFEX_OUT_DIR");
  return (env && *env) ? fs::path(env) : fs::path("selfex_out");
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Binary encoding

namespace {

class ByteWriter {
 public:
  explicit ByteWriter(const char* magic) : bytes_(magic, 4) {}

  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    bytes_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  template <typename T>
  void put_array(const T* data, std::size_t n) {
    put(static_cast<std::uint64_t>(n));
    bytes_.append(reinterpret_cast<const char*>(data), n * sizeof(T));
  }
  std::string finish() {
    const std::uint64_t digest = fnv1a(bytes_.data() + 4, bytes_.size() - 4);
    put(digest);
    return std::move(bytes_);
  }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const char* magic, const char* what)
      : bytes_(bytes), what_(what) {
    if (bytes.size() < 4 + 4 + 8 || std::memcmp(bytes.data(), magic, 4) != 0) {
      throw CorruptionError(std::string(what) + ": bad magic or truncated header");
    }
    pos_ = 4;
  }

  // Call after reading the version.
  void verify_digest() const {
    const std::size_t body = bytes_.size() - 8;
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes_.data() + body, 8);
    if (fnv1a(bytes_.data() + 4, body - 4) != stored) {
      throw CorruptionError(std::string(what_) + ": digest mismatch (truncated or corrupted)");
    }
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> get_array() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(T)) truncated();
    std::vector<T> out(n);
    if (n != 0) std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return out;
  }
  void expect_end() const {
    if (pos_ + 8 != bytes_.size()) {
      throw CorruptionError(std::string(what_) + ": trailing bytes before digest");
    }
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n + 8 > bytes_.size()) truncated();
  }
  [[noreturn]] void truncated() const {
    throw CorruptionError(std::string(what_) + ": truncated payload");
  }

  const std::string& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_string(CheckpointRole role) {
  switch (role) {
    case CheckpointRole::kClassifier: return "classifier";
    case CheckpointRole::kSurrogate: return "surrogate";
    case CheckpointRole::kExplainer: return "explainer";
    case CheckpointRole::kDuo: return "duo";
    case CheckpointRole::kFroyo: return "froyo";
  }
  return "?";
}

CheckpointRole parse_checkpoint_role(const std::string& text) {
  for (auto r : {CheckpointRole::kClassifier, CheckpointRole::kSurrogate,
                 CheckpointRole::kExplainer, CheckpointRole::kDuo, CheckpointRole::kFroyo}) {
    if (to_string(r) == text) return r;
  }
  throw ConfigError("unknown checkpoint role '" + text + "'");
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  ByteWriter w("AGN1");
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(checkpoint.role));
  w.put_string(format_config(checkpoint.config));
  w.put(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& p : checkpoint.tensors) {
    w.put_string(p.name);
    const Shape& shape = p.tensor.shape();
    w.put(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t dim : shape) w.put(static_cast<std::uint64_t>(dim));
    auto values = p.tensor.data();
    w.put_array(values.data(), values.size());
  }
  return w.finish();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  ByteReader r(bytes, "AGN1", "checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  r.verify_digest();
  Checkpoint ck;
  const auto role = r.get<std::uint32_t>();
  if (role > static_cast<std::uint32_t>(CheckpointRole::kFroyo)) {
    throw CorruptionError("checkpoint: unknown role code " + std::to_string(role));
  }
  ck.role = static_cast<CheckpointRole>(role);
  ck.config = parse_config(r.get_string());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CorruptionError("checkpoint: tensor '" + name + "' has rank " +
                                        std::to_string(rank));
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      numel *= shape.back();
    }
    auto values = r.get_array<float>();
    if (values.size() != numel) {
      throw CorruptionError("checkpoint: tensor '" + name + "' holds " +
                            std::to_string(values.size()) + " values for shape " +
                            shape_to_string(shape));
    }
    ck.tensors.push_back({std::move(name), Tensor::from_data(shape, std::move(values))});
  }
  r.expect_end();
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const fs::path& path) {
  return decode_checkpoint(read_file(path));
}

namespace {

ParamList snapshot(const ParamList& params) {
  ParamList out;
  for (const auto& p : params) out.push_back({p.name, p.tensor.detach()});
  return out;
}

void expect_role(const Checkpoint& ck, CheckpointRole expected) {
  if (ck.role != expected) {
    throw RoleError("checkpoint holds a " + to_string(ck.role) + " model, expected " +
                    to_string(expected));
  }
}

// Only the keys of one prefix are handed to each reader.
ConfigMap with_prefix(const ConfigMap& config, const std::string& prefix) {
  ConfigMap out;
  for (const auto& [k, v] : config) {
    if (k.rfind(prefix, 0) == 0) out[k] = v;
  }
  return out;
}

void load_into(const Checkpoint& ck, ParamList dst) {
  try {
    copy_parameters(ck.tensors, dst);
  } catch (const ContractError& e) {
    throw CorruptionError(std::string("checkpoint tensors do not match its config: ") +
                          e.what());
  }
}

}  // namespace

Checkpoint to_checkpoint(const Classifier& model) {
  Checkpoint ck;
  ck.role = CheckpointRole::kClassifier;
  write_model_config(model.config(), ck.config);
  ck.tensors = snapshot(model.parameters());
  return ck;
}

Checkpoint to_checkpoint(const SideModel& model) {
  Checkpoint ck;
  ck.role = model.role() == SideRole::kSurrogate ? CheckpointRole::kSurrogate
                                                 : CheckpointRole::kExplainer;
  write_model_config(model.model_config(), ck.config);
  write_side_config(model.side_config(), ck.config);
  ck.tensors = snapshot(model.parameters());
  return ck;
}

Checkpoint to_checkpoint(const HeadExplainer& model, CheckpointRole role) {
  if (role != CheckpointRole::kDuo && role != CheckpointRole::kFroyo) {
    throw RoleError("head explainers are stored as duo or froyo, not " + to_string(role));
  }
  Checkpoint ck;
  ck.role = role;
  write_model_config(model.classifier.config(), ck.config);
  ck.config["head.depth"] = std::to_string(model.head.hidden.size());
  ck.config["head.readout"] = to_string(model.head.readout);
  ck.tensors = snapshot(model.classifier.parameters());
  for (auto& p : snapshot(model.head_parameters())) ck.tensors.push_back(p);
  return ck;
}

Classifier classifier_from(const Checkpoint& ck) {
  expect_role(ck, CheckpointRole::kClassifier);
  const ModelConfig config = read_model_config(with_prefix(ck.config, "model."));
  Rng rng(0);
  Classifier model = Classifier::create(config, rng);
  load_into(ck, model.parameters());
  return model;
}

SideModel side_model_from(const Checkpoint& ck, SideRole expected) {
  expect_role(ck, expected == SideRole::kSurrogate ? CheckpointRole::kSurrogate
                                                   : CheckpointRole::kExplainer);
  const ModelConfig model = read_model_config(with_prefix(ck.config, "model."));
  const SideConfig side = read_side_config(with_prefix(ck.config, "side."));
  if (side.role != expected) {
    throw CorruptionError("checkpoint role and side.role disagree");
  }
  Rng rng(0);
  SideModel s = SideModel::create(model, side, rng);
  load_into(ck, s.parameters());
  return s;
}

HeadExplainer head_explainer_from(const Checkpoint& ck) {
  if (ck.role != CheckpointRole::kDuo && ck.role != CheckpointRole::kFroyo) {
    throw RoleError("checkpoint holds a " + to_string(ck.role) +
                    " model, expected duo or froyo");
  }
  const ModelConfig model = read_model_config(with_prefix(ck.config, "model."));
  std::size_t depth = 0;
  ExplainerReadout readout = ExplainerReadout::kClassToken;
  {
    ConfigReader r(ck.config, "head.");
    r.size("depth", depth);
    r.choice("readout", readout, parse_explainer_readout);
    r.finish();
  }
  Rng rng(0);
  HeadExplainer h = HeadExplainer::create(Classifier::create(model, rng), depth, readout, rng);
  ParamList dst = h.classifier.parameters();
  for (auto& p : h.head_parameters()) dst.push_back(p);
  load_into(ck, dst);
  return h;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

void put_split(ByteWriter& w, const Split& s) {
  w.put(static_cast<std::uint64_t>(s.num_tokens));
  w.put(static_cast<std::uint64_t>(s.token_dim));
  w.put_array(s.tokens.data(), s.tokens.size());
  w.put_array(s.labels.data(), s.labels.size());
  w.put_array(s.signal.data(), s.signal.size());
}

Split get_split(ByteReader& r) {
  Split s;
  s.num_tokens = static_cast<std::size_t>(r.get<std::uint64_t>());
  s.token_dim = static_cast<std::size_t>(r.get<std::uint64_t>());
  s.tokens = r.get_array<float>();
  s.labels = r.get_array<std::int32_t>();
  s.signal = r.get_array<std::uint8_t>();
  const std::size_t n = s.labels.size();
  if (s.tokens.size() != n * s.num_tokens * s.token_dim ||
      (!s.signal.empty() && s.signal.size() != n * s.num_tokens)) {
    throw CorruptionError("dataset: split arrays disagree with its shape");
  }
  return s;
}

}  // namespace

std::string encode_dataset(const SyntheticDataset& data) {
  ByteWriter w("AGND");
  w.put(kDatasetVersion);
  ConfigMap params;
  write_dataset_params(data.params, params);
  w.put_string(format_config(params));
  w.put(data.seed);
  w.put_array(data.weights.data(), data.weights.size());
  put_split(w, data.train);
  put_split(w, data.val);
  put_split(w, data.test);
  return w.finish();
}

SyntheticDataset decode_dataset(const std::string& bytes) {
  ByteReader r(bytes, "AGND", "dataset");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw VersionError("dataset format version " + std::to_string(version) +
                       " is not supported");
  }
  r.verify_digest();
  SyntheticDataset d;
  d.params = read_dataset_params(parse_config(r.get_string()));
  d.seed = r.get<std::uint64_t>();
  d.weights = r.get_array<float>();
  d.train = get_split(r);
  d.val = get_split(r);
  d.test = get_split(r);
  r.expect_end();
  return d;
}

void save_dataset(const SyntheticDataset& data, const fs::path& path) {
  write_file(path, encode_dataset(data));
}

SyntheticDataset load_dataset(const fs::path& path) {
  return decode_dataset(read_file(path));
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string attribution_csv(const Attribution& a) {
  std::string out = "feature";
  for (std::size_t c = 0; c < a.classes; ++c) out += ",class_" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < a.players; ++i) {
    out += std::to_string(i);
    for (std::size_t c = 0; c < a.classes; ++c) out += "," + format_double(a.at(i, c));
    out += '\n';
  }
  return out;
}

std::string attribution_json(const Attribution& a) {
  nlohmann::json j;
  j["players"] = a.players;
  j["classes"] = a.classes;
  j["normalized"] = a.normalized;
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t i = 0; i < a.players; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < a.classes; ++c) row.push_back(a.at(i, c));
    values.push_back(std::move(row));
  }
  j["values"] = std::move(values);
  return j.dump(2);
}

std::string loss_record_csv(const LossRecord& record) {
  std::string out = "kind,index,loss\n";
  for (std::size_t i = 0; i < record.step_loss.size(); ++i) {
    out += "step," + std::to_string(i + 1) + "," + format_double(record.step_loss[i]) + "\n";
  }
  out += "val,0," + format_double(record.initial_val_loss) + "\n";
  for (std::size_t i = 0; i < record.val_loss.size(); ++i) {
    out += "val," + std::to_string(i + 1) + "," + format_double(record.val_loss[i]) + "\n";
  }
  return out;
}

std::string loss_record_json(const LossRecord& record) {
  nlohmann::json j;
  j["steps"] = record.step_loss.size();
  j["initial_val_loss"] = number_or_null(record.initial_val_loss);
  nlohmann::json val = nlohmann::json::array();
  for (double v : record.val_loss) val.push_back(number_or_null(v));
  j["val_loss"] = std::move(val);
  j["best_epoch"] = record.best_epoch;
  j["final_loss"] = number_or_null(record.final_loss);
  j["optimal_loss"] = number_or_null(record.optimal_loss);
  j["optimal_loss_ci"] = number_or_null(record.optimal_loss_ci);
  return j.dump(2);
}

std::string curve_csv(const InsertionDeletionCurve& curve) {
  std::string out = "fraction,probability\n";
  for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
    out += format_double(curve.fractions[i]) + "," + format_double(curve.probabilities[i]) +
           "\n";
  }
  return out;
}

}  // namespace selfex
