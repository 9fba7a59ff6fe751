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

// selfex command-line front end. Talks to the library only through the C API.
//
// Every subcommand builds an effective config from --config, then its own
// flags, then --set overrides (later wins), writes it next to its artifacts
// and exits with the library status: 0 ok, 1 usage, 2 invariant/bound
// failure, 3 I/O.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selfex/c_api.h"

namespace fs = std::filesystem;

namespace {

constexpr int kUsage = SELFEX_ERR_USAGE;
constexpr int kIo = SELFEX_ERR_IO;

// Failed library call: carries the status to main.
struct Failure {
  int status;
};

void check(int status) {
  if (status != SELFEX_OK) {
    std::cerr << "selfex: " << selfex_last_error() << "\n";
    throw Failure{status};
  }
}

std::string take(char* text) {
  std::string out = text ? text : "";
  selfex_string_free(text);
  return out;
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<selfex_dataset, Deleter<selfex_dataset, selfex_dataset_free>>;
using Model = std::unique_ptr<selfex_model, Deleter<selfex_model, selfex_model_free>>;
using Combined =
    std::unique_ptr<selfex_combined, Deleter<selfex_combined, selfex_combined_free>>;

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    std::cerr << "selfex: cannot write '" << path.string() << "'\n";
    throw Failure{kIo};
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "selfex: cannot read config '" << path.string() << "'\n";
    throw Failure{kIo};
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Dataset load_dataset(const std::string& path) {
  selfex_dataset* d = nullptr;
  check(selfex_dataset_load(path.c_str(), &d));
  return Dataset(d);
}

Model load_model(const std::string& path) {
  selfex_model* m = nullptr;
  check(selfex_model_load(path.c_str(), &m));
  return Model(m);
}

Model load_optional(const std::string& path) {
  return path.empty() ? Model() : load_model(path);
}

// Options shared by every subcommand plus the flag-to-key mapping.
struct Run {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> flags;  // key -> value from typed flags

  fs::path out() const {
    if (!out_dir.empty()) return out_dir;
    const char* env = std::getenv("SELFEX_OUT_DIR");
    return (env && *env) ? fs::path(env) : fs::path("selfex_out");
  }

  std::string effective_config() const {
    std::string text = config_file.empty() ? "" : read_text(config_file);
    std::string overrides;
    for (const auto& [k, v] : flags) overrides += k + " = " + v + "\n";
    if (seed) {
      overrides += "run.seed = " + std::to_string(*seed) + "\n";
      overrides += "stage.seed = " + std::to_string(*seed) + "\n";
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "selfex: --set expects key=value, got '" << s << "'\n";
        throw Failure{kUsage};
      }
      overrides += s.substr(0, eq) + " = " + s.substr(eq + 1) + "\n";
    }
    char* merged = nullptr;
    check(selfex_config_merge(text.c_str(), overrides.c_str(), &merged));
    char* resolved = nullptr;
    check(selfex_config_resolve(take(merged).c_str(), &resolved));
    return take(resolved);
  }

  std::uint64_t run_seed(const std::string& config) const {
    char* value = nullptr;
    check(selfex_config_get(config.c_str(), "run.seed", &value));
    if (value == nullptr) return 0;
    const std::string text = take(value);
    try {
      return std::stoull(text);
    } catch (const std::exception&) {
      std::cerr << "selfex: run.seed = '" << text << "' is not an integer\n";
      throw Failure{kUsage};
    }
  }
};

void add_common(CLI::App* app, Run& run) {
  app->add_option("-c,--config", run.config_file, "Config file (section.key = value)")
      ->check(CLI::ExistingFile);
  app->add_option("--set", run.sets, "Override a config key: key=value (repeatable)");
  app->add_option("-o,--out", run.out_dir, "Output directory (default $SELFEX_OUT_DIR)");
  app->add_option("--seed", run.seed, "Seed for data generation and training");
}

// A typed flag that lands in the effective config under `key` when given.
template <typename T>
void add_keyed(CLI::App* app, Run& run, const std::string& flag, const std::string& key,
               const std::string& help) {
  app->add_option_function<T>(
      flag, [&run, key](const T& v) {
        std::ostringstream s;
        s << v;
        run.flags[key] = s.str();
      },
      help);
}

void add_stage_flags(CLI::App* app, Run& run) {
  add_keyed<std::size_t>(app, run, "--epochs", "stage.epochs", "Training epochs");
  add_keyed<double>(app, run, "--lr", "optimizer.step_size", "Step size");
  add_keyed<std::size_t>(app, run, "--steps-per-epoch", "stage.steps_per_epoch",
                         "Steps per epoch (0: one pass)");
  add_keyed<std::size_t>(app, run, "--masks", "stage.masks_per_input", "Masks per input");
  add_keyed<std::size_t>(app, run, "--batch", "stage.batch_size", "Classifier batch size");
}

void save_model(const selfex_model* m, const fs::path& path) {
  check(selfex_model_save(m, path.string().c_str()));
  std::cout << "wrote " << path.string() << "\n";
}

// Parses "r=8" or "8".
std::string reduction_value(const std::string& text) {
  return text.rfind("r=", 0) == 0 ? text.substr(2) : text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-interpreting classifiers with side-network Shapley explainers"};
  app.require_subcommand(1);
  Run run;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen, run);
  add_keyed<std::string>(gen, run, "--kind", "data.kind", "planted-patch or linear-logit");
  add_keyed<std::size_t>(gen, run, "--tokens", "data.num_tokens", "Tokens per input (d)");
  add_keyed<std::size_t>(gen, run, "--token-dim", "data.token_dim", "Channels per token");
  add_keyed<std::size_t>(gen, run, "--classes", "data.num_classes", "Class count");
  add_keyed<std::size_t>(gen, run, "--signal", "data.signal_tokens", "Signal tokens (k)");
  add_keyed<std::size_t>(gen, run, "--train", "data.train", "Training inputs");
  add_keyed<std::size_t>(gen, run, "--val", "data.val", "Validation inputs");
  add_keyed<std::size_t>(gen, run, "--test", "data.test", "Test inputs");

  // training stages
  std::string data_path, backbone_path, surrogate_path, explainer_path;
  auto add_inputs = [&](CLI::App* sub, bool backbone, bool surrogate) {
    sub->add_option("--data", data_path, "Dataset file")->required();
    if (backbone) sub->add_option("--backbone", backbone_path, "Classifier checkpoint")->required();
    if (surrogate) sub->add_option("--surrogate", surrogate_path, "Surrogate checkpoint")->required();
  };
  auto* tcls = app.add_subcommand("train-classifier", "Train the classifier");
  add_common(tcls, run);
  add_stage_flags(tcls, run);
  add_inputs(tcls, false, false);
  add_keyed<std::string>(tcls, run, "--preset", "model.preset", "Model dimension preset");
  add_keyed<std::size_t>(tcls, run, "--depth", "model.depth", "Encoder blocks");
  add_keyed<std::size_t>(tcls, run, "--hidden", "model.hidden", "Hidden width");
  add_keyed<std::size_t>(tcls, run, "--heads", "model.heads", "Attention heads");

  auto* tsur = app.add_subcommand("train-surrogate", "Train the side surrogate");
  add_common(tsur, run);
  add_stage_flags(tsur, run);
  add_inputs(tsur, true, false);
  add_keyed<std::size_t>(tsur, run, "--reduction", "side.reduction", "Side width divisor r");

  auto* texp = app.add_subcommand("train-explainer", "Train the side explainer");
  auto* tduo = app.add_subcommand("train-duo", "Jointly fine-tune classifier and head");
  auto* tfro = app.add_subcommand("train-froyo", "Train an explanation head only");
  for (auto* sub : {texp, tduo, tfro}) {
    add_common(sub, run);
    add_stage_flags(sub, run);
    add_inputs(sub, true, true);
    add_keyed<std::size_t>(sub, run, "--head-depth", "side.head_depth", "Head hidden layers");
    add_keyed<std::string>(sub, run, "--readout", "side.readout", "class-token or tokens");
  }

  // explain
  auto* explain = app.add_subcommand("explain", "Predict and attribute with the combined model");
  add_common(explain, run);
  add_inputs(explain, true, true);
  explain->add_option("--explainer", explainer_path, "Explainer checkpoint")->required();
  std::string split = "test";
  std::size_t row = 0, count = 1;
  explain->add_option("--split", split, "train, val or test");
  explain->add_option("--row", row, "First row");
  explain->add_option("--count", count, "Number of rows")->check(CLI::PositiveNumber);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Accuracy and insertion/deletion AUC");
  add_common(eval, run);
  add_inputs(eval, true, true);
  eval->add_option("--explainer", explainer_path, "Explainer, duo or froyo checkpoint");
  add_keyed<std::string>(eval, run, "--attribution", "eval.attribution",
                         "model, random, exact or kernelshap");
  add_keyed<std::size_t>(eval, run, "--samples", "eval.samples", "Evaluated inputs");
  add_keyed<std::string>(eval, run, "--split", "eval.split", "train, val or test");

  // accounting
  auto* cparams = app.add_subcommand("count-params", "Analytic parameter and memory counts");
  auto* cflops = app.add_subcommand("count-flops", "Analytic forward FLOPs");
  std::string side_spec;
  for (auto* sub : {cparams, cflops}) {
    add_common(sub, run);
    add_keyed<std::string>(sub, run, "--preset", "model.preset",
                           "vit-tiny, vit-small, vit-base or vit-large");
    sub->add_option("--side", side_spec, "Side reduction, e.g. r=8");
  }
  add_keyed<std::string>(cparams, run, "--role", "side.role", "surrogate or explainer");

  // checks
  auto* bounds = app.add_subcommand("check-bounds", "Explainer bound and convex decay checks");
  add_common(bounds, run);
  bounds->add_option("--data", data_path, "Dataset file");
  bounds->add_option("--backbone", backbone_path, "Classifier checkpoint");
  bounds->add_option("--surrogate", surrogate_path, "Surrogate checkpoint");
  bounds->add_option("--explainer", explainer_path, "Explainer, duo or froyo checkpoint");
  add_keyed<std::size_t>(bounds, run, "--samples", "bounds.samples", "Held-out inputs");

  auto* lemma = app.add_subcommand("check-lemma", "Kernel second-moment eigenvalue sweep");
  add_common(lemma, run);
  std::size_t max_d = 16;
  lemma->add_option("--max-d", max_d, "Largest d (<= 16)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (!side_spec.empty()) run.flags["side.reduction"] = reduction_value(side_spec);
    const std::string config = run.effective_config();
    const fs::path out = run.out();
    auto persist = [&](const std::string& name) { write_text(out / (name + ".config"), config); };

    if (gen->parsed()) {
      selfex_dataset* raw = nullptr;
      check(selfex_dataset_generate(config.c_str(), run.run_seed(config), &raw));
      Dataset data(raw);
      const fs::path path = out / "dataset.agnd";
      check(selfex_dataset_save(data.get(), path.string().c_str()));
      char* info = nullptr;
      check(selfex_dataset_describe(data.get(), &info));
      write_text(out / "dataset.json", take(info));
      persist("dataset");
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }

    struct StageRun {
      CLI::App* sub;
      const char* stage;
      const char* pipeline;
      const char* artifact;
    };
    for (const StageRun& s : {StageRun{tcls, "classifier", "autognothi", "classifier"},
                              StageRun{tsur, "surrogate", "autognothi", "surrogate"},
                              StageRun{texp, "explainer", "autognothi", "explainer"},
                              StageRun{tduo, "explainer", "duo", "duo"},
                              StageRun{tfro, "explainer", "froyo", "froyo"}}) {
      if (!s.sub->parsed()) continue;
      char* staged = nullptr;
      const std::string fixed = std::string("stage.stage = ") + s.stage +
                                "\nstage.pipeline = " + s.pipeline + "\n";
      check(selfex_config_merge(config.c_str(), fixed.c_str(), &staged));
      const std::string stage_config = take(staged);
      Dataset data = load_dataset(data_path);
      Model backbone = load_optional(backbone_path);
      Model surrogate = load_optional(surrogate_path);
      selfex_model* trained = nullptr;
      char* record = nullptr;
      check(selfex_train(stage_config.c_str(), data.get(), backbone.get(), surrogate.get(),
                         &trained, &record));
      Model model(trained);
      const std::string record_text = take(record);
      save_model(model.get(), out / (std::string(s.artifact) + ".agn"));
      write_text(out / (std::string(s.artifact) + "_record.json"), record_text);
      write_text(out / (std::string(s.artifact) + ".config"), stage_config);
      std::cout << record_text << "\n";
      return 0;
    }

    if (explain->parsed()) {
      Dataset data = load_dataset(data_path);
      Model backbone = load_model(backbone_path);
      Model surrogate = load_model(surrogate_path);
      Model explainer = load_model(explainer_path);
      selfex_combined* raw = nullptr;
      check(selfex_combined_create(backbone.get(), surrogate.get(), explainer.get(), &raw));
      Combined combined(raw);
      std::size_t rows = 0, tokens = 0, dim = 0;
      check(selfex_dataset_split_shape(data.get(), split.c_str(), &rows, &tokens, &dim));
      if (row + count > rows) {
        std::cerr << "selfex: rows " << row << ".." << row + count - 1 << " exceed the "
                  << rows << "-row " << split << " split\n";
        return kUsage;
      }
      std::vector<float> x(count * tokens * dim);
      for (std::size_t i = 0; i < count; ++i) {
        check(selfex_dataset_row(data.get(), split.c_str(), row + i,
                                 x.data() + i * tokens * dim));
      }
      char* result = nullptr;
      check(selfex_combined_explain(combined.get(), x.data(), count, tokens, dim, &result));
      const std::string text = take(result);
      write_text(out / "explanations.json", text);
      persist("explain");
      std::cout << text << "\n";
      return 0;
    }

    if (eval->parsed()) {
      Dataset data = load_dataset(data_path);
      Model backbone = load_model(backbone_path);
      Model surrogate = load_model(surrogate_path);
      Model explainer = load_optional(explainer_path);
      char* report = nullptr;
      char* curves = nullptr;
      check(selfex_evaluate(config.c_str(), data.get(), backbone.get(), surrogate.get(),
                            explainer.get(), &report, &curves));
      const std::string text = take(report);
      write_text(out / "evaluation.json", text);
      write_text(out / "curves.csv", take(curves));
      persist("evaluate");
      std::cout << text << "\n";
      return 0;
    }

    if (cparams->parsed() || cflops->parsed()) {
      char* result = nullptr;
      const bool params = cparams->parsed();
      check(params ? selfex_count_params(config.c_str(), &result)
                   : selfex_count_flops(config.c_str(), &result));
      const std::string text = take(result);
      write_text(out / (params ? "count_params.json" : "count_flops.json"), text);
      persist(params ? "count_params" : "count_flops");
      std::cout << text << "\n";
      return 0;
    }

    if (bounds->parsed()) {
      Dataset data = data_path.empty() ? Dataset() : load_dataset(data_path);
      Model backbone = load_optional(backbone_path);
      Model surrogate = load_optional(surrogate_path);
      Model explainer = load_optional(explainer_path);
      char* result = nullptr;
      const int status = selfex_check_bounds(config.c_str(), data.get(), backbone.get(),
                                             surrogate.get(), explainer.get(), &result);
      if (result == nullptr) check(status);
      const std::string text = take(result);
      write_text(out / "bounds.json", text);
      persist("check_bounds");
      std::cout << text << "\n";
      if (status != SELFEX_OK) std::cerr << "selfex: " << selfex_last_error() << "\n";
      return status;
    }

    if (lemma->parsed()) {
      char* result = nullptr;
      const int status = selfex_check_lemma(max_d, &result);
      if (result == nullptr) check(status);
      const std::string text = take(result);
      write_text(out / "lemma.json", text);
      std::printf("%4s %22s %22s %12s\n", "d", "closed-form", "eigensolve", "|diff|");
      const auto table = nlohmann::json::parse(text);
      for (const auto& r : table.at("rows")) {
        std::printf("%4zu %22.17g %22.17g %12.3e\n", r.at("d").get<std::size_t>(),
                    r.at("closed_form").get<double>(), r.at("eigensolve").get<double>(),
                    r.at("abs_diff").get<double>());
      }
      persist("check_lemma");
      return status;
    }
  } catch (const Failure& f) {
    return f.status;
  }
  return kUsage;
}
