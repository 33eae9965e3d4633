// Copyright 2026 The ktune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ktune/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ktune/evaluation.hpp"
#include "ktune/measurement.hpp"
#include "ktune/model.hpp"
#include "ktune/paramspace.hpp"
#include "ktune/tuner.hpp"

namespace ktune::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string manifest;
  std::string space = "convolution";
  bool device_rules = false;
  std::string surrogate;
  std::string command;
  int invalid_exit_code = ExternalRunner::kDefaultInvalidExitCode;
  std::size_t repetitions = 1;
  std::size_t n = 2000;
  std::size_t m = 200;
  std::size_t k = 11;
  std::uint64_t seed = 0;
  std::size_t epochs = TrainConfig{}.epochs;
  double lr = TrainConfig{}.learning_rate;
  std::size_t batch_size = TrainConfig{}.batch_size;
  std::uint64_t sweep_cap = 0;  // 0: unlimited
  std::string out = "out";
  std::size_t jobs = 1;
  bool resume = false;

  std::string target;  // space info/export argument
  std::uint64_t index = 0;
  std::string samples;
  std::string model;
  std::vector<std::size_t> sizes{250, 500, 1000, 2000};
  std::vector<std::size_t> n_values{500, 1000, 2000};
  std::vector<std::size_t> m_values{10, 50, 100, 200};
  std::size_t repeats = 5;
  std::size_t n_random = 50000;
  std::size_t holdout = kDefaultHoldoutSize;
  std::size_t points = 100;
  std::vector<std::string> surrogates{"cpu-like", "gpu-a", "gpu-b"};
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void add_space_opts(CLI::App* app, Options& o) {
  app->add_option("--space", o.space, "Builtin space name or space JSON file")->capture_default_str();
  app->add_flag("--device-rules", o.device_rules, "Reject configurations over the default device limits statically");
}

void add_runner_opts(CLI::App* app, Options& o) {
  app->add_option("--surrogate", o.surrogate, "Builtin surrogate profile or surrogate JSON file");
  app->add_option("--command", o.command, "Benchmark command template with {param} placeholders");
  app->add_option("--invalid-exit-code", o.invalid_exit_code, "Exit code meaning 'invalid configuration'")
      ->capture_default_str();
  app->add_option("--repetitions", o.repetitions, "Timings per configuration (minimum is kept)")->capture_default_str();
}

void add_train_opts(CLI::App* app, Options& o) {
  app->add_option("--k", o.k, "Bagging ensemble size")->capture_default_str();
  app->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  app->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
  app->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str();
  app->add_option("--jobs", o.jobs, "Threads for training and prediction")->capture_default_str();
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--manifest", o.manifest, "JSON manifest; explicit flags override it");
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
}

void build(CLI::App& app, Options& o) {
  app.require_subcommand(1);

  auto* space = app.add_subcommand("space", "Inspect tuning-parameter spaces");
  space->require_subcommand(1);
  auto* info = space->add_subcommand("info", "Print parameters and cardinality");
  info->add_option("space", o.target, "Builtin space name or space JSON file")->required();
  info->add_option("--manifest", o.manifest);
  auto* index = space->add_subcommand("index", "Print the configuration at an index");
  index->add_option("index", o.index)->required();
  add_space_opts(index, o);
  index->add_option("--manifest", o.manifest);
  auto* exp = space->add_subcommand("export", "Write a space definition as JSON into --out");
  exp->add_option("space", o.target)->required();
  exp->add_option("--out", o.out)->capture_default_str();
  exp->add_option("--manifest", o.manifest);

  auto* surrogate = app.add_subcommand("surrogate", "Inspect bundled device surrogates");
  surrogate->require_subcommand(1);
  auto* sexp = surrogate->add_subcommand("export", "Write a surrogate instantiated for --space as JSON into --out");
  sexp->add_option("profile", o.target, "Builtin profile name or surrogate JSON file")->required();
  sexp->add_option("--out", o.out)->capture_default_str();
  sexp->add_option("--manifest", o.manifest);
  add_space_opts(sexp, o);

  auto* measure = app.add_subcommand("measure", "Measure random configurations into samples.csv");
  add_common(measure, o);
  add_space_opts(measure, o);
  add_runner_opts(measure, o);
  measure->add_option("--n", o.n, "Number of configurations")->capture_default_str();
  measure->add_flag("--resume", o.resume, "Continue an interrupted samples.csv");

  auto* train = app.add_subcommand("train", "Train an ensemble from a sample CSV into model.json");
  add_common(train, o);
  add_space_opts(train, o);
  add_train_opts(train, o);
  train->add_option("--samples", o.samples, "Sample CSV")->required();

  auto* predict = app.add_subcommand("predict", "Predict with a saved model into predictions.csv");
  add_common(predict, o);
  add_space_opts(predict, o);
  predict->add_option("--model", o.model, "Model JSON")->required();
  predict->add_option("--index", o.index, "Single configuration index (default: full sweep)");
  predict->add_option("--jobs", o.jobs)->capture_default_str();

  auto* tune = app.add_subcommand("tune", "Run the two-stage auto-tuner into report.json");
  add_common(tune, o);
  add_space_opts(tune, o);
  add_runner_opts(tune, o);
  add_train_opts(tune, o);
  tune->add_option("--n", o.n, "Stage-1 sample size")->capture_default_str();
  tune->add_option("--m", o.m, "Stage-2 candidates")->capture_default_str();
  tune->add_option("--sweep-cap", o.sweep_cap, "Max configurations scored in stage 2 (0: all)");

  auto* oracle = app.add_subcommand("oracle", "Measure every configuration into oracle.csv");
  add_common(oracle, o);
  add_space_opts(oracle, o);
  add_runner_opts(oracle, o);

  auto* eval = app.add_subcommand("eval", "Experiment harnesses emitting CSV");
  eval->require_subcommand(1);
  auto* curve = eval->add_subcommand("curve", "Mean relative error versus training size");
  auto* scatter = eval->add_subcommand("scatter", "Predicted versus actual times on a holdout");
  auto* grid = eval->add_subcommand("grid", "Mean slowdown over an (N, M) grid");
  auto* baseline = eval->add_subcommand("baseline", "Best of n random configurations");
  auto* transfer = eval->add_subcommand("transfer", "Cross-device slowdown of each device's optimum");
  for (auto* sub : {curve, scatter, grid, baseline, transfer}) {
    add_common(sub, o);
    add_space_opts(sub, o);
  }
  for (auto* sub : {curve, scatter, grid, baseline}) add_runner_opts(sub, o);
  for (auto* sub : {curve, scatter, grid}) add_train_opts(sub, o);
  curve->add_option("--sizes", o.sizes, "Training sizes")->delimiter(',');
  curve->add_option("--repeats", o.repeats)->capture_default_str();
  curve->add_option("--holdout", o.holdout)->capture_default_str();
  scatter->add_option("--n", o.n, "Training size")->capture_default_str();
  scatter->add_option("--points", o.points)->capture_default_str();
  scatter->add_option("--holdout", o.holdout)->capture_default_str();
  grid->add_option("--n-values", o.n_values)->delimiter(',');
  grid->add_option("--m-values", o.m_values)->delimiter(',');
  grid->add_option("--repeats", o.repeats)->capture_default_str();
  baseline->add_option("--n-random", o.n_random)->capture_default_str();
  transfer->add_option("--surrogates", o.surrogates, "Surrogate profiles or files")->delimiter(',');
}

CLI::App* leaf(CLI::App& app) {
  CLI::App* node = &app;
  for (;;) {
    auto subs = node->get_subcommands();
    if (subs.empty()) return node;
    node = subs.front();
  }
}

std::string path_of(CLI::App* node) {
  std::string path;
  for (; node && node->get_parent(); node = node->get_parent()) path = node->get_name() + (path.empty() ? "" : " " + path);
  return path;
}

std::string manifest_value(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const auto& e : v) joined += (joined.empty() ? "" : ",") + manifest_value(e);
    return joined;
  }
  return v.dump();
}

bool known_anywhere(const CLI::App* app, const std::string& flag) {
  if (app->get_option_no_throw(flag)) return true;
  for (const CLI::App* sub : app->get_subcommands([](const CLI::App*) { return true; }))
    if (known_anywhere(sub, flag)) return true;
  return false;
}

// Appends manifest entries for every option the command line left unset. Keys that belong to other
// subcommands are skipped so one manifest can drive a whole pipeline.
std::vector<std::string> merge_manifest(const std::vector<std::string>& args, const CLI::App& root, CLI::App* node,
                                        const std::string& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot open manifest '" + file + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("manifest '" + file + "' is not valid JSON: " + e.what());
  }
  if (!manifest.is_object()) throw UsageError("manifest must be a JSON object");
  std::vector<std::string> merged = args;
  for (const auto& [key, value] : manifest.items()) {
    if (key == "manifest") continue;
    CLI::Option* opt = node->get_option_no_throw("--" + key);
    if (!opt) {
      if (known_anywhere(&root, "--" + key)) continue;
      throw UsageError("unknown manifest key '" + key + "'");
    }
    if (opt->count() > 0) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back("--" + key);
      continue;
    }
    merged.push_back("--" + key);
    merged.push_back(manifest_value(value));
  }
  return merged;
}

ParamSpace space_of(const Options& o) {
  ParamSpace space = resolve_space(o.space);
  return o.device_rules ? space.with_rules(default_device_rules(space)) : space;
}

std::unique_ptr<Runner> runner_of(const Options& o, const ParamSpace& space) {
  if (!o.surrogate.empty() && !o.command.empty()) throw UsageError("give either --surrogate or --command, not both");
  if (!o.surrogate.empty()) return std::make_unique<SurrogateRunner>(resolve_surrogate(o.surrogate, space), space);
  if (!o.command.empty()) return std::make_unique<ExternalRunner>(o.command, space, o.invalid_exit_code);
  throw UsageError("a runner is required: --surrogate or --command");
}

TrainConfig train_config_of(const Options& o) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  return cfg;
}

TunerConfig tuner_config_of(const Options& o) {
  TunerConfig cfg;
  cfg.n_train = o.n;
  cfg.m_candidates = o.m;
  cfg.k_bag = o.k;
  cfg.seed = o.seed;
  cfg.train = train_config_of(o);
  cfg.max_prediction_sweep = o.sweep_cap == 0 ? kUnlimitedSweep : o.sweep_cap;
  cfg.repetitions = o.repetitions;
  cfg.jobs = o.jobs;
  return cfg;
}

fs::path out_dir(const Options& o) {
  fs::create_directories(o.out);
  return o.out;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

// --- subcommands ---------------------------------------------------------------------------------

void cmd_space_info(const Options& o) {
  const ParamSpace space = resolve_space(o.target);
  std::cout << "space " << space.name() << '\n';
  for (const auto& p : space.params()) {
    std::cout << "  " << p.name << ":";
    for (Value v : p.values) std::cout << ' ' << v;
    std::cout << '\n';
  }
  for (const auto& r : space.rules()) std::cout << "  rule " << rule_to_json(r).dump() << '\n';
  std::cout << "cardinality " << space.cardinality() << '\n';
}

void cmd_space_index(const Options& o) {
  const ParamSpace space = space_of(o);
  const Configuration config = space.config_at(o.index);
  std::cout << o.index << ' ' << format_config(space, config) << (space.is_valid(config) ? "" : " (invalid)") << '\n';
}

void cmd_space_export(const Options& o) {
  const ParamSpace space = resolve_space(o.target);
  save_space(space, out_dir(o) / (space.name() + ".json"));
}

// Drops a trailing partial row left by an interrupted writer.
void trim_partial_line(const fs::path& path) {
  if (!fs::exists(path) || fs::file_size(path) == 0) return;
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    content.assign(std::istreambuf_iterator<char>(in), {});
  }
  if (content.back() == '\n') return;
  const auto cut = content.rfind('\n');
  content.resize(cut == std::string::npos ? 0 : cut + 1);
  std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
}

void cmd_surrogate_export(const Options& o) {
  const ParamSpace space = space_of(o);
  const SurrogateSpec spec = resolve_surrogate(o.target, space);
  save_surrogate(spec, out_dir(o) / (spec.name + "-" + space.name() + ".json"));
}

void cmd_measure(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const fs::path path = out_dir(o) / "samples.csv";
  std::set<ConfigIndex> done;
  if (o.resume && fs::exists(path)) {
    trim_partial_line(path);
    if (fs::file_size(path) > 0)
      for (const auto& s : load_samples(path, space).samples) done.insert(s.index);
  }
  SampleCsvWriter writer(path, space, runner->id(), o.resume);
  for (ConfigIndex index : sample_indices(space, o.n, o.seed)) {
    if (done.count(index)) continue;
    const Configuration config = space.config_at(index);
    if (!space.is_valid(config)) {
      writer.write({index, config, Outcome::invalid(InvalidReason::StaticRule), 0, {}});
      continue;
    }
    writer.write(measure(*runner, config, o.repetitions));
  }
}

void cmd_train(const Options& o) {
  const ParamSpace space = space_of(o);
  const SampleSet samples = load_samples(o.samples, space);
  const Ensemble ensemble = train_ensemble(samples, space, o.k, train_config_of(o), o.jobs);
  save_model(ensemble, out_dir(o) / "model.json");
}

void cmd_predict(const Options& o, bool single) {
  const Ensemble ensemble = load_model(o.model);
  const ParamSpace space = space_of(o);
  if (ensemble.space_name != space.name())
    throw UsageError("model was trained on '" + ensemble.space_name + "', not '" + space.name() + "'");
  std::vector<ConfigIndex> indices;
  if (single) {
    if (o.index >= space.cardinality()) throw RangeError("configuration index out of range");
    indices.push_back(o.index);
  } else {
    indices.resize(space.cardinality());
    std::iota(indices.begin(), indices.end(), ConfigIndex{0});
  }
  const auto predicted = predict_indices(ensemble, indices, o.jobs);
  std::ofstream out(out_dir(o) / "predictions.csv", std::ios::trunc);
  out << "config_index,predicted_seconds\n";
  for (std::size_t i = 0; i < indices.size(); ++i) out << indices[i] << ',' << format_seconds(predicted[i]) << '\n';
}

void write_tuning_outputs(const TuningReport& report, const ParamSpace& space, const fs::path& dir) {
  write_json(report_to_json(report), dir / "report.json");
  save_samples(report.stage1_samples, space, dir / "stage1.csv");
  save_samples(report.stage2_samples, space, dir / "stage2.csv");
}

void cmd_tune(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const fs::path dir = out_dir(o);
  try {
    write_tuning_outputs(autotune(space, *runner, tuner_config_of(o)), space, dir);
  } catch (const AllCandidatesInvalidError& e) {
    write_tuning_outputs(e.report(), space, dir);
    throw;
  }
}

void cmd_oracle(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const fs::path dir = out_dir(o);
  SampleCsvWriter writer(dir / "oracle.csv", space, runner->id(), false);
  const SearchResult best = exhaustive_search(space, *runner, [&](const Sample& s) { writer.write(s); });
  write_json({{"space_name", space.name()},
              {"runner_id", runner->id()},
              {"config_index", best.index},
              {"values", best.config.values},
              {"time_seconds", best.seconds}},
             dir / "oracle_best.json");
}

CurveOptions curve_options_of(const Options& o) {
  CurveOptions c;
  c.k_bag = o.k;
  c.train = train_config_of(o);
  c.holdout_size = o.holdout;
  c.repetitions = o.repetitions;
  c.jobs = o.jobs;
  return c;
}

void cmd_eval_curve(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const auto points = learning_curve(space, *runner, o.sizes, o.repeats, o.seed, curve_options_of(o));
  for (const auto& p : points)
    for (const auto& f : p.failures) std::cerr << "ktune: n_train=" << p.n_train << ": " << f << '\n';
  write_learning_curve_csv(points, out_dir(o) / "learning_curve.csv");
}

void cmd_eval_scatter(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const Holdout holdout = draw_holdout(space, *runner, o.holdout, derive_seed(o.seed, 1), o.repetitions);
  const SampleSet train = draw_training_set(space, *runner, holdout, o.n, derive_seed(o.seed, 2), o.repetitions);
  TrainConfig cfg = train_config_of(o);
  cfg.seed = derive_seed(o.seed, 3);
  const Ensemble ensemble = train_ensemble(train, space, o.k, cfg, o.jobs);
  write_scatter_csv(scatter_export(ensemble, holdout.samples, o.points, derive_seed(o.seed, 4)),
                    out_dir(o) / "scatter.csv");
}

void cmd_eval_grid(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const auto cells = slowdown_grid(space, *runner, o.n_values, o.m_values, o.repeats, o.seed, tuner_config_of(o));
  write_slowdown_csv(cells, out_dir(o) / "slowdown_grid.csv");
}

void cmd_eval_baseline(const Options& o) {
  const ParamSpace space = space_of(o);
  auto runner = runner_of(o, space);
  const SearchResult best = random_baseline(space, *runner, o.n_random, o.seed);
  std::ofstream out(out_dir(o) / "baseline.csv", std::ios::trunc);
  out << "n_random,config_index,time_seconds\n" << o.n_random << ',' << best.index << ',' << format_seconds(best.seconds) << '\n';
}

void cmd_eval_transfer(const Options& o) {
  const ParamSpace space = space_of(o);
  std::vector<std::unique_ptr<Runner>> owned;
  std::vector<Runner*> runners;
  for (const auto& name : o.surrogates) {
    owned.push_back(std::make_unique<SurrogateRunner>(resolve_surrogate(name, space), space));
    runners.push_back(owned.back().get());
  }
  write_transfer_csv(transfer_report(space, runners), out_dir(o) / "transfer.csv");
}

void dispatch(const std::string& path, const Options& o, CLI::App* node) {
  if (path == "space info") return cmd_space_info(o);
  if (path == "space index") return cmd_space_index(o);
  if (path == "space export") return cmd_space_export(o);
  if (path == "surrogate export") return cmd_surrogate_export(o);
  if (path == "measure") return cmd_measure(o);
  if (path == "train") return cmd_train(o);
  if (path == "predict") return cmd_predict(o, node->count("--index") > 0);
  if (path == "tune") return cmd_tune(o);
  if (path == "oracle") return cmd_oracle(o);
  if (path == "eval curve") return cmd_eval_curve(o);
  if (path == "eval scatter") return cmd_eval_scatter(o);
  if (path == "eval grid") return cmd_eval_grid(o);
  if (path == "eval baseline") return cmd_eval_baseline(o);
  if (path == "eval transfer") return cmd_eval_transfer(o);
  throw UsageError("unknown command '" + path + "'");
}

int parse(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return -1;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return -1;
  } catch (const CLI::ParseError& e) {
    std::cerr << "ktune: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    Options o;
    CLI::App app{"ktune: neural-network model-based auto-tuning", "ktune"};
    build(app, o);
    if (int rc = parse(app, args); rc != kExitOk) return rc < 0 ? kExitOk : rc;

    CLI::App* node = leaf(app);
    if (!o.manifest.empty()) {
      const auto merged = merge_manifest(args, app, node, o.manifest);
      o = Options{};
      CLI::App again{"ktune", "ktune"};
      build(again, o);
      if (int rc = parse(again, merged); rc != kExitOk) return rc < 0 ? kExitOk : rc;
      node = leaf(again);
      dispatch(path_of(node), o, node);
    } else {
      dispatch(path_of(node), o, node);
    }
    return kExitOk;
  } catch (const AllCandidatesInvalidError& e) {
    std::cerr << "ktune: " << e.what() << '\n';
    return kExitAllInvalid;
  } catch (const InsufficientDataError& e) {
    std::cerr << "ktune: insufficient data: " << e.what() << '\n';
    return kExitInsufficientData;
  } catch (const EmptyTrainingSetError& e) {
    std::cerr << "ktune: insufficient data: " << e.what() << '\n';
    return kExitInsufficientData;
  } catch (const RunnerError& e) {
    std::cerr << "ktune: runner failed: " << e.what() << '\n';
    return kExitRunner;
  } catch (const Error& e) {
    std::cerr << "ktune: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ktune: " << e.what() << '\n';
    return kExitUsage;
  }
}

int run(int argc, const char* const* argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace ktune::cli
