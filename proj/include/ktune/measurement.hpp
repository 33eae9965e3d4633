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

#ifndef KTUNE_MEASUREMENT_HPP
#define KTUNE_MEASUREMENT_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ktune/paramspace.hpp"

namespace ktune {

enum class InvalidReason { StaticRule, LaunchFailure, CompileFailure };

// Either a strictly positive execution time in seconds or an invalid marker.
class Outcome {
 public:
  static Outcome valid(double seconds);
  static Outcome invalid(InvalidReason reason) { return Outcome(reason); }

  bool is_valid() const { return valid_; }
  // Throws InvalidConfigurationError for invalid outcomes.
  double seconds() const;
  InvalidReason reason() const { return reason_; }

  bool operator==(const Outcome&) const = default;

 private:
  explicit Outcome(double seconds) : valid_(true), seconds_(seconds) {}
  explicit Outcome(InvalidReason reason) : valid_(false), reason_(reason) {}

  bool valid_ = false;
  double seconds_ = 0.0;
  InvalidReason reason_ = InvalidReason::StaticRule;
};

// CSV status column: valid, invalid-static, invalid-launch, invalid-compile.
std::string status_string(const Outcome& outcome);

struct Sample {
  ConfigIndex index = 0;
  Configuration config;
  Outcome outcome = Outcome::invalid(InvalidReason::StaticRule);
  std::size_t repetitions = 0;
  // Wall-clock time of the measurement; set by the external runner only and not persisted.
  std::optional<std::chrono::system_clock::time_point> timestamp;

  bool operator==(const Sample& o) const {
    return index == o.index && config == o.config && outcome == o.outcome && repetitions == o.repetitions;
  }
};

struct SampleSet {
  std::string space_name;
  std::string runner_id;
  std::vector<Sample> samples;

  std::size_t valid_count() const;
  bool operator==(const SampleSet&) const = default;
};

// A way of timing configurations. Runners are invoked sequentially.
class Runner {
 public:
  virtual ~Runner() = default;

  virtual std::string id() const = 0;
  virtual const ParamSpace& space() const = 0;

  // Valid outcomes carry the minimum over `repetitions` timings.
  virtual Sample measure(const Configuration& config, std::size_t repetitions) = 0;

  // Noise-free time when the runner knows it (surrogates). Invalid configs give nullopt.
  virtual bool has_reference() const { return false; }
  virtual std::optional<double> reference_time(const Configuration&) const { return std::nullopt; }
};

// Checks repetitions >= 1 and config membership, then forwards to the runner.
Sample measure(Runner& runner, const Configuration& config, std::size_t repetitions = 1);

// Multiplicative effect: fires when every named parameter has the matching value.
struct SurrogateTerm {
  std::vector<std::string> params;
  std::vector<Value> match;
  double factor = 1.0;

  bool operator==(const SurrogateTerm&) const = default;
};

// Analytic device model: time = base_time * prod(factors of firing terms) * lognormal noise.
struct SurrogateSpec {
  std::string name = "surrogate";
  double base_time = 1.0;
  std::vector<SurrogateTerm> terms;
  double noise_cv = 0.0;
  std::vector<ValidityRule> invalid_rules;
  std::uint64_t seed = 0;

  bool operator==(const SurrogateSpec&) const = default;
};

nlohmann::json surrogate_to_json(const SurrogateSpec& spec);
SurrogateSpec surrogate_from_json(const nlohmann::json& j);
SurrogateSpec load_surrogate(const std::filesystem::path& path);
void save_surrogate(const SurrogateSpec& spec, const std::filesystem::path& path);

class SurrogateRunner final : public Runner {
 public:
  // Throws SpecError when `spec` references parameters absent from `space`, has non-positive
  // factors or a negative noise_cv.
  SurrogateRunner(SurrogateSpec spec, ParamSpace space);

  std::string id() const override { return "surrogate:" + spec_.name; }
  const ParamSpace& space() const override { return space_; }
  Sample measure(const Configuration& config, std::size_t repetitions) override;
  bool has_reference() const override { return true; }
  std::optional<double> reference_time(const Configuration& config) const override;

  const SurrogateSpec& spec() const { return spec_; }
  bool is_launchable(const Configuration& config) const { return device_.is_valid(config); }
  // Throws InvalidConfigurationError when the config violates an invalid rule.
  double true_time(const Configuration& config) const;

 private:
  double factor(const std::vector<std::size_t>& ranks) const;

  SurrogateSpec spec_;
  ParamSpace space_;
  ParamSpace device_;  // same parameters, surrogate invalid rules
  double noise_sigma_ = 0.0;
  // factors indexed by value rank (single) or rank pair (pair, row-major)
  struct Table {
    std::vector<std::size_t> params;
    std::vector<double> factors;
    std::size_t stride = 1;
  };
  std::vector<Table> tables_;
};

double surrogate_true_time(const SurrogateSpec& spec, const ParamSpace& space, const Configuration& config);

// Bundled device profiles "cpu-like", "gpu-a", "gpu-b" instantiated for `space`, which must have
// the wg_x/wg_y/ppt_x/ppt_y parameters.
SurrogateSpec builtin_surrogate(const std::string& profile, const ParamSpace& space);
std::vector<std::string> builtin_surrogate_names();

// A builtin profile name (instantiated for `space`) or a path to a surrogate JSON file.
SurrogateSpec resolve_surrogate(const std::string& name_or_path, const ParamSpace& space);

// Runs a shell command per repetition. Placeholders {param_name} are replaced by the value. The
// command prints a time in seconds on its last stdout line, or exits with `invalid_exit_code` for
// a configuration that cannot run.
class ExternalRunner final : public Runner {
 public:
  static constexpr int kDefaultInvalidExitCode = 42;

  // Throws SpecError when a placeholder names no parameter of `space`.
  ExternalRunner(std::string command_template, ParamSpace space,
                 int invalid_exit_code = kDefaultInvalidExitCode);

  std::string id() const override { return "command:" + template_; }
  const ParamSpace& space() const override { return space_; }
  Sample measure(const Configuration& config, std::size_t repetitions) override;

  std::string render(const Configuration& config) const;

 private:
  struct Piece {
    std::string literal;
    std::optional<std::size_t> param;
  };
  std::string template_;
  ParamSpace space_;
  int invalid_exit_code_;
  std::vector<Piece> pieces_;
};

Sample run_external(const std::string& command_template, const ParamSpace& space,
                    const Configuration& config, std::size_t repetitions,
                    int invalid_exit_code = ExternalRunner::kDefaultInvalidExitCode);

// --- sample CSV ---------------------------------------------------------------------------------
// Optional "# space: <name>" / "# runner: <id>" lines, then the header
//   config_index,<param_1>,...,<param_k>,status,time_seconds,repetitions
// and one row per sample. Times use 17 significant digits.

std::string csv_header(const ParamSpace& space);
std::string csv_row(const Sample& sample);

void save_samples(const SampleSet& set, const ParamSpace& space, const std::filesystem::path& path);
// Throws ParseError naming the offending line.
SampleSet load_samples(const std::filesystem::path& path, const ParamSpace& space);

// Appends rows one at a time, flushing each, so an interrupted run leaves a usable file.
class SampleCsvWriter {
 public:
  // With append=true and an existing file, rows are added after the existing content.
  SampleCsvWriter(const std::filesystem::path& path, const ParamSpace& space,
                  const std::string& runner_id, bool append);
  void write(const Sample& sample);

 private:
  std::ofstream out_;
};

std::string format_seconds(double seconds);

nlohmann::json sample_to_json(const Sample& sample);
nlohmann::json sample_set_to_json(const SampleSet& set);

}  // namespace ktune

#endif  // KTUNE_MEASUREMENT_HPP
