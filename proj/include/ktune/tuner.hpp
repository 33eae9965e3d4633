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

// Two-stage model-based auto-tuning:
//   1. measure n_train random configurations,
//   2. train the ensemble on the valid ones,
//   3. predict every statically valid configuration,
//   4. measure the m_candidates with the lowest predictions and return the fastest valid one.

#ifndef KTUNE_TUNER_HPP
#define KTUNE_TUNER_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "ktune/errors.hpp"
#include "ktune/measurement.hpp"
#include "ktune/model.hpp"
#include "ktune/paramspace.hpp"

namespace ktune {

inline constexpr std::uint64_t kUnlimitedSweep = std::numeric_limits<std::uint64_t>::max();

struct TunerConfig {
  std::size_t n_train = 2000;
  std::size_t m_candidates = 200;
  std::size_t k_bag = 11;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::uint64_t max_prediction_sweep = kUnlimitedSweep;
  std::size_t repetitions = 1;
  std::size_t jobs = 1;
};

void validate(const TunerConfig& cfg);
nlohmann::json tuner_config_to_json(const TunerConfig& cfg);

struct Candidate {
  ConfigIndex index = 0;
  Configuration config;
  double predicted = 0.0;
};

struct TuningReport {
  std::string space_name;
  std::string runner_id;
  TunerConfig config;
  std::uint64_t sample_seed = 0;  // seed of the stage-1 draw
  std::uint64_t sweep_seed = 0;   // seed of the prediction subsample (capped sweeps only)

  bool has_best = false;
  ConfigIndex best_index = 0;
  Configuration best_config;
  double best_time = 0.0;
  double predicted_best_time = 0.0;  // model prediction for best_config

  SampleSet stage1_samples;
  SampleSet stage2_samples;
  std::vector<double> stage2_predictions;  // aligned with stage2_samples
  std::size_t stage2_invalid_count = 0;
  std::size_t measurements_total = 0;
};

nlohmann::json report_to_json(const TuningReport& report);

// Every stage-2 candidate was invalid. Carries everything measured so far.
class AllCandidatesInvalidError : public Error {
 public:
  explicit AllCandidatesInvalidError(TuningReport report)
      : Error("all " + std::to_string(report.stage2_samples.samples.size()) + " stage-2 candidates were invalid"),
        report_(std::move(report)) {}
  const TuningReport& report() const { return report_; }

 private:
  TuningReport report_;
};

// The m lowest-predicted statically valid configurations, sorted by prediction then index. All of
// the space is scored unless its cardinality exceeds sweep_cap, in which case a seeded uniform
// subset of sweep_cap configurations is scored. Returns fewer than m when fewer are valid.
std::vector<Candidate> top_m_predicted(const Ensemble& ensemble, const ParamSpace& space, std::size_t m,
                                       std::uint64_t sweep_cap = kUnlimitedSweep, std::uint64_t seed = 0,
                                       std::size_t jobs = 1);

struct SearchResult {
  ConfigIndex index = 0;
  Configuration config;
  double seconds = 0.0;
};

// Measures every statically valid configuration once and returns the fastest. `on_sample` sees
// every measurement in index order. Throws EmptySpaceError when nothing is valid.
SearchResult exhaustive_search(const ParamSpace& space, Runner& runner,
                               const std::function<void(const Sample&)>& on_sample = {});

TuningReport autotune(const ParamSpace& space, Runner& runner, const TunerConfig& cfg);

}  // namespace ktune

#endif  // KTUNE_TUNER_HPP
