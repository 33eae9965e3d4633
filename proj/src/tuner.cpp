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

#include "ktune/tuner.hpp"

#include <algorithm>
#include <numeric>

#include "ktune/random.hpp"

namespace ktune {

void validate(const TunerConfig& cfg) {
  if (cfg.k_bag < 1) throw SpecError("k_bag must be at least 1");
  if (cfg.n_train < cfg.k_bag) throw SpecError("n_train must be at least k_bag");
  if (cfg.m_candidates < 1) throw SpecError("m_candidates must be at least 1");
  if (cfg.repetitions < 1) throw SpecError("repetitions must be at least 1");
  if (cfg.max_prediction_sweep < 1) throw SpecError("max_prediction_sweep must be positive");
  validate(cfg.train);
}

nlohmann::json tuner_config_to_json(const TunerConfig& cfg) {
  nlohmann::json sweep = cfg.max_prediction_sweep == kUnlimitedSweep ? nlohmann::json("unlimited")
                                                                      : nlohmann::json(cfg.max_prediction_sweep);
  return {{"n_train", cfg.n_train},
          {"m_candidates", cfg.m_candidates},
          {"k_bag", cfg.k_bag},
          {"seed", cfg.seed},
          {"repetitions", cfg.repetitions},
          {"max_prediction_sweep", sweep},
          {"train",
           {{"epochs", cfg.train.epochs},
            {"learning_rate", cfg.train.learning_rate},
            {"batch_size", cfg.train.batch_size},
            {"weight_init_scale", cfg.train.weight_init_scale},
            {"hidden_units", cfg.train.hidden_units},
            {"seed", cfg.train.seed}}}};
}

nlohmann::json report_to_json(const TuningReport& r) {
  nlohmann::json j{{"space_name", r.space_name},
                   {"runner_id", r.runner_id},
                   {"config", tuner_config_to_json(r.config)},
                   {"seeds", {{"tuner", r.config.seed}, {"sample", r.sample_seed}, {"sweep", r.sweep_seed},
                              {"train", r.config.train.seed}}},
                   {"has_best", r.has_best},
                   {"stage2_invalid_count", r.stage2_invalid_count},
                   {"measurements_total", r.measurements_total},
                   {"stage2_predictions", r.stage2_predictions},
                   {"stage1_samples", sample_set_to_json(r.stage1_samples)},
                   {"stage2_samples", sample_set_to_json(r.stage2_samples)}};
  if (r.has_best) {
    j["best"] = {{"config_index", r.best_index},
                 {"values", r.best_config.values},
                 {"time_seconds", r.best_time},
                 {"predicted_seconds", r.predicted_best_time}};
  } else {
    j["best"] = nullptr;
  }
  return j;
}

std::vector<Candidate> top_m_predicted(const Ensemble& ensemble, const ParamSpace& space, std::size_t m,
                                       std::uint64_t sweep_cap, std::uint64_t seed, std::size_t jobs) {
  if (m < 1) throw SpecError("m must be at least 1");
  if (ensemble.encoder.space_name() != space.name() || ensemble.input_dim() != static_cast<Eigen::Index>(space.dimension()))
    throw MismatchError("model for '" + ensemble.space_name + "' cannot score space '" + space.name() + "'");

  std::vector<ConfigIndex> scored;
  if (space.cardinality() <= sweep_cap) {
    scored.resize(space.cardinality());
    std::iota(scored.begin(), scored.end(), ConfigIndex{0});
  } else {
    scored = sample_indices(space, static_cast<std::size_t>(sweep_cap), seed);
    std::sort(scored.begin(), scored.end());
  }
  if (!space.rules().empty())
    std::erase_if(scored, [&](ConfigIndex i) { return !space.is_valid(space.config_at(i)); });

  const auto predicted = predict_indices(ensemble, scored, jobs);
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(m, order.size());
  // `scored` is ascending, so position order is index order for ties.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return predicted[a] < predicted[b] || (predicted[a] == predicted[b] && a < b);
                    });
  std::vector<Candidate> top;
  top.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    top.push_back({scored[order[i]], space.config_at(scored[order[i]]), predicted[order[i]]});
  return top;
}

SearchResult exhaustive_search(const ParamSpace& space, Runner& runner,
                               const std::function<void(const Sample&)>& on_sample) {
  std::optional<SearchResult> best;
  for (ConfigIndex i = 0; i < space.cardinality(); ++i) {
    Configuration config = space.config_at(i);
    if (!space.is_valid(config)) continue;
    const Sample s = measure(runner, config, 1);
    if (on_sample) on_sample(s);
    if (s.outcome.is_valid() && (!best || s.outcome.seconds() < best->seconds))
      best = SearchResult{i, std::move(config), s.outcome.seconds()};
  }
  if (!best) throw EmptySpaceError("space '" + space.name() + "' has no valid configuration");
  return *best;
}

TuningReport autotune(const ParamSpace& space, Runner& runner, const TunerConfig& cfg) {
  validate(cfg);
  if (space.cardinality() < cfg.n_train)
    throw CapacityError("n_train " + std::to_string(cfg.n_train) + " exceeds the space cardinality " +
                        std::to_string(space.cardinality()));

  TuningReport report;
  report.space_name = space.name();
  report.runner_id = runner.id();
  report.config = cfg;
  report.sample_seed = derive_seed(cfg.seed, 1);
  report.sweep_seed = derive_seed(cfg.seed, 2);
  report.stage1_samples = {space.name(), runner.id(), {}};
  report.stage2_samples = {space.name(), runner.id(), {}};

  // Stage 1: random sample; static invalids are recorded without running them.
  for (ConfigIndex index : sample_indices(space, cfg.n_train, report.sample_seed)) {
    Configuration config = space.config_at(index);
    if (space.is_valid(config)) {
      report.stage1_samples.samples.push_back(measure(runner, config, cfg.repetitions));
    } else {
      report.stage1_samples.samples.push_back(
          {index, std::move(config), Outcome::invalid(InvalidReason::StaticRule), 0, {}});
    }
  }

  const std::size_t valid = report.stage1_samples.valid_count();
  if (valid < cfg.k_bag)
    throw InsufficientDataError("only " + std::to_string(valid) + " valid stage-1 samples, need k_bag=" +
                                std::to_string(cfg.k_bag));
  TrainConfig train = cfg.train;
  train.seed = derive_seed(cfg.seed, 3);
  report.config.train.seed = train.seed;
  const Ensemble ensemble = train_ensemble(report.stage1_samples, space, cfg.k_bag, train, cfg.jobs);

  // Stage 2: measure the best predicted candidates.
  const auto candidates =
      top_m_predicted(ensemble, space, cfg.m_candidates, cfg.max_prediction_sweep, report.sweep_seed, cfg.jobs);
  for (const auto& c : candidates) {
    Sample s = measure(runner, c.config, cfg.repetitions);
    report.stage2_predictions.push_back(c.predicted);
    if (!s.outcome.is_valid()) {
      ++report.stage2_invalid_count;
    } else if (!report.has_best || s.outcome.seconds() < report.best_time) {
      report.has_best = true;
      report.best_index = c.index;
      report.best_config = c.config;
      report.best_time = s.outcome.seconds();
      report.predicted_best_time = c.predicted;
    }
    report.stage2_samples.samples.push_back(std::move(s));
  }
  report.measurements_total = report.stage1_samples.samples.size() + report.stage2_samples.samples.size();
  if (!report.has_best) throw AllCandidatesInvalidError(std::move(report));
  return report;
}

}  // namespace ktune
