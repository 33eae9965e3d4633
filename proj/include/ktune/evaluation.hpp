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

// Experiment harnesses: accuracy learning curves, predicted-vs-actual scatter data, slowdown grids
// over (N, M), a random-search baseline and cross-device transfer matrices. Every table can be
// written as CSV.

#ifndef KTUNE_EVALUATION_HPP
#define KTUNE_EVALUATION_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ktune/measurement.hpp"
#include "ktune/model.hpp"
#include "ktune/tuner.hpp"

namespace ktune {

inline constexpr std::size_t kDefaultHoldoutSize = 500;

// (1/n) sum |predicted - actual| / actual over the valid holdout samples.
double mean_relative_error(const Ensemble& ensemble, const SampleSet& holdout);

// Noise-free time if the runner knows it, a single measurement otherwise; nullopt when invalid.
std::optional<double> ground_truth_time(Runner& runner, const Configuration& config);

// Global optimum by reference times when available, else by exhaustive measurement.
SearchResult ground_truth_optimum(const ParamSpace& space, Runner& runner);

struct AccuracyPoint {
  std::size_t n_train = 0;
  std::optional<double> mre;                     // mean over successful repeats
  std::size_t n_repeats = 0;
  std::vector<std::optional<double>> repeat_mre;  // nullopt: repeat failed
  std::vector<std::string> failures;              // one message per failed repeat
};

struct CurveOptions {
  std::size_t k_bag = 11;
  TrainConfig train;
  std::size_t holdout_size = kDefaultHoldoutSize;
  std::size_t repetitions = 1;
  std::size_t jobs = 1;
};

// Fixed seeded holdout of `holdout_size` valid configurations, disjoint from every training set.
struct Holdout {
  SampleSet samples;
  std::vector<ConfigIndex> excluded;  // every index inspected while drawing it, sorted
};

Holdout draw_holdout(const ParamSpace& space, Runner& runner, std::size_t size, std::uint64_t seed,
                     std::size_t repetitions = 1);

// n_train random configurations avoiding the holdout, measured (static invalids are not run).
SampleSet draw_training_set(const ParamSpace& space, Runner& runner, const Holdout& holdout, std::size_t n,
                            std::uint64_t seed, std::size_t repetitions = 1);

std::vector<AccuracyPoint> learning_curve(const ParamSpace& space, Runner& runner, const std::vector<std::size_t>& sizes,
                                          std::size_t repeats, std::uint64_t seed, const CurveOptions& options = {});

struct ScatterPoint {
  double predicted = 0.0;
  double actual = 0.0;
};

std::vector<ScatterPoint> scatter_export(const Ensemble& ensemble, const SampleSet& holdout, std::size_t n_points = 100,
                                         std::uint64_t seed = 0);

struct SlowdownCell {
  std::size_t n_train = 0;
  std::size_t m_candidates = 0;
  std::optional<double> mean_slowdown;  // missing when no run succeeded
  std::size_t n_repeats = 0;
  std::size_t n_success = 0;
  std::size_t invalid_run_count = 0;  // all-candidates-invalid or too few valid stage-1 samples
  std::vector<double> slowdowns;
};

// Cell (N, M) runs autotune `repeats` times with seeds derive_seed(seed, r), r = 0..repeats-1.
// `base` supplies k, training and sweep settings; its n/m/seed are overridden.
std::vector<SlowdownCell> slowdown_grid(const ParamSpace& space, Runner& runner, const std::vector<std::size_t>& n_values,
                                        const std::vector<std::size_t>& m_values, std::size_t repeats, std::uint64_t seed,
                                        const TunerConfig& base = {});

// Slowdown of a single autotune run relative to a known optimum, by ground-truth times.
double slowdown(Runner& runner, const TuningReport& report, double optimum_seconds);

// Best valid measurement among n_random seeded random configurations.
SearchResult random_baseline(const ParamSpace& space, Runner& runner, std::size_t n_random, std::uint64_t seed);

struct TransferMatrix {
  std::vector<std::string> runner_ids;
  std::vector<Configuration> optima;
  // cells[i][j] = time(optimum of i on runner j) / time(optimum of j on runner j); nullopt when
  // the optimum of i is invalid on j.
  std::vector<std::vector<std::optional<double>>> cells;
};

TransferMatrix transfer_report(const ParamSpace& space, const std::vector<Runner*>& runners);

void write_learning_curve_csv(const std::vector<AccuracyPoint>& points, const std::filesystem::path& path);
void write_scatter_csv(const std::vector<ScatterPoint>& points, const std::filesystem::path& path);
void write_slowdown_csv(const std::vector<SlowdownCell>& cells, const std::filesystem::path& path);
void write_transfer_csv(const TransferMatrix& matrix, const std::filesystem::path& path);

}  // namespace ktune

#endif  // KTUNE_EVALUATION_HPP
