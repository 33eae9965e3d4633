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

#include "ktune/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ktune/random.hpp"

namespace ktune {

double mean_relative_error(const Ensemble& ensemble, const SampleSet& holdout) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : holdout.samples) {
    if (!s.outcome.is_valid()) continue;
    const double actual = s.outcome.seconds();
    sum += std::abs(predict(ensemble, s.config) - actual) / actual;
    ++n;
  }
  if (n == 0) throw EmptyTrainingSetError("holdout has no valid samples");
  return sum / static_cast<double>(n);
}

std::optional<double> ground_truth_time(Runner& runner, const Configuration& config) {
  if (runner.has_reference()) return runner.reference_time(config);
  const Sample s = measure(runner, config, 1);
  if (!s.outcome.is_valid()) return std::nullopt;
  return s.outcome.seconds();
}

SearchResult ground_truth_optimum(const ParamSpace& space, Runner& runner) {
  if (!runner.has_reference()) return exhaustive_search(space, runner);
  std::optional<SearchResult> best;
  for (ConfigIndex i = 0; i < space.cardinality(); ++i) {
    Configuration config = space.config_at(i);
    if (!space.is_valid(config)) continue;
    const auto t = runner.reference_time(config);
    if (t && (!best || *t < best->seconds)) best = SearchResult{i, std::move(config), *t};
  }
  if (!best) throw EmptySpaceError("space '" + space.name() + "' has no valid configuration");
  return *best;
}

namespace {

Sample measure_or_mark(const ParamSpace& space, Runner& runner, ConfigIndex index, std::size_t repetitions) {
  Configuration config = space.config_at(index);
  if (!space.is_valid(config)) return {index, std::move(config), Outcome::invalid(InvalidReason::StaticRule), 0, {}};
  return measure(runner, config, repetitions);
}

}  // namespace

Holdout draw_holdout(const ParamSpace& space, Runner& runner, std::size_t size, std::uint64_t seed,
                     std::size_t repetitions) {
  Holdout holdout;
  holdout.samples = {space.name(), runner.id(), {}};
  if (size == 0) return holdout;
  // The draw order is prefix-stable in n, so growing the draw just extends the sequence.
  std::size_t drawn = 0;
  std::uint64_t want = std::min<std::uint64_t>(space.cardinality(), 2 * size);
  while (holdout.samples.samples.size() < size) {
    if (drawn == space.cardinality())
      throw InsufficientDataError("space has fewer than " + std::to_string(size) + " valid configurations");
    const auto indices = sample_indices(space, static_cast<std::size_t>(want), seed);
    for (; drawn < indices.size() && holdout.samples.samples.size() < size; ++drawn) {
      holdout.excluded.push_back(indices[drawn]);
      Sample s = measure_or_mark(space, runner, indices[drawn], repetitions);
      if (s.outcome.is_valid()) holdout.samples.samples.push_back(std::move(s));
    }
    want = std::min<std::uint64_t>(space.cardinality(), 2 * want);
  }
  std::sort(holdout.excluded.begin(), holdout.excluded.end());
  return holdout;
}

SampleSet draw_training_set(const ParamSpace& space, Runner& runner, const Holdout& holdout, std::size_t n,
                            std::uint64_t seed, std::size_t repetitions) {
  SampleSet set{space.name(), runner.id(), {}};
  const auto total = std::min<std::uint64_t>(space.cardinality(), n + holdout.excluded.size());
  for (ConfigIndex index : sample_indices(space, static_cast<std::size_t>(total), seed)) {
    if (set.samples.size() == n) break;
    if (std::binary_search(holdout.excluded.begin(), holdout.excluded.end(), index)) continue;
    set.samples.push_back(measure_or_mark(space, runner, index, repetitions));
  }
  if (set.samples.size() < n)
    throw CapacityError("space cannot supply " + std::to_string(n) + " training configurations outside the holdout");
  return set;
}

std::vector<AccuracyPoint> learning_curve(const ParamSpace& space, Runner& runner, const std::vector<std::size_t>& sizes,
                                          std::size_t repeats, std::uint64_t seed, const CurveOptions& options) {
  const Holdout holdout = draw_holdout(space, runner, options.holdout_size, derive_seed(seed, 0x686f6c64ULL),
                                      options.repetitions);
  std::vector<AccuracyPoint> points;
  for (std::size_t size : sizes) {
    AccuracyPoint point;
    point.n_train = size;
    point.n_repeats = repeats;
    double sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
      const std::uint64_t run_seed = derive_seed(derive_seed(seed, size), r);
      try {
        const SampleSet train = draw_training_set(space, runner, holdout, size, run_seed, options.repetitions);
        TrainConfig cfg = options.train;
        cfg.seed = derive_seed(run_seed, 1);
        const Ensemble ensemble = train_ensemble(train, space, options.k_bag, cfg, options.jobs);
        const double mre = mean_relative_error(ensemble, holdout.samples);
        point.repeat_mre.push_back(mre);
        sum += mre;
        ++ok;
      } catch (const InsufficientDataError& e) {
        point.repeat_mre.push_back(std::nullopt);
        point.failures.push_back(std::string("insufficient data: ") + e.what());
      } catch (const Error& e) {
        point.repeat_mre.push_back(std::nullopt);
        point.failures.push_back(e.what());
      }
    }
    if (ok > 0) point.mre = sum / static_cast<double>(ok);
    points.push_back(std::move(point));
  }
  return points;
}

std::vector<ScatterPoint> scatter_export(const Ensemble& ensemble, const SampleSet& holdout, std::size_t n_points,
                                         std::uint64_t seed) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < holdout.samples.size(); ++i)
    if (holdout.samples[i].outcome.is_valid()) valid.push_back(i);
  if (valid.size() < n_points)
    throw InsufficientDataError("holdout has " + std::to_string(valid.size()) + " valid samples, " +
                                std::to_string(n_points) + " requested");
  Engine rng(seed);
  shuffle(std::span(valid), rng);
  valid.resize(n_points);
  std::sort(valid.begin(), valid.end());
  std::vector<ScatterPoint> points;
  for (std::size_t i : valid) {
    const auto& s = holdout.samples[i];
    points.push_back({predict(ensemble, s.config), s.outcome.seconds()});
  }
  return points;
}

double slowdown(Runner& runner, const TuningReport& report, double optimum_seconds) {
  const auto t = ground_truth_time(runner, report.best_config);
  return (t ? *t : report.best_time) / optimum_seconds;
}

std::vector<SlowdownCell> slowdown_grid(const ParamSpace& space, Runner& runner, const std::vector<std::size_t>& n_values,
                                        const std::vector<std::size_t>& m_values, std::size_t repeats, std::uint64_t seed,
                                        const TunerConfig& base) {
  const double optimum = ground_truth_optimum(space, runner).seconds;
  std::vector<SlowdownCell> cells;
  for (std::size_t n : n_values) {
    for (std::size_t m : m_values) {
      SlowdownCell cell;
      cell.n_train = n;
      cell.m_candidates = m;
      cell.n_repeats = repeats;
      for (std::size_t r = 0; r < repeats; ++r) {
        TunerConfig cfg = base;
        cfg.n_train = n;
        cfg.m_candidates = m;
        cfg.seed = derive_seed(seed, r);
        try {
          cell.slowdowns.push_back(slowdown(runner, autotune(space, runner, cfg), optimum));
          ++cell.n_success;
        } catch (const AllCandidatesInvalidError&) {
          ++cell.invalid_run_count;
        } catch (const InsufficientDataError&) {
          ++cell.invalid_run_count;
        }
      }
      if (cell.n_success > 0)
        cell.mean_slowdown = std::accumulate(cell.slowdowns.begin(), cell.slowdowns.end(), 0.0) /
                             static_cast<double>(cell.n_success);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

SearchResult random_baseline(const ParamSpace& space, Runner& runner, std::size_t n_random, std::uint64_t seed) {
  std::optional<SearchResult> best;
  for (ConfigIndex index : sample_indices(space, n_random, seed)) {
    const Sample s = measure_or_mark(space, runner, index, 1);
    if (s.outcome.is_valid() && (!best || s.outcome.seconds() < best->seconds))
      best = SearchResult{index, s.config, s.outcome.seconds()};
  }
  if (!best) throw EmptySpaceError("no valid configuration among " + std::to_string(n_random) + " random samples");
  return *best;
}

TransferMatrix transfer_report(const ParamSpace& space, const std::vector<Runner*>& runners) {
  TransferMatrix matrix;
  std::vector<double> optimum_time;
  for (Runner* runner : runners) {
    const auto best = ground_truth_optimum(space, *runner);
    matrix.runner_ids.push_back(runner->id());
    matrix.optima.push_back(best.config);
    optimum_time.push_back(best.seconds);
  }
  const std::size_t n = runners.size();
  matrix.cells.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        matrix.cells[i][j] = 1.0;
        continue;
      }
      const auto t = ground_truth_time(*runners[j], matrix.optima[i]);
      if (t) matrix.cells[i][j] = *t / optimum_time[j];
    }
  }
  return matrix;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::string optional_number(const std::optional<double>& v) { return v ? format_seconds(*v) : std::string(); }

}  // namespace

void write_learning_curve_csv(const std::vector<AccuracyPoint>& points, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "n_train,repeat,mre\n";
  for (const auto& p : points)
    for (std::size_t r = 0; r < p.repeat_mre.size(); ++r)
      out << p.n_train << ',' << r << ',' << optional_number(p.repeat_mre[r]) << '\n';
}

void write_scatter_csv(const std::vector<ScatterPoint>& points, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "predicted_seconds,actual_seconds\n";
  for (const auto& p : points) out << format_seconds(p.predicted) << ',' << format_seconds(p.actual) << '\n';
}

void write_slowdown_csv(const std::vector<SlowdownCell>& cells, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "n_train,m_candidates,mean_slowdown,n_success,n_invalid\n";
  for (const auto& c : cells)
    out << c.n_train << ',' << c.m_candidates << ',' << optional_number(c.mean_slowdown) << ',' << c.n_success << ','
        << c.invalid_run_count << '\n';
}

void write_transfer_csv(const TransferMatrix& matrix, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "runner";
  for (const auto& id : matrix.runner_ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < matrix.runner_ids.size(); ++i) {
    out << matrix.runner_ids[i];
    for (const auto& cell : matrix.cells[i]) out << ',' << optional_number(cell);
    out << '\n';
  }
}

}  // namespace ktune
