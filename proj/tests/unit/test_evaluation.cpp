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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ktune/errors.hpp"
#include "ktune/evaluation.hpp"

using namespace ktune;
namespace fs = std::filesystem;

namespace {

ParamSpace reduced_convolution() {
  return ParamSpace("convolution-small", {{"wg_x", {1, 4, 16, 64}},
                                          {"wg_y", {1, 4, 16}},
                                          {"ppt_x", {1, 4, 16}},
                                          {"ppt_y", {1, 4, 16}},
                                          {"use_image", {0, 1}},
                                          {"use_local", {0, 1}},
                                          {"padding", {0, 1}},
                                          {"interleaved", {0, 1}},
                                          {"unroll", {0, 1}}});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Ensemble constant_ensemble(const ParamSpace& s, double seconds) {
  Network net = make_network(static_cast<Eigen::Index>(s.dimension()));
  net.output_bias = std::log(seconds);
  return Ensemble{s.name(), Encoder(s), {net}};
}

}  // namespace

TEST_CASE("mean relative error against a hand computation") {
  const ParamSpace s("p", {{"a", {0, 1}}});
  SampleSet holdout{"p", "x", {}};
  holdout.samples.push_back({0, s.config_at(0), Outcome::valid(1.0), 1, {}});
  holdout.samples.push_back({1, s.config_at(1), Outcome::valid(4.0), 1, {}});
  holdout.samples.push_back({1, s.config_at(1), Outcome::invalid(InvalidReason::LaunchFailure), 1, {}});
  // constant prediction 2: |2-1|/1 = 1, |2-4|/4 = 0.5
  CHECK(mean_relative_error(constant_ensemble(s, 2.0), holdout) == doctest::Approx(0.75));
  holdout.samples.resize(0);
  CHECK_THROWS_AS(mean_relative_error(constant_ensemble(s, 2.0), holdout), EmptyTrainingSetError);
}

TEST_CASE("holdout and training sets are disjoint") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner r(builtin_surrogate("gpu-b", s), s);
  const Holdout h = draw_holdout(s, r, 300, 1);
  CHECK(h.samples.samples.size() == 300);
  for (const auto& x : h.samples.samples) CHECK(x.outcome.is_valid());
  CHECK(std::is_sorted(h.excluded.begin(), h.excluded.end()));
  CHECK(h.excluded.size() >= 300);
  const SampleSet t = draw_training_set(s, r, h, 500, 2);
  CHECK(t.samples.size() == 500);
  for (const auto& x : t.samples) CHECK_FALSE(std::binary_search(h.excluded.begin(), h.excluded.end(), x.index));
  CHECK_THROWS_AS(draw_training_set(s, r, h, s.cardinality(), 2), CapacityError);
}

TEST_CASE("learning curve records every repeat") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner r(builtin_surrogate("cpu-like", s), s);
  CurveOptions opt;
  opt.k_bag = 3;
  opt.train.epochs = 40;
  opt.holdout_size = 100;
  const auto points = learning_curve(s, r, {50, 200}, 2, 5, opt);
  REQUIRE(points.size() == 2);
  for (const auto& p : points) {
    CHECK(p.repeat_mre.size() == 2);
    REQUIRE(p.mre.has_value());
    CHECK(*p.mre == doctest::Approx((*p.repeat_mre[0] + *p.repeat_mre[1]) / 2));
    CHECK(*p.mre >= 0.0);
  }
  const auto again = learning_curve(s, r, {50, 200}, 2, 5, opt);
  CHECK(*again[1].mre == *points[1].mre);

  // k larger than the valid count makes every repeat fail, reported rather than thrown
  opt.k_bag = 60;
  const auto failed = learning_curve(s, r, {20}, 2, 5, opt);
  CHECK_FALSE(failed[0].mre.has_value());
  CHECK(failed[0].failures.size() == 2);

  const auto path = fs::temp_directory_path() / "ktune_curve.csv";
  write_learning_curve_csv(points, path);
  const std::string text = slurp(path);
  CHECK(text.rfind("n_train,repeat,mre\n50,0,", 0) == 0);
  fs::remove(path);
}

TEST_CASE("scatter export") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner r(builtin_surrogate("gpu-a", s), s);
  const Holdout h = draw_holdout(s, r, 150, 3);
  const Ensemble e = constant_ensemble(s, 0.01);
  const auto pts = scatter_export(e, h.samples, 100, 4);
  CHECK(pts.size() == 100);
  for (const auto& p : pts) {
    CHECK(p.predicted == doctest::Approx(0.01));
    CHECK(p.actual > 0.0);
  }
  CHECK_THROWS_AS(scatter_export(e, h.samples, 151, 4), InsufficientDataError);
}

TEST_CASE("ground truth and slowdown") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner r(builtin_surrogate("gpu-a", s), s);
  const SearchResult opt = ground_truth_optimum(s, r);
  double brute = 1e300;
  for (ConfigIndex i = 0; i < s.cardinality(); ++i) {
    const auto t = r.reference_time(s.config_at(i));
    if (t) brute = std::min(brute, *t);
  }
  CHECK(opt.seconds == brute);
  TuningReport rep;
  rep.has_best = true;
  rep.best_config = opt.config;
  rep.best_time = opt.seconds * 0.97;  // noisy measurement
  CHECK(slowdown(r, rep, opt.seconds) == 1.0);
}

TEST_CASE("slowdown grid") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner r(builtin_surrogate("gpu-a", s), s);
  TunerConfig base;
  base.k_bag = 3;
  base.train.epochs = 40;
  const auto cells = slowdown_grid(s, r, {100, 300}, {5, 20}, 2, 1, base);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].n_train == 100);
  CHECK(cells[0].m_candidates == 5);
  CHECK(cells[3].m_candidates == 20);
  for (const auto& c : cells) {
    CHECK(c.n_success + c.invalid_run_count == 2);
    if (c.mean_slowdown) CHECK(*c.mean_slowdown >= 1.0);
  }
  const auto path = fs::temp_directory_path() / "ktune_grid.csv";
  write_slowdown_csv(cells, path);
  CHECK(slurp(path).rfind("n_train,m_candidates,mean_slowdown,n_success,n_invalid\n100,5,", 0) == 0);
  fs::remove(path);
}

TEST_CASE("random baseline") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner r(builtin_surrogate("cpu-like", s), s);
  const SearchResult b = random_baseline(s, r, s.cardinality(), 1);
  CHECK(b.seconds == exhaustive_search(s, r).seconds);
  CHECK(random_baseline(s, r, 50, 2).seconds >= b.seconds);
}

TEST_CASE("transfer matrix") {
  const ParamSpace s = reduced_convolution();
  SurrogateRunner cpu(builtin_surrogate("cpu-like", s), s), gpu(builtin_surrogate("gpu-a", s), s);
  const TransferMatrix m = transfer_report(s, {&cpu, &gpu});
  CHECK(m.runner_ids == std::vector<std::string>{"surrogate:cpu-like", "surrogate:gpu-a"});
  CHECK(*m.cells[0][0] == 1.0);
  CHECK(*m.cells[1][1] == 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      if (m.cells[i][j]) CHECK(*m.cells[i][j] >= 1.0);
  const auto path = fs::temp_directory_path() / "ktune_transfer.csv";
  write_transfer_csv(m, path);
  CHECK(slurp(path).rfind("runner,surrogate:cpu-like,surrogate:gpu-a\nsurrogate:cpu-like,1,", 0) == 0);
  fs::remove(path);
}
