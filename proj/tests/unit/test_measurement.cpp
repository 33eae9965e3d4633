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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ktune/errors.hpp"
#include "ktune/measurement.hpp"
#include "ktune/random.hpp"

using namespace ktune;
namespace fs = std::filesystem;

namespace {

ParamSpace flag_space() { return ParamSpace("flags", {{"wg_x", {1, 2, 4, 8}}, {"use_local", {0, 1}}, {"f", {0, 1}}}); }

Configuration cfg(Value wg, Value local, Value f) { return Configuration{{wg, local, f}}; }

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("ktune_" + name); }

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::trunc) << text; }

}  // namespace

TEST_CASE("outcome invariants") {
  CHECK(Outcome::valid(0.5).seconds() == 0.5);
  CHECK_THROWS_AS(Outcome::valid(0.0), InvalidConfigurationError);
  CHECK_THROWS_AS(Outcome::valid(-1.0), InvalidConfigurationError);
  CHECK_THROWS_AS(Outcome::valid(std::nan("")), InvalidConfigurationError);
  CHECK_THROWS_AS(Outcome::invalid(InvalidReason::LaunchFailure).seconds(), InvalidConfigurationError);
  CHECK(status_string(Outcome::invalid(InvalidReason::CompileFailure)) == "invalid-compile");
}

TEST_CASE("surrogate products") {
  const ParamSpace s = flag_space();
  SurrogateSpec spec;
  spec.base_time = 1.0;
  SurrogateRunner plain(spec, s);
  CHECK(measure(plain, cfg(4, 1, 0)).outcome == Outcome::valid(1.0));

  spec.terms = {{{"f"}, {1}, 0.5}};
  SurrogateRunner half(spec, s);
  CHECK(measure(half, cfg(2, 0, 1)).outcome == Outcome::valid(0.5));
  CHECK(measure(half, cfg(2, 0, 0)).outcome == Outcome::valid(1.0));

  spec.terms = {{{"f"}, {1}, 0.5}, {{"use_local"}, {1}, 2.0}};
  CHECK(surrogate_true_time(spec, s, cfg(8, 1, 1)) == 1.0);

  // pair term fires only on the exact value pair
  spec.terms = {{{"wg_x", "use_local"}, {1, 1}, 3.0}};
  CHECK(surrogate_true_time(spec, s, cfg(1, 1, 0)) == 3.0);
  CHECK(surrogate_true_time(spec, s, cfg(1, 0, 0)) == 1.0);
  CHECK(surrogate_true_time(spec, s, cfg(2, 1, 0)) == 1.0);
}

TEST_CASE("surrogate invalid rules are launch failures") {
  const ParamSpace s = flag_space();
  SurrogateSpec spec;
  spec.invalid_rules = {{RuleKind::MaxProduct, {"wg_x", "use_local"}, {}, 4}};
  SurrogateRunner r(spec, s);
  const Sample bad = measure(r, cfg(8, 1, 0), 3);
  CHECK_FALSE(bad.outcome.is_valid());
  CHECK(bad.outcome.reason() == InvalidReason::LaunchFailure);
  CHECK(measure(r, cfg(8, 0, 0)).outcome.is_valid());
  CHECK_THROWS_AS(r.true_time(cfg(8, 1, 0)), InvalidConfigurationError);
  CHECK_FALSE(r.reference_time(cfg(8, 1, 0)).has_value());
}

TEST_CASE("surrogate validation") {
  const ParamSpace s = flag_space();
  SurrogateSpec spec;
  spec.terms = {{{"nope"}, {1}, 2.0}};
  CHECK_THROWS_AS(SurrogateRunner(spec, s), SpecError);
  spec.terms = {{{"f"}, {1}, 0.0}};
  CHECK_THROWS_AS(SurrogateRunner(spec, s), SpecError);
  spec.terms = {};
  spec.noise_cv = -0.1;
  CHECK_THROWS_AS(SurrogateRunner(spec, s), SpecError);
}

TEST_CASE("measure preconditions") {
  const ParamSpace s = flag_space();
  SurrogateRunner r(SurrogateSpec{}, s);
  CHECK_THROWS_AS(measure(r, cfg(1, 0, 0), 0), RangeError);
  CHECK_THROWS_AS(measure(r, cfg(3, 0, 0), 1), MismatchError);
}

TEST_CASE("noisy surrogate: deterministic, minimum over repetitions, lognormal spread") {
  const ParamSpace s("wide", {{"i", [] {
                                 std::vector<Value> v(4096);
                                 for (int k = 0; k < 4096; ++k) v[k] = k;
                                 return v;
                               }()}});
  SurrogateSpec spec;
  spec.base_time = 2.0;
  spec.noise_cv = 0.05;
  spec.seed = 9;
  SurrogateRunner a(spec, s), b(spec, s);
  double sum = 0.0, sum2 = 0.0;
  for (ConfigIndex i = 0; i < s.cardinality(); ++i) {
    const auto c = s.config_at(i);
    const double t1 = measure(a, c).outcome.seconds();
    CHECK(t1 == measure(b, c).outcome.seconds());
    CHECK(measure(a, c, 5).outcome.seconds() <= t1);
    const double z = std::log(t1 / 2.0);
    sum += z;
    sum2 += z * z;
  }
  const double n = static_cast<double>(s.cardinality());
  const double sigma = std::sqrt(std::log1p(0.05 * 0.05));
  CHECK(std::abs(sum / n) < 4 * sigma / std::sqrt(n));
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(sigma).epsilon(0.05));
}

TEST_CASE("surrogate optimum equals brute-force minimum of true times") {
  const ParamSpace s = flag_space();
  SurrogateSpec spec;
  spec.terms = {{{"wg_x"}, {1}, 1.7}, {{"wg_x", "use_local"}, {8, 1}, 0.3}, {{"f"}, {1}, 1.2}};
  spec.invalid_rules = {{RuleKind::ForbiddenCombination, {"wg_x", "f"}, {8, 0}, 0}};
  SurrogateRunner r(spec, s);
  double best = 1e300;
  Configuration arg;
  for (ConfigIndex i = 0; i < s.cardinality(); ++i) {
    const auto c = s.config_at(i);
    const auto t = r.reference_time(c);
    if (t && *t < best) {
      best = *t;
      arg = c;
    }
  }
  CHECK(arg == cfg(8, 1, 1));
  CHECK(best == doctest::Approx(0.3 * 1.2));
}

TEST_CASE("bundled surrogates match the builtin profiles") {
  for (const auto& space_name : builtin_space_names()) {
    const ParamSpace space = builtin_space(space_name);
    for (const auto& profile : builtin_surrogate_names()) {
      const auto file = fs::path(KTUNE_DATA_DIR) / "surrogates" / (profile + "-" + space_name + ".json");
      const SurrogateSpec bundled = load_surrogate(file);
      CHECK(bundled == builtin_surrogate(profile, space));
      SurrogateRunner r(bundled, space);
      CHECK(r.id() == "surrogate:" + profile);
    }
  }
  const ParamSpace space = builtin_space("convolution");
  const SurrogateSpec spec = builtin_surrogate("gpu-a", space);
  CHECK(spec.noise_cv == 0.05);
  CHECK(surrogate_from_json(surrogate_to_json(spec)) == spec);
  CHECK_THROWS_AS(builtin_surrogate("tpu", space), LookupError);
  CHECK_THROWS_AS(builtin_surrogate("gpu-a", ParamSpace("x", {{"a", {1}}})), SpecError);
}

TEST_CASE("external runner") {
  const ParamSpace s("ext", {{"wg_x", {1, 8, 16}}, {"wg_y", {2, 8}}});
  const auto script = temp_file("bench.sh");
  write_text(script,
             "#!/bin/sh\n"
             "if [ \"$1\" = 16 ] && [ \"$2\" = 2 ]; then exit 42; fi\n"
             "if [ \"$1\" = 1 ] && [ \"$2\" = 2 ]; then exit 3; fi\n"
             "if [ \"$1\" = 1 ] && [ \"$2\" = 8 ]; then echo warmup; echo oops; exit 0; fi\n"
             "echo compiling\n"
             "echo 0.125\n");
  fs::permissions(script, fs::perms::owner_all);
  ExternalRunner r("sh " + script.string() + " {wg_x} {wg_y}", s);
  CHECK(r.render(Configuration{{16, 8}}) == "sh " + script.string() + " 16 8");

  const Sample ok = measure(r, Configuration{{8, 8}}, 2);
  CHECK(ok.outcome == Outcome::valid(0.125));
  CHECK(ok.repetitions == 2);
  CHECK(ok.timestamp.has_value());

  const Sample bad = run_external("sh " + script.string() + " {wg_x} {wg_y}", s, Configuration{{16, 2}}, 1);
  CHECK(bad.outcome == Outcome::invalid(InvalidReason::LaunchFailure));

  CHECK_THROWS_AS(measure(r, Configuration{{1, 2}}), RunnerError);
  CHECK_THROWS_AS(measure(r, Configuration{{1, 8}}), RunnerError);

  ExternalRunner missing("/nonexistent/ktune-bench {wg_x}", s);
  CHECK_THROWS_AS(measure(missing, Configuration{{8, 8}}), RunnerError);

  ExternalRunner custom("sh " + script.string() + " {wg_x} {wg_y}", s, 3);
  CHECK(measure(custom, Configuration{{1, 2}}).outcome == Outcome::invalid(InvalidReason::LaunchFailure));
  CHECK_THROWS_AS(measure(custom, Configuration{{16, 2}}), RunnerError);

  CHECK_THROWS_AS(ExternalRunner("bench {wg_z}", s), SpecError);
  CHECK_THROWS_AS(ExternalRunner("bench {wg_x", s), SpecError);
  fs::remove(script);
}

TEST_CASE("sample CSV round trip") {
  const ParamSpace s = builtin_space("convolution");
  const ParamSpace d = s.with_rules(default_device_rules(s));
  SurrogateRunner r(builtin_surrogate("gpu-a", s), s);
  SampleSet set{s.name(), r.id(), {}};

  const auto path = temp_file("samples.csv");
  save_samples(set, s, path);
  CHECK(load_samples(path, s) == set);

  for (ConfigIndex i : sample_indices(s, 2000, 3)) {
    const auto c = s.config_at(i);
    if (!d.is_valid(c)) set.samples.push_back({i, c, Outcome::invalid(InvalidReason::StaticRule), 0, {}});
    else set.samples.push_back(measure(r, c, 1 + i % 3));
  }
  set.samples.push_back({5, s.config_at(5), Outcome::invalid(InvalidReason::CompileFailure), 1, {}});
  CHECK(set.valid_count() > 1000);
  CHECK(set.valid_count() < set.samples.size());
  save_samples(set, s, path);
  const SampleSet loaded = load_samples(path, s);
  CHECK(loaded == set);
  for (std::size_t i = 0; i < set.samples.size(); ++i)
    if (set.samples[i].outcome.is_valid())
      CHECK(loaded.samples[i].outcome.seconds() == set.samples[i].outcome.seconds());

  // the incremental writer produces the same file
  const auto incremental = temp_file("samples_inc.csv");
  {
    SampleCsvWriter w(incremental, s, r.id(), false);
    for (const auto& smp : set.samples) w.write(smp);
  }
  CHECK(load_samples(incremental, s) == set);
  fs::remove(path);
  fs::remove(incremental);
}

TEST_CASE("sample CSV errors name the line") {
  const ParamSpace s("p", {{"a", {1, 2}}, {"b", {0, 1}}});
  const auto path = temp_file("bad.csv");
  const std::string header = csv_header(s) + "\n";
  CHECK(header == "config_index,a,b,status,time_seconds,repetitions\n");
  auto line_of = [&](const std::string& text) {
    write_text(path, text);
    try {
      load_samples(path, s);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of(header + "0,1,0,valid,0.5,1\n1,1,1,valid,abc,1\n") == 3);
  CHECK(line_of(header + "0,1,0,valid,0.5\n") == 2);
  CHECK(line_of(header + "0,3,0,valid,0.5,1\n") == 2);
  CHECK(line_of(header + "1,1,0,valid,0.5,1\n") == 2);
  CHECK(line_of(header + "0,1,0,broken,,1\n") == 2);
  CHECK(line_of(header + "0,1,0,invalid-launch,0.5,1\n") == 2);
  CHECK(line_of(header + "0,1,0,valid,-2,1\n") == 2);
  CHECK(line_of("# space: p\nconfig_index,b,a,status,time_seconds,repetitions\n") == 2);
  fs::remove(path);
}
