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
#include <map>
#include <set>

#include "doctest.h"
#include "ktune/errors.hpp"
#include "ktune/paramspace.hpp"
#include "ktune/random.hpp"

using namespace ktune;

namespace {

ParamSpace small_space(std::vector<ValidityRule> rules = {}) {
  return ParamSpace("small", {{"a", {1, 2, 4}}, {"b", {0, 1}}, {"c", {3, 5, 7, 9}}}, std::move(rules));
}

// Brute-force enumeration, last parameter fastest.
std::vector<Configuration> enumerate(const ParamSpace& space) {
  std::vector<Configuration> out{Configuration{}};
  for (const auto& p : space.params()) {
    std::vector<Configuration> next;
    for (const auto& prefix : out)
      for (Value v : p.values) {
        Configuration c = prefix;
        c.values.push_back(v);
        next.push_back(c);
      }
    out = std::move(next);
  }
  return out;
}

std::uint64_t product_of_lengths(const ParamSpace& space) {
  std::uint64_t n = 1;
  for (const auto& p : space.params()) n *= p.values.size();
  return n;
}

}  // namespace

TEST_CASE("builtin cardinalities match the value-list product") {
  const std::map<std::string, std::pair<std::size_t, std::uint64_t>> expected{
      {"convolution", {9, 131072}}, {"raycasting", {10, 655360}}, {"stereo", {11, 2359296}}};
  for (const auto& [name, dims] : expected) {
    const ParamSpace s = builtin_space(name);
    CHECK(s.dimension() == dims.first);
    CHECK(s.cardinality() == dims.second);
    CHECK(cardinality(s) == product_of_lengths(s));
  }
}

TEST_CASE("builtin spaces share the work-group and pixels-per-thread parameters") {
  const std::vector<Value> pow2{1, 2, 4, 8, 16, 32, 64, 128};
  for (const auto& name : builtin_space_names()) {
    const ParamSpace s = builtin_space(name);
    for (const char* p : {"wg_x", "wg_y", "ppt_x", "ppt_y"}) CHECK(s.params()[s.param_index(p)].values == pow2);
  }
  const ParamSpace ray = builtin_space("raycasting");
  CHECK(ray.params()[ray.param_index("unroll")].values == std::vector<Value>{1, 2, 4, 8, 16});
  const ParamSpace stereo = builtin_space("stereo");
  CHECK(stereo.params()[stereo.param_index("unroll_disparity")].values == std::vector<Value>{1, 2, 4, 8});
  CHECK(stereo.params()[stereo.param_index("unroll_diff_x")].values == std::vector<Value>{1, 2, 4});
  CHECK_THROWS_AS(builtin_space("matmul"), LookupError);
}

TEST_CASE("empty space has exactly one configuration") {
  const ParamSpace s("empty", {});
  CHECK(s.cardinality() == 1);
  CHECK(s.config_at(0).values.empty());
  CHECK(s.index_of(Configuration{}) == 0);
  CHECK_THROWS_AS(s.config_at(1), RangeError);
}

TEST_CASE("malformed spaces are rejected") {
  CHECK_THROWS_AS(ParamSpace("x", {{"a", {}}}), SpecError);
  CHECK_THROWS_AS(ParamSpace("x", {{"a", {1, 1}}}), SpecError);
  CHECK_THROWS_AS(ParamSpace("x", {{"a", {1}}, {"a", {2}}}), SpecError);
  CHECK_THROWS_AS(ParamSpace("x", {{"a", {1}}}, {{RuleKind::MaxProduct, {"zz"}, {}, 4}}), SpecError);
}

TEST_CASE("mixed-radix decoding: last parameter varies fastest") {
  const ParamSpace s("two", {{"p", {1, 2, 4}}, {"q", {0, 1}}});
  CHECK(s.config_at(3).values == std::vector<Value>{2, 1});
  const auto all = enumerate(s);
  REQUIRE(all.size() == 6);
  for (ConfigIndex i = 0; i < 6; ++i) CHECK(s.config_at(i) == all[i]);
  CHECK(s.config_at(0).values == std::vector<Value>{1, 0});
  CHECK(s.config_at(5).values == std::vector<Value>{4, 1});
  CHECK_THROWS_AS(s.config_at(6), RangeError);
}

TEST_CASE("index round trip is exhaustive on a small space and sampled on stereo") {
  const ParamSpace s = small_space();
  const auto all = enumerate(s);
  for (ConfigIndex i = 0; i < s.cardinality(); ++i) {
    CHECK(s.config_at(i) == all[i]);
    CHECK(s.index_of(all[i]) == i);
  }
  const ParamSpace stereo = builtin_space("stereo");
  Engine rng(11);
  std::size_t failures = 0;
  for (int t = 0; t < 20000; ++t) {
    const ConfigIndex i = uniform_below(rng, stereo.cardinality());
    failures += stereo.index_of(stereo.config_at(i)) != i;
  }
  CHECK(failures == 0);
  CHECK(stereo.config_at(stereo.cardinality() - 1) ==
        Configuration{{128, 128, 128, 128, 1, 1, 1, 1, 8, 4, 4}});
}

TEST_CASE("foreign configurations are rejected") {
  const ParamSpace s = small_space();
  CHECK_FALSE(s.contains(Configuration{{1, 0}}));
  CHECK_FALSE(s.contains(Configuration{{3, 0, 3}}));
  CHECK_THROWS_AS(s.index_of(Configuration{{3, 0, 3}}), MismatchError);
}

TEST_CASE("work-group product rule") {
  const ParamSpace base = builtin_space("convolution");
  const ParamSpace s = base.with_rules({{RuleKind::MaxProduct, {"wg_x", "wg_y"}, {}, 1024}});
  Configuration c = s.config_at(0);
  c.values[0] = 128;
  c.values[1] = 128;
  CHECK_FALSE(is_statically_valid(s, c));
  c.values[0] = 16;
  c.values[1] = 16;
  CHECK(is_statically_valid(s, c));
  CHECK(is_statically_valid(base, s.config_at(s.cardinality() - 1)));
}

TEST_CASE("rule kinds agree with a direct filter") {
  const std::vector<ValidityRule> rules{
      {RuleKind::MaxProduct, {"a", "c"}, {2}, 20},
      {RuleKind::MaxWeightedSum, {"a", "b", "c"}, {1, 5, 1}, 10},
      {RuleKind::ForbiddenCombination, {"b", "c"}, {1, 3}, 0},
  };
  auto direct = [](const Configuration& c, int which) {
    const Value a = c[0], b = c[1], cc = c[2];
    switch (which) {
      case 0: return 2 * a * cc <= 20;
      case 1: return a + 5 * b + cc <= 10;
      default: return !(b == 1 && cc == 3);
    }
  };
  for (int which = 0; which < 3; ++which) {
    const ParamSpace s = small_space({rules[which]});
    std::size_t expected = 0, got = 0;
    for (const auto& c : enumerate(s)) {
      expected += direct(c, which);
      got += s.is_valid(c);
      CHECK(s.is_valid(c) == direct(c, which));
    }
    CHECK(got == expected);
    CHECK(got > 0);
    CHECK(got < s.cardinality());
  }
}

TEST_CASE("adding a rule never revalidates a configuration") {
  const ParamSpace one = small_space({{RuleKind::MaxProduct, {"a", "c"}, {}, 12}});
  const ParamSpace two = one.with_rules({{RuleKind::MaxWeightedSum, {"b", "c"}, {3, 1}, 8}});
  for (ConfigIndex i = 0; i < one.cardinality(); ++i) {
    const auto c = one.config_at(i);
    if (!one.is_valid(c)) CHECK_FALSE(two.is_valid(c));
  }
}

TEST_CASE("default device rules") {
  const ParamSpace s = builtin_space("convolution");
  const ParamSpace d = s.with_rules(default_device_rules(s));
  auto cfg = [&](Value wx, Value wy, Value px, Value py, Value local) {
    Configuration c = s.config_at(0);
    c.values[s.param_index("wg_x")] = wx;
    c.values[s.param_index("wg_y")] = wy;
    c.values[s.param_index("ppt_x")] = px;
    c.values[s.param_index("ppt_y")] = py;
    c.values[s.param_index("use_local")] = local;
    return c;
  };
  CHECK(d.is_valid(cfg(32, 32, 1, 1, 0)));
  CHECK_FALSE(d.is_valid(cfg(64, 32, 1, 1, 0)));
  // 4 bytes per staged pixel: 32*32*4*4 pixels = 64 KiB > 48 KiB
  CHECK_FALSE(d.is_valid(cfg(32, 32, 4, 4, 1)));
  CHECK(d.is_valid(cfg(32, 32, 4, 4, 0)));
  CHECK(d.is_valid(cfg(32, 32, 4, 2, 1)));
}

TEST_CASE("sampling without replacement") {
  const ParamSpace s = builtin_space("convolution");
  CHECK(sample_random(s, 0, 1).empty());
  const auto a = sample_indices(s, 2000, 42);
  CHECK(a == sample_indices(s, 2000, 42));
  CHECK(a != sample_indices(s, 2000, 43));
  CHECK(std::set<ConfigIndex>(a.begin(), a.end()).size() == 2000);
  // prefix stability
  const auto longer = sample_indices(s, 3000, 42);
  CHECK(std::equal(a.begin(), a.end(), longer.begin()));

  const ParamSpace tiny = small_space();
  const auto all = sample_random(tiny, tiny.cardinality(), 5);
  const auto full = enumerate(tiny);
  std::set<std::vector<Value>> seen;
  for (const auto& c : all) seen.insert(c.values);
  std::set<std::vector<Value>> expected;
  for (const auto& c : full) expected.insert(c.values);
  CHECK(seen == expected);
  CHECK_THROWS_AS(sample_random(tiny, tiny.cardinality() + 1, 5), CapacityError);
}

TEST_CASE("sampling inclusion frequencies are uniform") {
  // 48 configurations, draw 10 per seed: inclusion is Bernoulli(10/48) per trial.
  const ParamSpace s("u", {{"a", {0, 1, 2, 3, 4, 5}}, {"b", {0, 1, 2, 3, 4, 5, 6, 7}}});
  const int trials = 4000;
  const std::size_t n = 10;
  std::vector<int> hits(s.cardinality(), 0);
  for (int t = 0; t < trials; ++t)
    for (ConfigIndex i : sample_indices(s, n, derive_seed(7, t))) ++hits[i];
  const double p = static_cast<double>(n) / static_cast<double>(s.cardinality());
  const double mean = trials * p;
  const double sd = std::sqrt(trials * p * (1 - p));
  for (int h : hits) CHECK(std::abs(h - mean) <= 3.5 * sd);
  int total = 0;
  for (int h : hits) total += h;
  CHECK(total == trials * static_cast<int>(n));
}

TEST_CASE("space JSON round trip and bundled files") {
  const ParamSpace s = small_space({{RuleKind::MaxWeightedSum, {"a", "c"}, {2, 1}, 11},
                                    {RuleKind::ForbiddenCombination, {"b", "c"}, {1, 9}, 0}});
  CHECK(space_from_json(space_to_json(s)) == s);
  const auto path = std::filesystem::temp_directory_path() / "ktune_space_rt.json";
  save_space(s, path);
  CHECK(load_space(path) == s);
  std::filesystem::remove(path);

  for (const auto& name : builtin_space_names()) {
    const auto file = std::filesystem::path(KTUNE_DATA_DIR) / "spaces" / (name + ".json");
    CHECK(load_space(file) == builtin_space(name));
    CHECK(resolve_space(file.string()) == builtin_space(name));
  }
  CHECK_THROWS_AS(resolve_space("no-such-space"), LookupError);
  CHECK_THROWS_AS(space_from_json(nlohmann::json{{"name", "x"}}), SpecError);
}
