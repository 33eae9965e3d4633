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

// Finite tuning-parameter spaces. A configuration is one value per parameter; configurations are
// numbered in mixed radix with the last parameter varying fastest.

#ifndef KTUNE_PARAMSPACE_HPP
#define KTUNE_PARAMSPACE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ktune {

using Value = std::int64_t;
using ConfigIndex = std::uint64_t;

struct ParamDef {
  std::string name;
  std::vector<Value> values;

  bool operator==(const ParamDef&) const = default;
};

enum class RuleKind { MaxProduct, MaxWeightedSum, ForbiddenCombination };

std::string_view to_string(RuleKind kind);
RuleKind rule_kind_from_string(std::string_view text);

// Declarative validity constraint.
//  MaxProduct:           prod(coefficients) * prod(operand values) <= bound
//  MaxWeightedSum:       sum(coefficient_i * value_i) <= bound
//  ForbiddenCombination: invalid iff value_i == coefficients[i] for every operand (bound unused)
// Empty coefficients mean "all ones" for the first two kinds.
struct ValidityRule {
  RuleKind kind = RuleKind::MaxProduct;
  std::vector<std::string> operands;
  std::vector<Value> coefficients;
  Value bound = 0;

  bool operator==(const ValidityRule&) const = default;
};

struct Configuration {
  std::vector<Value> values;

  std::size_t size() const { return values.size(); }
  Value operator[](std::size_t i) const { return values[i]; }
  bool operator==(const Configuration&) const = default;
};

class ParamSpace {
 public:
  ParamSpace() = default;
  ParamSpace(std::string name, std::vector<ParamDef> params, std::vector<ValidityRule> rules = {});

  const std::string& name() const { return name_; }
  const std::vector<ParamDef>& params() const { return params_; }
  const std::vector<ValidityRule>& rules() const { return rules_; }
  std::size_t dimension() const { return params_.size(); }

  ConfigIndex cardinality() const { return cardinality_; }

  // Position of `name` in the parameter list; throws LookupError.
  std::size_t param_index(std::string_view name) const;

  // Position of `value` within parameter `param`'s value list; throws MismatchError.
  std::size_t value_rank(std::size_t param, Value value) const;

  Configuration config_at(ConfigIndex index) const;
  ConfigIndex index_of(const Configuration& config) const;

  bool contains(const Configuration& config) const;
  bool is_valid(const Configuration& config) const;

  // Copy of this space with extra rules appended.
  ParamSpace with_rules(const std::vector<ValidityRule>& extra) const;

  bool operator==(const ParamSpace& other) const {
    return name_ == other.name_ && params_ == other.params_ && rules_ == other.rules_;
  }

 private:
  struct CompiledRule {
    RuleKind kind;
    std::vector<std::size_t> params;
    std::vector<Value> coefficients;
    Value bound;
  };

  bool violates(const CompiledRule& rule, const Configuration& config) const;

  std::string name_;
  std::vector<ParamDef> params_;
  std::vector<ValidityRule> rules_;
  std::vector<CompiledRule> compiled_;
  ConfigIndex cardinality_ = 1;
};

// Free-function surface.
inline ConfigIndex cardinality(const ParamSpace& space) { return space.cardinality(); }
inline Configuration config_at_index(const ParamSpace& space, ConfigIndex index) {
  return space.config_at(index);
}
inline ConfigIndex index_of_config(const ParamSpace& space, const Configuration& config) {
  return space.index_of(config);
}
inline bool is_statically_valid(const ParamSpace& space, const Configuration& config) {
  return space.is_valid(config);
}

// n distinct configuration indices drawn uniformly without replacement; throws CapacityError when
// n exceeds the cardinality.
std::vector<ConfigIndex> sample_indices(const ParamSpace& space, std::size_t n, std::uint64_t seed);
std::vector<Configuration> sample_random(const ParamSpace& space, std::size_t n, std::uint64_t seed);

// The three benchmark spaces: "convolution", "raycasting", "stereo".
ParamSpace builtin_space(std::string_view name);
std::vector<std::string> builtin_space_names();

// Device limits shared by the bundled surrogate profiles: work-group size <= 1024 and local
// memory tile <= 49152 bytes. Applies to any space with wg_x/wg_y/ppt_x/ppt_y parameters; the
// local-memory rule is added once per use_local-like flag present in `space`.
std::vector<ValidityRule> default_device_rules(const ParamSpace& space);

nlohmann::json rule_to_json(const ValidityRule& rule);
ValidityRule rule_from_json(const nlohmann::json& j);
nlohmann::json space_to_json(const ParamSpace& space);
ParamSpace space_from_json(const nlohmann::json& j);

ParamSpace load_space(const std::filesystem::path& path);
void save_space(const ParamSpace& space, const std::filesystem::path& path);

// A builtin name or a path to a space JSON file.
ParamSpace resolve_space(const std::string& name_or_path);

std::string format_config(const ParamSpace& space, const Configuration& config);

}  // namespace ktune

#endif  // KTUNE_PARAMSPACE_HPP
