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

#include "ktune/paramspace.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ktune/errors.hpp"
#include "ktune/random.hpp"

namespace ktune {

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::MaxProduct: return "max-product";
    case RuleKind::MaxWeightedSum: return "max-weighted-sum";
    case RuleKind::ForbiddenCombination: return "forbidden-combination";
  }
  return "unknown";
}

RuleKind rule_kind_from_string(std::string_view text) {
  if (text == "max-product") return RuleKind::MaxProduct;
  if (text == "max-weighted-sum") return RuleKind::MaxWeightedSum;
  if (text == "forbidden-combination") return RuleKind::ForbiddenCombination;
  throw SpecError("unknown rule kind '" + std::string(text) + "'");
}

ParamSpace::ParamSpace(std::string name, std::vector<ParamDef> params,
                       std::vector<ValidityRule> rules)
    : name_(std::move(name)), params_(std::move(params)), rules_(std::move(rules)) {
  std::set<std::string> seen;
  for (const auto& p : params_) {
    if (p.name.empty()) throw SpecError("parameter with empty name in space '" + name_ + "'");
    if (!seen.insert(p.name).second) throw SpecError("duplicate parameter '" + p.name + "'");
    if (p.values.empty()) throw SpecError("parameter '" + p.name + "' has no values");
    std::set<Value> distinct(p.values.begin(), p.values.end());
    if (distinct.size() != p.values.size())
      throw SpecError("parameter '" + p.name + "' has duplicate values");
    const auto count = static_cast<ConfigIndex>(p.values.size());
    if (cardinality_ > std::numeric_limits<ConfigIndex>::max() / count)
      throw SpecError("space '" + name_ + "' is too large to index");
    cardinality_ *= count;
  }

  for (const auto& rule : rules_) {
    CompiledRule compiled{rule.kind, {}, rule.coefficients, rule.bound};
    if (rule.operands.empty()) throw SpecError("validity rule without operands");
    for (const auto& operand : rule.operands) {
      if (!seen.count(operand)) throw SpecError("validity rule names unknown parameter '" + operand + "'");
      compiled.params.push_back(param_index(operand));
    }
    if (rule.kind == RuleKind::ForbiddenCombination) {
      if (rule.coefficients.size() != rule.operands.size())
        throw SpecError("forbidden-combination needs one value per operand");
    } else if (rule.kind == RuleKind::MaxWeightedSum) {
      if (compiled.coefficients.empty()) compiled.coefficients.assign(rule.operands.size(), 1);
      if (compiled.coefficients.size() != rule.operands.size())
        throw SpecError("max-weighted-sum needs one coefficient per operand");
    }
    compiled_.push_back(std::move(compiled));
  }
}

std::size_t ParamSpace::param_index(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw LookupError("space '" + name_ + "' has no parameter '" + std::string(name) + "'");
}

std::size_t ParamSpace::value_rank(std::size_t param, Value value) const {
  const auto& values = params_.at(param).values;
  const auto it = std::find(values.begin(), values.end(), value);
  if (it == values.end())
    throw MismatchError("value " + std::to_string(value) + " is not admissible for parameter '" +
                        params_[param].name + "'");
  return static_cast<std::size_t>(it - values.begin());
}

Configuration ParamSpace::config_at(ConfigIndex index) const {
  if (index >= cardinality_)
    throw RangeError("configuration index " + std::to_string(index) + " out of range for space '" +
                     name_ + "' (cardinality " + std::to_string(cardinality_) + ")");
  Configuration config;
  config.values.resize(params_.size());
  for (std::size_t i = params_.size(); i-- > 0;) {
    const auto count = params_[i].values.size();
    config.values[i] = params_[i].values[index % count];
    index /= count;
  }
  return config;
}

ConfigIndex ParamSpace::index_of(const Configuration& config) const {
  if (config.size() != params_.size())
    throw MismatchError("configuration has " + std::to_string(config.size()) +
                        " values, space '" + name_ + "' has " + std::to_string(params_.size()) +
                        " parameters");
  ConfigIndex index = 0;
  for (std::size_t i = 0; i < params_.size(); ++i)
    index = index * params_[i].values.size() + value_rank(i, config[i]);
  return index;
}

bool ParamSpace::contains(const Configuration& config) const {
  if (config.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& values = params_[i].values;
    if (std::find(values.begin(), values.end(), config[i]) == values.end()) return false;
  }
  return true;
}

bool ParamSpace::violates(const CompiledRule& rule, const Configuration& config) const {
  switch (rule.kind) {
    case RuleKind::MaxProduct: {
      Value product = 1;
      bool overflow = false;
      for (Value c : rule.coefficients) overflow |= __builtin_mul_overflow(product, c, &product);
      for (std::size_t p : rule.params)
        overflow |= __builtin_mul_overflow(product, config[p], &product);
      return overflow || product > rule.bound;
    }
    case RuleKind::MaxWeightedSum: {
      Value sum = 0;
      for (std::size_t i = 0; i < rule.params.size(); ++i) sum += rule.coefficients[i] * config[rule.params[i]];
      return sum > rule.bound;
    }
    case RuleKind::ForbiddenCombination: {
      for (std::size_t i = 0; i < rule.params.size(); ++i)
        if (config[rule.params[i]] != rule.coefficients[i]) return false;
      return true;
    }
  }
  return false;
}

bool ParamSpace::is_valid(const Configuration& config) const {
  if (config.size() != params_.size())
    throw MismatchError("configuration does not belong to space '" + name_ + "'");
  return std::none_of(compiled_.begin(), compiled_.end(),
                      [&](const CompiledRule& r) { return violates(r, config); });
}

ParamSpace ParamSpace::with_rules(const std::vector<ValidityRule>& extra) const {
  auto rules = rules_;
  rules.insert(rules.end(), extra.begin(), extra.end());
  return ParamSpace(name_, params_, std::move(rules));
}

std::vector<ConfigIndex> sample_indices(const ParamSpace& space, std::size_t n,
                                        std::uint64_t seed) {
  const ConfigIndex total = space.cardinality();
  if (n > total)
    throw CapacityError("cannot draw " + std::to_string(n) + " distinct configurations from a space of " +
                        std::to_string(total));
  // Partial Fisher-Yates over the virtual array [0, total), storing only displaced slots.
  Engine rng(seed);
  std::unordered_map<ConfigIndex, ConfigIndex> displaced;
  auto slot = [&](ConfigIndex i) {
    const auto it = displaced.find(i);
    return it == displaced.end() ? i : it->second;
  };
  std::vector<ConfigIndex> picked;
  picked.reserve(n);
  for (ConfigIndex i = 0; i < n; ++i) {
    const ConfigIndex j = i + uniform_below(rng, total - i);
    const ConfigIndex at_j = slot(j);
    displaced[j] = slot(i);
    picked.push_back(at_j);
  }
  return picked;
}

std::vector<Configuration> sample_random(const ParamSpace& space, std::size_t n,
                                         std::uint64_t seed) {
  std::vector<Configuration> configs;
  configs.reserve(n);
  for (ConfigIndex index : sample_indices(space, n, seed)) configs.push_back(space.config_at(index));
  return configs;
}

namespace {

const std::vector<Value> kPowersOfTwo = {1, 2, 4, 8, 16, 32, 64, 128};
const std::vector<Value> kFlag = {0, 1};

std::vector<ParamDef> common_params() {
  return {{"wg_x", kPowersOfTwo}, {"wg_y", kPowersOfTwo}, {"ppt_x", kPowersOfTwo}, {"ppt_y", kPowersOfTwo}};
}

}  // namespace

std::vector<std::string> builtin_space_names() { return {"convolution", "raycasting", "stereo"}; }

ParamSpace builtin_space(std::string_view name) {
  auto params = common_params();
  auto add_flags = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) params.push_back({n, kFlag});
  };
  if (name == "convolution") {
    add_flags({"use_image", "use_local", "padding", "interleaved", "unroll"});
  } else if (name == "raycasting") {
    add_flags({"image_data", "image_tf", "local_tf", "constant_tf", "interleaved"});
    params.push_back({"unroll", {1, 2, 4, 8, 16}});
  } else if (name == "stereo") {
    add_flags({"image_left", "image_right", "local_left", "local_right"});
    params.push_back({"unroll_disparity", {1, 2, 4, 8}});
    params.push_back({"unroll_diff_x", {1, 2, 4}});
    params.push_back({"unroll_diff_y", {1, 2, 4}});
  } else {
    throw LookupError("unknown builtin space '" + std::string(name) + "'");
  }
  return ParamSpace(std::string(name), std::move(params));
}

std::vector<ValidityRule> default_device_rules(const ParamSpace& space) {
  constexpr Value kMaxWorkGroup = 1024;
  constexpr Value kMaxLocalBytes = 49152;
  constexpr Value kBytesPerPixel = 4;
  std::vector<ValidityRule> rules{{RuleKind::MaxProduct, {"wg_x", "wg_y"}, {}, kMaxWorkGroup}};
  for (const char* flag : {"use_local", "local_left", "local_right"}) {
    const bool present = std::any_of(space.params().begin(), space.params().end(),
                                     [&](const ParamDef& p) { return p.name == flag; });
    if (present)
      rules.push_back({RuleKind::MaxProduct, {flag, "wg_x", "ppt_x", "wg_y", "ppt_y"}, {kBytesPerPixel},
                       kMaxLocalBytes});
  }
  return rules;
}

nlohmann::json rule_to_json(const ValidityRule& rule) {
  nlohmann::json j{{"kind", to_string(rule.kind)}, {"operands", rule.operands}, {"bound", rule.bound}};
  if (!rule.coefficients.empty()) j["coefficients"] = rule.coefficients;
  return j;
}

ValidityRule rule_from_json(const nlohmann::json& j) {
  ValidityRule rule;
  rule.kind = rule_kind_from_string(j.at("kind").get<std::string>());
  rule.operands = j.at("operands").get<std::vector<std::string>>();
  if (j.contains("coefficients")) rule.coefficients = j.at("coefficients").get<std::vector<Value>>();
  rule.bound = j.value("bound", Value{0});
  return rule;
}

nlohmann::json space_to_json(const ParamSpace& space) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : space.params()) params.push_back({{"name", p.name}, {"values", p.values}});
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : space.rules()) rules.push_back(rule_to_json(r));
  return {{"name", space.name()}, {"params", params}, {"rules", rules}};
}

ParamSpace space_from_json(const nlohmann::json& j) {
  try {
    std::vector<ParamDef> params;
    for (const auto& p : j.at("params"))
      params.push_back({p.at("name").get<std::string>(), p.at("values").get<std::vector<Value>>()});
    std::vector<ValidityRule> rules;
    if (j.contains("rules"))
      for (const auto& r : j.at("rules")) rules.push_back(rule_from_json(r));
    return ParamSpace(j.at("name").get<std::string>(), std::move(params), std::move(rules));
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed space definition: ") + e.what());
  }
}

ParamSpace load_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open space file '" + path.string() + "'");
  try {
    return space_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON in '") + path.string() + "': " + e.what(), 0);
  }
}

void save_space(const ParamSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << space_to_json(space).dump(2) << '\n';
}

ParamSpace resolve_space(const std::string& name_or_path) {
  const auto names = builtin_space_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end())
    return builtin_space(name_or_path);
  if (!std::filesystem::exists(name_or_path))
    throw LookupError("'" + name_or_path + "' is neither a builtin space nor an existing file");
  return load_space(name_or_path);
}

std::string format_config(const ParamSpace& space, const Configuration& config) {
  std::ostringstream os;
  for (std::size_t i = 0; i < config.size(); ++i) {
    if (i) os << ' ';
    os << (i < space.dimension() ? space.params()[i].name : "?") << '=' << config[i];
  }
  return os.str();
}

}  // namespace ktune
