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

#include "ktune/measurement.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>

#include "ktune/errors.hpp"
#include "ktune/random.hpp"

namespace ktune {

Outcome Outcome::valid(double seconds) {
  if (!(seconds > 0.0) || !std::isfinite(seconds))
    throw InvalidConfigurationError("valid outcome needs a finite positive time, got " +
                                    std::to_string(seconds));
  return Outcome(seconds);
}

double Outcome::seconds() const {
  if (!valid_) throw InvalidConfigurationError("invalid outcome has no time");
  return seconds_;
}

std::string status_string(const Outcome& outcome) {
  if (outcome.is_valid()) return "valid";
  switch (outcome.reason()) {
    case InvalidReason::StaticRule: return "invalid-static";
    case InvalidReason::LaunchFailure: return "invalid-launch";
    case InvalidReason::CompileFailure: return "invalid-compile";
  }
  return "invalid-static";
}

std::size_t SampleSet::valid_count() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(),
                                                [](const Sample& s) { return s.outcome.is_valid(); }));
}

Sample measure(Runner& runner, const Configuration& config, std::size_t repetitions) {
  if (repetitions < 1) throw RangeError("repetitions must be at least 1");
  if (!runner.space().contains(config))
    throw MismatchError("configuration does not belong to space '" + runner.space().name() + "'");
  return runner.measure(config, repetitions);
}

// --- surrogate -----------------------------------------------------------------------------------

nlohmann::json surrogate_to_json(const SurrogateSpec& spec) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : spec.terms) terms.push_back({{"params", t.params}, {"match", t.match}, {"factor", t.factor}});
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : spec.invalid_rules) rules.push_back(rule_to_json(r));
  return {{"name", spec.name},   {"base_time", spec.base_time},   {"terms", terms},
          {"noise_cv", spec.noise_cv}, {"invalid_rules", rules}, {"seed", spec.seed}};
}

SurrogateSpec surrogate_from_json(const nlohmann::json& j) {
  try {
    SurrogateSpec spec;
    spec.name = j.value("name", std::string("surrogate"));
    spec.base_time = j.at("base_time").get<double>();
    for (const auto& t : j.value("terms", nlohmann::json::array()))
      spec.terms.push_back({t.at("params").get<std::vector<std::string>>(),
                            t.at("match").get<std::vector<Value>>(), t.at("factor").get<double>()});
    spec.noise_cv = j.value("noise_cv", 0.0);
    for (const auto& r : j.value("invalid_rules", nlohmann::json::array()))
      spec.invalid_rules.push_back(rule_from_json(r));
    spec.seed = j.value("seed", std::uint64_t{0});
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed surrogate spec: ") + e.what());
  }
}

SurrogateSpec load_surrogate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open surrogate file '" + path.string() + "'");
  try {
    return surrogate_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON in '") + path.string() + "': " + e.what(), 0);
  }
}

void save_surrogate(const SurrogateSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << surrogate_to_json(spec).dump(2) << '\n';
}

SurrogateRunner::SurrogateRunner(SurrogateSpec spec, ParamSpace space)
    : spec_(std::move(spec)),
      space_(std::move(space)),
      device_(space_.name(), space_.params(), spec_.invalid_rules) {
  if (!(spec_.base_time > 0.0) || !std::isfinite(spec_.base_time))
    throw SpecError("surrogate base_time must be positive");
  if (!(spec_.noise_cv >= 0.0) || !std::isfinite(spec_.noise_cv))
    throw SpecError("surrogate noise_cv must be non-negative");
  // Log-normal noise whose log has zero mean and the requested coefficient of variation.
  noise_sigma_ = std::sqrt(std::log1p(spec_.noise_cv * spec_.noise_cv));

  std::map<std::vector<std::size_t>, std::size_t> table_of;
  for (const auto& term : spec_.terms) {
    if (term.params.empty() || term.params.size() > 2)
      throw SpecError("surrogate terms take one or two parameters");
    if (term.match.size() != term.params.size())
      throw SpecError("surrogate term needs one match value per parameter");
    if (!(term.factor > 0.0) || !std::isfinite(term.factor))
      throw SpecError("surrogate factors must be strictly positive");
    std::vector<std::size_t> params;
    for (const auto& name : term.params) {
      const auto& ps = space_.params();
      if (std::none_of(ps.begin(), ps.end(), [&](const ParamDef& d) { return d.name == name; }))
        throw SpecError("surrogate term names unknown parameter '" + name + "'");
      params.push_back(space_.param_index(name));
    }
    if (params.size() == 2 && params[0] == params[1])
      throw SpecError("pair term repeats parameter '" + term.params[0] + "'");
    std::vector<std::size_t> ranks;
    for (std::size_t i = 0; i < params.size(); ++i) ranks.push_back(space_.value_rank(params[i], term.match[i]));

    auto [it, inserted] = table_of.try_emplace(params, tables_.size());
    if (inserted) {
      Table table;
      table.params = params;
      std::size_t size = 1;
      for (std::size_t p : params) size *= space_.params()[p].values.size();
      table.stride = params.size() == 2 ? space_.params()[params[1]].values.size() : 1;
      table.factors.assign(size, 1.0);
      tables_.push_back(std::move(table));
    }
    Table& table = tables_[it->second];
    const std::size_t cell = ranks.size() == 2 ? ranks[0] * table.stride + ranks[1] : ranks[0];
    table.factors[cell] *= term.factor;
  }
}

double SurrogateRunner::factor(const std::vector<std::size_t>& ranks) const {
  double product = 1.0;
  for (const auto& table : tables_) {
    const std::size_t cell = table.params.size() == 2
                                 ? ranks[table.params[0]] * table.stride + ranks[table.params[1]]
                                 : ranks[table.params[0]];
    product *= table.factors[cell];
  }
  return product;
}

double SurrogateRunner::true_time(const Configuration& config) const {
  if (!device_.is_valid(config))
    throw InvalidConfigurationError("configuration violates a device rule of surrogate '" + spec_.name + "'");
  std::vector<std::size_t> ranks(config.size());
  for (std::size_t i = 0; i < config.size(); ++i) ranks[i] = space_.value_rank(i, config[i]);
  return spec_.base_time * factor(ranks);
}

std::optional<double> SurrogateRunner::reference_time(const Configuration& config) const {
  if (!device_.is_valid(config)) return std::nullopt;
  return true_time(config);
}

Sample SurrogateRunner::measure(const Configuration& config, std::size_t repetitions) {
  Sample sample{space_.index_of(config), config, Outcome::invalid(InvalidReason::LaunchFailure), repetitions, {}};
  if (!device_.is_valid(config)) return sample;
  const double truth = true_time(config);
  if (noise_sigma_ == 0.0) {
    sample.outcome = Outcome::valid(truth);
    return sample;
  }
  std::uint64_t key = 0x51ed2701f3a5c9b3ULL;
  for (Value v : config.values) key = mix64(key ^ static_cast<std::uint64_t>(v));
  Engine rng(derive_seed(spec_.seed, key));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < repetitions; ++r)
    best = std::min(best, truth * std::exp(noise_sigma_ * standard_normal(rng)));
  sample.outcome = Outcome::valid(best);
  return sample;
}

double surrogate_true_time(const SurrogateSpec& spec, const ParamSpace& space, const Configuration& config) {
  return SurrogateRunner(spec, space).true_time(config);
}

SurrogateSpec resolve_surrogate(const std::string& name_or_path, const ParamSpace& space) {
  const auto names = builtin_surrogate_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end())
    return builtin_surrogate(name_or_path, space);
  if (!std::filesystem::exists(name_or_path))
    throw LookupError("'" + name_or_path + "' is neither a builtin surrogate nor an existing file");
  return load_surrogate(name_or_path);
}

// --- external command ----------------------------------------------------------------------------

ExternalRunner::ExternalRunner(std::string command_template, ParamSpace space, int invalid_exit_code)
    : template_(std::move(command_template)), space_(std::move(space)), invalid_exit_code_(invalid_exit_code) {
  std::string literal;
  for (std::size_t i = 0; i < template_.size(); ++i) {
    if (template_[i] != '{') {
      literal += template_[i];
      continue;
    }
    const auto close = template_.find('}', i);
    if (close == std::string::npos) throw SpecError("unterminated placeholder in command template");
    const std::string name = template_.substr(i + 1, close - i - 1);
    std::size_t param;
    try {
      param = space_.param_index(name);
    } catch (const LookupError&) {
      throw SpecError("command template placeholder {" + name + "} names no parameter of space '" +
                      space_.name() + "'");
    }
    pieces_.push_back({std::move(literal), param});
    literal.clear();
    i = close;
  }
  if (!literal.empty()) pieces_.push_back({std::move(literal), std::nullopt});
}

std::string ExternalRunner::render(const Configuration& config) const {
  std::string command;
  for (const auto& piece : pieces_) {
    command += piece.literal;
    if (piece.param) command += std::to_string(config[*piece.param]);
  }
  return command;
}

namespace {

struct CommandResult {
  int exit_code;
  std::string output;
};

CommandResult run_command(const std::string& command) {
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) throw RunnerError("cannot start '" + command + "'");
  std::string output;
  char buffer[4096];
  std::size_t n;
  while ((n = std::fread(buffer, 1, sizeof buffer, pipe)) > 0) output.append(buffer, n);
  const int status = ::pclose(pipe);
  if (status == -1) throw RunnerError("cannot collect status of '" + command + "'");
  if (!WIFEXITED(status)) throw RunnerError("'" + command + "' terminated abnormally");
  return {WEXITSTATUS(status), std::move(output)};
}

std::string last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    last = line.substr(begin, line.find_last_not_of(" \t\r") - begin + 1);
  }
  return last;
}

}  // namespace

Sample ExternalRunner::measure(const Configuration& config, std::size_t repetitions) {
  Sample sample{space_.index_of(config), config, Outcome::invalid(InvalidReason::LaunchFailure), repetitions,
                std::chrono::system_clock::now()};
  const std::string command = render(config);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto result = run_command(command);
    if (result.exit_code == invalid_exit_code_) return sample;
    if (result.exit_code == 127) throw RunnerError("command not found: '" + command + "'");
    if (result.exit_code != 0)
      throw RunnerError("'" + command + "' exited with code " + std::to_string(result.exit_code));
    const std::string line = last_line(result.output);
    char* end = nullptr;
    const double seconds = std::strtod(line.c_str(), &end);
    if (line.empty() || end != line.c_str() + line.size() || !std::isfinite(seconds) || seconds <= 0.0)
      throw RunnerError("'" + command + "' did not print a positive time, last line: '" + line + "'");
    best = std::min(best, seconds);
  }
  sample.outcome = Outcome::valid(best);
  return sample;
}

Sample run_external(const std::string& command_template, const ParamSpace& space, const Configuration& config,
                    std::size_t repetitions, int invalid_exit_code) {
  ExternalRunner runner(command_template, space, invalid_exit_code);
  return measure(runner, config, repetitions);
}

// --- CSV -----------------------------------------------------------------------------------------

std::string format_seconds(double seconds) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", seconds);
  return buffer;
}

std::string csv_header(const ParamSpace& space) {
  std::string header = "config_index";
  for (const auto& p : space.params()) header += "," + p.name;
  return header + ",status,time_seconds,repetitions";
}

std::string csv_row(const Sample& sample) {
  std::string row = std::to_string(sample.index);
  for (Value v : sample.config.values) row += "," + std::to_string(v);
  row += "," + status_string(sample.outcome) + ",";
  if (sample.outcome.is_valid()) row += format_seconds(sample.outcome.seconds());
  return row + "," + std::to_string(sample.repetitions);
}

void save_samples(const SampleSet& set, const ParamSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "# space: " << set.space_name << '\n' << "# runner: " << set.runner_id << '\n';
  out << csv_header(space) << '\n';
  for (const auto& s : set.samples) out << csv_row(s) << '\n';
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename Int>
Int parse_int(const std::string& text, std::size_t line, const char* what) {
  if (text.empty()) throw ParseError(std::string("empty ") + what, line);
  std::size_t pos = 0;
  long long v;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
  }
  if (pos != text.size()) throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
  if constexpr (std::is_unsigned_v<Int>)
    if (v < 0) throw ParseError(std::string("negative ") + what, line);
  return static_cast<Int>(v);
}

}  // namespace

SampleSet load_samples(const std::filesystem::path& path, const ParamSpace& space) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  SampleSet set;
  set.space_name = space.name();
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  const std::string header = csv_header(space);
  const std::size_t k = space.dimension();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# space: ", 0) == 0) set.space_name = line.substr(9);
      if (line.rfind("# runner: ", 0) == 0) set.runner_id = line.substr(10);
      continue;
    }
    if (!header_seen) {
      if (line != header) throw ParseError("expected header '" + header + "'", line_no);
      header_seen = true;
      continue;
    }
    const auto fields = split_commas(line);
    if (fields.size() != k + 4)
      throw ParseError("expected " + std::to_string(k + 4) + " fields, got " + std::to_string(fields.size()), line_no);
    Sample s;
    s.index = parse_int<ConfigIndex>(fields[0], line_no, "config_index");
    s.config.values.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      s.config.values[i] = parse_int<Value>(fields[i + 1], line_no, "parameter value");
      const auto& values = space.params()[i].values;
      if (std::find(values.begin(), values.end(), s.config.values[i]) == values.end())
        throw ParseError("value " + fields[i + 1] + " is not admissible for parameter '" + space.params()[i].name + "'",
                         line_no);
    }
    if (space.index_of(s.config) != s.index)
      throw ParseError("config_index " + fields[0] + " does not match the parameter values", line_no);
    const std::string& status = fields[k + 1];
    const std::string& time = fields[k + 2];
    s.repetitions = parse_int<std::size_t>(fields[k + 3], line_no, "repetitions");
    if (status == "valid") {
      char* end = nullptr;
      const double seconds = std::strtod(time.c_str(), &end);
      if (time.empty() || end != time.c_str() + time.size() || !(seconds > 0.0) || !std::isfinite(seconds))
        throw ParseError("valid row needs a positive time, got '" + time + "'", line_no);
      if (s.repetitions < 1) throw ParseError("valid row needs repetitions >= 1", line_no);
      s.outcome = Outcome::valid(seconds);
    } else {
      if (status == "invalid-static") s.outcome = Outcome::invalid(InvalidReason::StaticRule);
      else if (status == "invalid-launch") s.outcome = Outcome::invalid(InvalidReason::LaunchFailure);
      else if (status == "invalid-compile") s.outcome = Outcome::invalid(InvalidReason::CompileFailure);
      else throw ParseError("unknown status '" + status + "'", line_no);
      if (!time.empty()) throw ParseError("invalid row must have an empty time", line_no);
    }
    set.samples.push_back(std::move(s));
  }
  if (!header_seen) throw ParseError("missing header row in '" + path.string() + "'", line_no);
  return set;
}

SampleCsvWriter::SampleCsvWriter(const std::filesystem::path& path, const ParamSpace& space,
                                 const std::string& runner_id, bool append) {
  const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out_) throw Error("cannot write '" + path.string() + "'");
  if (fresh) {
    out_ << "# space: " << space.name() << '\n' << "# runner: " << runner_id << '\n';
    out_ << csv_header(space) << '\n';
    out_.flush();
  }
}

void SampleCsvWriter::write(const Sample& sample) {
  out_ << csv_row(sample) << '\n';
  out_.flush();
}

nlohmann::json sample_to_json(const Sample& sample) {
  nlohmann::json j{{"config_index", sample.index},
                   {"values", sample.config.values},
                   {"status", status_string(sample.outcome)},
                   {"repetitions", sample.repetitions}};
  j["time_seconds"] = sample.outcome.is_valid() ? nlohmann::json(sample.outcome.seconds()) : nlohmann::json();
  return j;
}

nlohmann::json sample_set_to_json(const SampleSet& set) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : set.samples) samples.push_back(sample_to_json(s));
  return {{"space_name", set.space_name}, {"runner_id", set.runner_id}, {"samples", samples}};
}

}  // namespace ktune
