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

// Performance model: a bagged ensemble of perceptrons predicting ln(execution time).

#ifndef KTUNE_MODEL_HPP
#define KTUNE_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ktune/measurement.hpp"
#include "ktune/network.hpp"
#include "ktune/paramspace.hpp"

namespace ktune {

// Maps a configuration to one feature per parameter in [0, 1]. Parameters whose values are exactly
// {0, 1} pass the value through; every other parameter uses rank / (count - 1).
class Encoder {
 public:
  enum class Kind { Binary, Rank };

  struct Rule {
    std::string name;
    std::vector<Value> values;
    Kind kind;
    bool operator==(const Rule&) const = default;
  };

  Encoder() = default;
  explicit Encoder(const ParamSpace& space);
  Encoder(std::string space_name, std::vector<Rule> rules);

  const std::string& space_name() const { return space_name_; }
  const std::vector<Rule>& rules() const { return rules_; }
  Eigen::Index dimension() const { return static_cast<Eigen::Index>(rules_.size()); }

  // Throws MismatchError for configurations of another space.
  Eigen::VectorXd encode(const Configuration& config) const;
  // Decodes the mixed-radix index straight to features.
  void encode_index(ConfigIndex index, Eigen::Ref<Eigen::VectorXd> out) const;

  bool operator==(const Encoder& o) const { return space_name_ == o.space_name_ && rules_ == o.rules_; }

 private:
  void build_tables();

  std::string space_name_;
  std::vector<Rule> rules_;
  std::vector<std::vector<double>> features_;  // per parameter, per value rank
};

inline Eigen::VectorXd encode(const Encoder& encoder, const Configuration& config) { return encoder.encode(config); }

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.2;
  std::size_t batch_size = 32;
  double weight_init_scale = 1.0;
  std::uint64_t seed = 0;
  Eigen::Index hidden_units = kDefaultHiddenUnits;
};

void validate(const TrainConfig& cfg);

// Mean squared error on the (natural) log-times after every epoch.
struct TrainStats {
  std::vector<double> epoch_mse;
};

// Trains one network on the valid samples (invalid ones are dropped). Deterministic in cfg.seed.
// Throws EmptyTrainingSetError without valid samples and DivergenceError on a non-finite loss.
Network train_network(const SampleSet& samples, const ParamSpace& space, const TrainConfig& cfg,
                      TrainStats* stats = nullptr);

// Lower-level entry: features as columns, targets are ln(seconds).
Network fit_network(const Eigen::MatrixXd& features, const Eigen::VectorXd& log_times, const TrainConfig& cfg,
                    TrainStats* stats = nullptr);

struct Ensemble {
  std::string space_name;
  Encoder encoder;
  std::vector<Network> members;

  std::size_t k() const { return members.size(); }
  Eigen::Index input_dim() const { return encoder.dimension(); }
  bool operator==(const Ensemble&) const = default;
};

// Shuffles the valid samples with cfg.seed and deals them into k folds whose sizes differ by at
// most one. Returns, for every valid sample (in input order), its fold number.
std::vector<std::size_t> assign_folds(std::size_t n_valid, std::size_t k, std::uint64_t seed);

// Member i trains on every fold except fold i with seed derive_seed(cfg.seed, i); k = 1 trains a
// single network on all samples with cfg.seed. Members are trained on up to `jobs` threads; the
// result does not depend on `jobs`.
Ensemble train_ensemble(const SampleSet& samples, const ParamSpace& space, std::size_t k, const TrainConfig& cfg,
                        std::size_t jobs = 1);

// Mean of the members' predicted log-times.
double predict_log(const Ensemble& ensemble, const Eigen::Ref<const Eigen::VectorXd>& features);
// exp of predict_log; strictly positive.
double predict(const Ensemble& ensemble, const Configuration& config);
// Predictions for many configurations, optionally on several threads; element i belongs to indices[i].
std::vector<double> predict_indices(const Ensemble& ensemble, std::span<const ConfigIndex> indices,
                                    std::size_t jobs = 1);

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json model_to_json(const Ensemble& ensemble);
// Throws LoadError on schema or shape problems.
Ensemble model_from_json(const nlohmann::json& j);
void save_model(const Ensemble& ensemble, const std::filesystem::path& path);
Ensemble load_model(const std::filesystem::path& path);

}  // namespace ktune

#endif  // KTUNE_MODEL_HPP
