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

#include "ktune/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "ktune/errors.hpp"
#include "ktune/random.hpp"

namespace ktune {

// --- encoder -------------------------------------------------------------------------------------

Encoder::Encoder(const ParamSpace& space) : space_name_(space.name()) {
  for (const auto& p : space.params()) {
    auto sorted = p.values;
    std::sort(sorted.begin(), sorted.end());
    const bool binary = sorted == std::vector<Value>{0, 1};
    rules_.push_back({p.name, p.values, binary ? Kind::Binary : Kind::Rank});
  }
  build_tables();
}

Encoder::Encoder(std::string space_name, std::vector<Rule> rules)
    : space_name_(std::move(space_name)), rules_(std::move(rules)) {
  build_tables();
}

void Encoder::build_tables() {
  features_.clear();
  for (const auto& rule : rules_) {
    if (rule.values.empty()) throw SpecError("encoder rule '" + rule.name + "' has no values");
    std::vector<double> table(rule.values.size());
    for (std::size_t r = 0; r < rule.values.size(); ++r) {
      if (rule.kind == Kind::Binary) {
        if (rule.values[r] != 0 && rule.values[r] != 1)
          throw SpecError("binary encoder rule '" + rule.name + "' has a non-0/1 value");
        table[r] = static_cast<double>(rule.values[r]);
      } else {
        table[r] = rule.values.size() == 1 ? 0.0
                                           : static_cast<double>(r) / static_cast<double>(rule.values.size() - 1);
      }
    }
    features_.push_back(std::move(table));
  }
}

Eigen::VectorXd Encoder::encode(const Configuration& config) const {
  if (config.size() != rules_.size())
    throw MismatchError("configuration has " + std::to_string(config.size()) + " values, encoder for '" +
                        space_name_ + "' expects " + std::to_string(rules_.size()));
  Eigen::VectorXd x(dimension());
  for (std::size_t p = 0; p < rules_.size(); ++p) {
    const auto& values = rules_[p].values;
    const auto it = std::find(values.begin(), values.end(), config[p]);
    if (it == values.end())
      throw MismatchError("value " + std::to_string(config[p]) + " is foreign to parameter '" + rules_[p].name + "'");
    x(static_cast<Eigen::Index>(p)) = features_[p][static_cast<std::size_t>(it - values.begin())];
  }
  return x;
}

void Encoder::encode_index(ConfigIndex index, Eigen::Ref<Eigen::VectorXd> out) const {
  for (std::size_t p = rules_.size(); p-- > 0;) {
    const auto count = rules_[p].values.size();
    out(static_cast<Eigen::Index>(p)) = features_[p][index % count];
    index /= count;
  }
  if (index != 0) throw RangeError("configuration index out of range for encoder of '" + space_name_ + "'");
}

// --- training ------------------------------------------------------------------------------------

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw SpecError("epochs must be positive");
  if (!(cfg.learning_rate > 0.0)) throw SpecError("learning_rate must be positive");
  if (cfg.batch_size < 1) throw SpecError("batch_size must be positive");
  if (!(cfg.weight_init_scale > 0.0)) throw SpecError("weight_init_scale must be positive");
  if (cfg.hidden_units < 1) throw SpecError("hidden_units must be positive");
}

namespace {

struct TrainingData {
  Eigen::MatrixXd features;  // input x n
  Eigen::VectorXd log_times;
};

TrainingData valid_data(const SampleSet& samples, const ParamSpace& space) {
  const Encoder encoder(space);
  const auto n = static_cast<Eigen::Index>(samples.valid_count());
  TrainingData data{Eigen::MatrixXd(encoder.dimension(), n), Eigen::VectorXd(n)};
  Eigen::Index col = 0;
  for (const auto& s : samples.samples) {
    if (!s.outcome.is_valid()) continue;
    data.features.col(col) = encoder.encode(s.config);
    data.log_times(col) = std::log(s.outcome.seconds());
    ++col;
  }
  return data;
}

double mse(const Network& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& standardized) {
  return (forward_batch(net, x).transpose() - standardized).squaredNorm() / static_cast<double>(x.cols());
}

}  // namespace

Network fit_network(const Eigen::MatrixXd& features, const Eigen::VectorXd& log_times, const TrainConfig& cfg,
                    TrainStats* stats) {
  validate(cfg);
  const Eigen::Index n = features.cols();
  if (n == 0) throw EmptyTrainingSetError("no valid samples to train on");
  if (log_times.size() != n) throw MismatchError("one log-time per feature column required");

  Network net = make_network(features.rows(), cfg.hidden_units);
  net.target_mean = log_times.mean();
  const double var = (log_times.array() - net.target_mean).square().mean();
  net.target_std = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd targets = (log_times.array() - net.target_mean) / net.target_std;

  Engine rng(cfg.seed);
  randomize(net, rng, cfg.weight_init_scale);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<Eigen::Index>(cfg.batch_size);
  Eigen::MatrixXd xb(features.rows(), std::min(batch, n));
  Eigen::VectorXd tb(std::min(batch, n));
  const double scale2 = net.target_std * net.target_std;

  if (stats) stats->epoch_mse.clear();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(std::span(order), rng);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index size = std::min(batch, n - start);
      xb.resize(Eigen::NoChange, size);
      tb.resize(size);
      for (Eigen::Index j = 0; j < size; ++j) {
        xb.col(j) = features.col(order[static_cast<std::size_t>(start + j)]);
        tb(j) = targets(order[static_cast<std::size_t>(start + j)]);
      }
      apply_step(net, batch_gradient(net, xb, tb), cfg.learning_rate);
    }
    const double loss = mse(net, features, targets) * scale2;
    if (!std::isfinite(loss) || !all_finite(net)) throw DivergenceError("training loss is not finite", epoch);
    if (stats) stats->epoch_mse.push_back(loss);
  }
  return net;
}

Network train_network(const SampleSet& samples, const ParamSpace& space, const TrainConfig& cfg, TrainStats* stats) {
  const auto data = valid_data(samples, space);
  return fit_network(data.features, data.log_times, cfg, stats);
}

std::vector<std::size_t> assign_folds(std::size_t n_valid, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw SpecError("k must be at least 1");
  std::vector<std::size_t> order(n_valid);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine rng(derive_seed(seed, 0x666f6c6473ULL));
  shuffle(std::span(order), rng);
  std::vector<std::size_t> fold(n_valid);
  for (std::size_t pos = 0; pos < n_valid; ++pos) fold[order[pos]] = pos % k;
  return fold;
}

namespace {

// Runs task(i) for i in [0, count) on up to `jobs` threads.
template <typename Task>
void parallel_for(std::size_t count, std::size_t jobs, const Task& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += jobs) task(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Ensemble train_ensemble(const SampleSet& samples, const ParamSpace& space, std::size_t k, const TrainConfig& cfg,
                        std::size_t jobs) {
  validate(cfg);
  if (k < 1) throw SpecError("k must be at least 1");
  const auto data = valid_data(samples, space);
  const auto n = static_cast<std::size_t>(data.features.cols());
  if (n == 0) throw EmptyTrainingSetError("no valid samples to train on");
  if (n < k)
    throw InsufficientDataError("need at least k=" + std::to_string(k) + " valid samples, have " + std::to_string(n));

  Ensemble ensemble{space.name(), Encoder(space), std::vector<Network>(k)};
  if (k == 1) {
    ensemble.members[0] = fit_network(data.features, data.log_times, cfg);
    return ensemble;
  }

  const auto fold = assign_folds(n, k, cfg.seed);
  parallel_for(k, jobs, [&](std::size_t member) {
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < n; ++i)
      if (fold[i] != member) keep.push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd x = data.features(Eigen::all, keep);
    const Eigen::VectorXd t = data.log_times(keep);
    TrainConfig member_cfg = cfg;
    member_cfg.seed = derive_seed(cfg.seed, member);
    ensemble.members[member] = fit_network(x, t, member_cfg);
  });
  return ensemble;
}

// --- prediction ----------------------------------------------------------------------------------

double predict_log(const Ensemble& ensemble, const Eigen::Ref<const Eigen::VectorXd>& features) {
  if (ensemble.members.empty()) throw SpecError("ensemble has no members");
  double sum = 0.0;
  for (const auto& net : ensemble.members) sum += predict_log(net, features);
  return sum / static_cast<double>(ensemble.members.size());
}

double predict(const Ensemble& ensemble, const Configuration& config) {
  return std::exp(predict_log(ensemble, ensemble.encoder.encode(config)));
}

std::vector<double> predict_indices(const Ensemble& ensemble, std::span<const ConfigIndex> indices, std::size_t jobs) {
  std::vector<double> out(indices.size());
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (indices.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, jobs, [&](std::size_t c) {
    Eigen::VectorXd x(ensemble.encoder.dimension());
    const std::size_t end = std::min(indices.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      ensemble.encoder.encode_index(indices[i], x);
      out[i] = std::exp(predict_log(ensemble, x));
    }
  });
  return out;
}

// --- persistence ---------------------------------------------------------------------------------

nlohmann::json model_to_json(const Ensemble& ensemble) {
  nlohmann::json encoder = nlohmann::json::array();
  for (const auto& r : ensemble.encoder.rules())
    encoder.push_back(
        {{"name", r.name}, {"values", r.values}, {"kind", r.kind == Encoder::Kind::Binary ? "binary" : "rank"}});
  nlohmann::json transforms = nlohmann::json::array();
  nlohmann::json members = nlohmann::json::array();
  for (const auto& net : ensemble.members) {
    transforms.push_back({{"mean", net.target_mean}, {"std", net.target_std}});
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < net.hidden_weights.rows(); ++i) {
      std::vector<double> row(net.hidden_weights.row(i).begin(), net.hidden_weights.row(i).end());
      rows.push_back(row);
    }
    members.push_back({{"weights_hidden", rows},
                       {"biases_hidden", std::vector<double>(net.hidden_bias.begin(), net.hidden_bias.end())},
                       {"weights_out", std::vector<double>(net.output_weights.begin(), net.output_weights.end())},
                       {"bias_out", net.output_bias}});
  }
  return {{"schema_version", kModelSchemaVersion},
          {"space_name", ensemble.space_name},
          {"k", ensemble.k()},
          {"input_dim", ensemble.input_dim()},
          {"target_transform", {{"kind", "ln"}, {"members", transforms}}},
          {"encoder", encoder},
          {"members", members}};
}

Ensemble model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion)
      throw LoadError("unsupported model schema_version " + std::to_string(version));
    if (j.at("target_transform").at("kind").get<std::string>() != "ln")
      throw LoadError("unsupported target transform");

    Ensemble e;
    e.space_name = j.at("space_name").get<std::string>();
    std::vector<Encoder::Rule> rules;
    for (const auto& r : j.at("encoder")) {
      const auto kind = r.at("kind").get<std::string>();
      if (kind != "binary" && kind != "rank") throw LoadError("unknown encoder kind '" + kind + "'");
      rules.push_back({r.at("name").get<std::string>(), r.at("values").get<std::vector<Value>>(),
                       kind == "binary" ? Encoder::Kind::Binary : Encoder::Kind::Rank});
    }
    e.encoder = Encoder(e.space_name, std::move(rules));

    const auto k = j.at("k").get<std::size_t>();
    const auto input_dim = j.at("input_dim").get<Eigen::Index>();
    const auto& members = j.at("members");
    const auto& transforms = j.at("target_transform").at("members");
    if (input_dim != e.encoder.dimension()) throw LoadError("input_dim does not match the encoder");
    if (k < 1 || members.size() != k || transforms.size() != k) throw LoadError("member count does not match k");

    for (std::size_t m = 0; m < k; ++m) {
      const auto& mj = members[m];
      const auto rows = mj.at("weights_hidden").get<std::vector<std::vector<double>>>();
      const auto bias = mj.at("biases_hidden").get<std::vector<double>>();
      const auto out = mj.at("weights_out").get<std::vector<double>>();
      const auto hidden = static_cast<Eigen::Index>(rows.size());
      if (hidden < 1 || bias.size() != rows.size() || out.size() != rows.size())
        throw LoadError("member " + std::to_string(m) + " has inconsistent hidden layer sizes");
      Network net = make_network(input_dim, hidden);
      for (Eigen::Index i = 0; i < hidden; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != input_dim)
          throw LoadError("member " + std::to_string(m) + " hidden row has wrong width");
        for (Eigen::Index c = 0; c < input_dim; ++c) net.hidden_weights(i, c) = row[static_cast<std::size_t>(c)];
        net.hidden_bias(i) = bias[static_cast<std::size_t>(i)];
        net.output_weights(i) = out[static_cast<std::size_t>(i)];
      }
      net.output_bias = mj.at("bias_out").get<double>();
      net.target_mean = transforms[m].at("mean").get<double>();
      net.target_std = transforms[m].at("std").get<double>();
      if (!all_finite(net) || !std::isfinite(net.target_mean) || !(net.target_std > 0.0))
        throw LoadError("member " + std::to_string(m) + " has non-finite weights");
      e.members.push_back(std::move(net));
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("malformed model: ") + ex.what());
  } catch (const SpecError& ex) {
    throw LoadError(std::string("malformed model: ") + ex.what());
  }
}

void save_model(const Ensemble& ensemble, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << model_to_json(ensemble).dump(1) << '\n';
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

Ensemble load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open model file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace ktune
