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

// Single-hidden-layer perceptron: sigmoid hidden units, one linear output.
//
//   output = w_out . sigmoid(W x + b) + b_out
//
// Inputs are columns. Batch functions take a matrix whose columns are samples. The loss for one
// sample is 0.5 * (output - target)^2; batch gradients are averaged over the columns.

#ifndef KTUNE_NETWORK_HPP
#define KTUNE_NETWORK_HPP

#include <Eigen/Dense>
#include <string>

#include "ktune/errors.hpp"
#include "ktune/random.hpp"

namespace ktune {

inline constexpr Eigen::Index kDefaultHiddenUnits = 30;

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Scalar>
struct BasicNetwork {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix hidden_weights;  // hidden x input
  Vector hidden_bias;
  Vector output_weights;
  Scalar output_bias = 0;

  // The network is trained on standardized log-times; log-time = target_mean + target_std * output.
  Scalar target_mean = 0;
  Scalar target_std = 1;

  Eigen::Index input_dim() const { return hidden_weights.cols(); }
  Eigen::Index hidden_units() const { return hidden_weights.rows(); }

  bool operator==(const BasicNetwork& o) const {
    return hidden_weights == o.hidden_weights && hidden_bias == o.hidden_bias &&
           output_weights == o.output_weights && output_bias == o.output_bias &&
           target_mean == o.target_mean && target_std == o.target_std;
  }
};

using Network = BasicNetwork<double>;

// Same layout as the network parameters (no target transform).
template <typename Scalar>
struct BasicGradient {
  typename BasicNetwork<Scalar>::Matrix hidden_weights;
  typename BasicNetwork<Scalar>::Vector hidden_bias;
  typename BasicNetwork<Scalar>::Vector output_weights;
  Scalar output_bias = 0;
};

using Gradient = BasicGradient<double>;

// All-zero network.
template <typename Scalar = double>
BasicNetwork<Scalar> make_network(Eigen::Index input_dim, Eigen::Index hidden_units = kDefaultHiddenUnits) {
  BasicNetwork<Scalar> net;
  net.hidden_weights.setZero(hidden_units, input_dim);
  net.hidden_bias.setZero(hidden_units);
  net.output_weights.setZero(hidden_units);
  return net;
}

// Every weight and bias uniform in [-0.5, 0.5] * scale.
template <typename Scalar>
void randomize(BasicNetwork<Scalar>& net, Engine& rng, Scalar scale) {
  auto draw = [&] { return static_cast<Scalar>((uniform01(rng) - 0.5) * static_cast<double>(scale)); };
  for (Eigen::Index j = 0; j < net.hidden_weights.cols(); ++j)
    for (Eigen::Index i = 0; i < net.hidden_weights.rows(); ++i) net.hidden_weights(i, j) = draw();
  for (Eigen::Index i = 0; i < net.hidden_bias.size(); ++i) net.hidden_bias(i) = draw();
  for (Eigen::Index i = 0; i < net.output_weights.size(); ++i) net.output_weights(i) = draw();
  net.output_bias = draw();
}

template <typename Scalar>
bool all_finite(const BasicNetwork<Scalar>& net) {
  return net.hidden_weights.allFinite() && net.hidden_bias.allFinite() && net.output_weights.allFinite() &&
         std::isfinite(net.output_bias);
}

namespace detail {
inline void check_input(Eigen::Index expected, Eigen::Index got) {
  if (expected != got)
    throw MismatchError("network expects " + std::to_string(expected) + " inputs, got " + std::to_string(got));
}
}  // namespace detail

template <typename Scalar, typename Derived>
Scalar forward(const BasicNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  detail::check_input(net.input_dim(), x.size());
  typename BasicNetwork<Scalar>::Vector hidden = net.hidden_weights * x + net.hidden_bias;
  return net.output_weights.dot(sigmoid(hidden.array()).matrix()) + net.output_bias;
}

// Row vector of outputs, one per column of `inputs`.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> forward_batch(const BasicNetwork<Scalar>& net,
                                                       const Eigen::MatrixBase<Derived>& inputs) {
  detail::check_input(net.input_dim(), inputs.rows());
  typename BasicNetwork<Scalar>::Matrix hidden =
      sigmoid(((net.hidden_weights * inputs).colwise() + net.hidden_bias).array()).matrix();
  return (net.output_weights.transpose() * hidden).array() + net.output_bias;
}

// Predicted log-time: the output mapped back through the target transform.
template <typename Scalar, typename Derived>
Scalar predict_log(const BasicNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  return net.target_mean + net.target_std * forward(net, x);
}

// Mean gradient of 0.5 * (output - target)^2 over the columns of `inputs`.
template <typename Scalar, typename DerivedX, typename DerivedT>
BasicGradient<Scalar> batch_gradient(const BasicNetwork<Scalar>& net, const Eigen::MatrixBase<DerivedX>& inputs,
                                     const Eigen::MatrixBase<DerivedT>& targets) {
  using Matrix = typename BasicNetwork<Scalar>::Matrix;
  detail::check_input(net.input_dim(), inputs.rows());
  if (targets.size() != inputs.cols()) throw MismatchError("one target per input column required");
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(inputs.cols());

  Matrix hidden = sigmoid(((net.hidden_weights * inputs).colwise() + net.hidden_bias).array()).matrix();
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> residual =
      (net.output_weights.transpose() * hidden).array() + net.output_bias;
  residual -= targets.transpose();

  // dLoss/d(hidden pre-activation), hidden x batch
  Matrix delta = ((net.output_weights * residual).array() * hidden.array() * (Scalar(1) - hidden.array())).matrix();

  BasicGradient<Scalar> g;
  g.output_weights = hidden * residual.transpose() * inv_n;
  g.output_bias = residual.sum() * inv_n;
  g.hidden_weights = delta * inputs.transpose() * inv_n;
  g.hidden_bias = delta.rowwise().sum() * inv_n;
  return g;
}

// Exact gradient for one sample.
template <typename Scalar, typename Derived>
BasicGradient<Scalar> gradient(const BasicNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& x, Scalar target) {
  detail::check_input(net.input_dim(), x.size());
  Eigen::Matrix<Scalar, 1, 1> t;
  t(0) = target;
  return batch_gradient(net, x.derived().reshaped(x.size(), 1), t);
}

// net -= step * g
template <typename Scalar>
void apply_step(BasicNetwork<Scalar>& net, const BasicGradient<Scalar>& g, Scalar step) {
  net.hidden_weights.noalias() -= step * g.hidden_weights;
  net.hidden_bias.noalias() -= step * g.hidden_bias;
  net.output_weights.noalias() -= step * g.output_weights;
  net.output_bias -= step * g.output_bias;
}

}  // namespace ktune

#endif  // KTUNE_NETWORK_HPP
