// Copyright 2026 The MetaDOAR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Fixed-topology multilayer perceptrons with analytic gradients, an Adam
// optimizer with global-norm clipping, soft target updates and a binary
// checkpoint format.
//
// Parameters live in one flat vector. Layer l occupies a column-major
// (out x in) weight block followed by its bias, so optimizers, target
// updates and checkpoints operate on a single contiguous buffer.

#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "metadoar/common.hpp"

namespace metadoar::nn {

enum class Activation { kIdentity, kRelu, kTanh };

class Mlp {
 public:
  // Per-batch activations recorded by forward() for backward().
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input to layer l (post-activation of l-1)
    std::vector<Eigen::MatrixXd> outputs; // post-activation output of layer l
  };

  struct Gradients {
    Eigen::VectorXd params;  // same layout as params()
    Eigen::MatrixXd input;   // d(output . upstream) / d(input), per column
  };

  Mlp() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output, Rng& rng);
  // All parameters zero.
  static Mlp zeros(std::vector<int> layer_sizes, Activation hidden, Activation output);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Activation activation(int layer) const {
    return layer + 1 == layer_count() ? output_ : hidden_;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Columns are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;

  // Gradients of sum(output .* upstream) with respect to parameters and
  // inputs, for the batch recorded in `tape`.
  Gradients backward(const Tape& tape, const Eigen::MatrixXd& upstream) const;

  bool same_shape(const Mlp& other) const;
  bool operator==(const Mlp& other) const;

 private:
  void layout();

  std::vector<int> sizes_;
  Activation hidden_ = Activation::kRelu;
  Activation output_ = Activation::kIdentity;
  Eigen::VectorXd params_;
  std::vector<Eigen::Index> offsets_;  // start of weight block per layer
};

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& z);

struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long long step = 0;

  OptimizerState() = default;
  OptimizerState(double lr, Eigen::Index parameter_count)
      : learning_rate(lr),
        first_moment(Eigen::VectorXd::Zero(parameter_count)),
        second_moment(Eigen::VectorXd::Zero(parameter_count)) {}
};

// Scales `grads` in place so its L2 norm is at most max_norm; returns the
// factor applied (1 when no clipping happened).
double clip_by_global_norm(Eigen::VectorXd& grads, double max_norm);

// One clipped Adam step. Non-finite gradients throw Error and leave params
// and optimizer state untouched. max_grad_norm <= 0 disables clipping.
void opt_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, OptimizerState& opt,
              double max_grad_norm);

// target <- (1 - tau) * target + tau * online, tau in (0, 1].
void soft_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau);
void soft_update(Mlp& target, const Mlp& online, double tau);

// Central finite-difference gradient of a scalar function of a flat vector.
Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& at, double h = 1e-5);

// max |a - b| / max(max |a|, max |b|, floor)
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          double floor = 1e-8);

// Checkpoint: "MDNN" magic, u32 version (1), u32 hidden/output activation
// codes, u32 layer-size count, u32 sizes, u64 parameter count, then IEEE-754
// binary64 parameters. All integers and doubles little-endian.
void write_checkpoint(std::ostream& out, const Mlp& net);
Mlp read_checkpoint(std::istream& in);

}  // namespace metadoar::nn
