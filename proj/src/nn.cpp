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

#include "metadoar/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace metadoar::nn {
namespace {

void check(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

Eigen::MatrixXd activation_derivative(Activation act, const Eigen::MatrixXd& out) {
  switch (act) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(out.rows(), out.cols());
    case Activation::kRelu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh: return (1.0 - out.array().square()).matrix();
  }
  return Eigen::MatrixXd::Ones(out.rows(), out.cols());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  check(static_cast<bool>(in), "checkpoint: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  check(static_cast<bool>(in), "checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
  }
  return z;
}

Mlp::Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output, Rng& rng)
    : sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  layout();
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[static_cast<std::size_t>(l)]));
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * uniform01(rng) - 1.0) * bound;
  }
}

Mlp Mlp::zeros(std::vector<int> layer_sizes, Activation hidden, Activation output) {
  Mlp net;
  net.sizes_ = std::move(layer_sizes);
  net.hidden_ = hidden;
  net.output_ = output;
  net.layout();
  return net;
}

void Mlp::layout() {
  check(sizes_.size() >= 2, "Mlp: need at least input and output sizes");
  for (int s : sizes_) check(s > 0, "Mlp: layer sizes must be positive");
  offsets_.clear();
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int l) {
  const auto in = sizes_[static_cast<std::size_t>(l)], out = sizes_[static_cast<std::size_t>(l) + 1];
  return {params_.data() + offsets_[static_cast<std::size_t>(l)], out, in};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
  const auto in = sizes_[static_cast<std::size_t>(l)], out = sizes_[static_cast<std::size_t>(l) + 1];
  return {params_.data() + offsets_[static_cast<std::size_t>(l)], out, in};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(int l) {
  const auto in = sizes_[static_cast<std::size_t>(l)], out = sizes_[static_cast<std::size_t>(l) + 1];
  return {params_.data() + offsets_[static_cast<std::size_t>(l)] + static_cast<Eigen::Index>(out) * in,
          out};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  const auto in = sizes_[static_cast<std::size_t>(l)], out = sizes_[static_cast<std::size_t>(l) + 1];
  return {params_.data() + offsets_[static_cast<std::size_t>(l)] + static_cast<Eigen::Index>(out) * in,
          out};
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  check(x.size() == input_size(), "Mlp::forward: input dimension mismatch");
  Eigen::VectorXd a = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::VectorXd z = weight(l) * a + bias(l);
    a = activate(activation(l), z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  check(x.rows() == input_size(), "Mlp::forward: input dimension mismatch");
  Eigen::MatrixXd a = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    a = activate(activation(l), z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  check(x.rows() == input_size(), "Mlp::forward: input dimension mismatch");
  tape.inputs.clear();
  tape.outputs.clear();
  Eigen::MatrixXd a = x;
  for (int l = 0; l < layer_count(); ++l) {
    tape.inputs.push_back(a);
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    a = activate(activation(l), z);
    tape.outputs.push_back(a);
  }
  return a;
}

Mlp::Gradients Mlp::backward(const Tape& tape, const Eigen::MatrixXd& upstream) const {
  check(static_cast<int>(tape.outputs.size()) == layer_count(), "Mlp::backward: tape mismatch");
  check(upstream.rows() == output_size() && upstream.cols() == tape.outputs.back().cols(),
        "Mlp::backward: upstream dimension mismatch");
  Gradients g;
  g.params = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = upstream;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    delta = delta.cwiseProduct(activation_derivative(activation(l), tape.outputs[ul]));
    const auto in = sizes_[ul], out = sizes_[ul + 1];
    Eigen::Map<Eigen::MatrixXd> gw(g.params.data() + offsets_[ul], out, in);
    Eigen::Map<Eigen::VectorXd> gb(g.params.data() + offsets_[ul] + static_cast<Eigen::Index>(out) * in,
                                   out);
    gw.noalias() = delta * tape.inputs[ul].transpose();
    gb = delta.rowwise().sum();
    delta = weight(l).transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

bool Mlp::same_shape(const Mlp& other) const {
  return sizes_ == other.sizes_ && hidden_ == other.hidden_ && output_ == other.output_;
}

bool Mlp::operator==(const Mlp& other) const {
  return same_shape(other) && params_ == other.params_;
}

double clip_by_global_norm(Eigen::VectorXd& grads, double max_norm) {
  if (max_norm <= 0.0) return 1.0;
  const double norm = grads.norm();
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double scale = max_norm / norm;
  grads *= scale;
  return scale;
}

void opt_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, OptimizerState& opt,
              double max_grad_norm) {
  check(params.size() == grads.size(), "opt_step: gradient shape mismatch");
  check(opt.first_moment.size() == params.size() && opt.second_moment.size() == params.size(),
        "opt_step: optimizer state shape mismatch");
  if (!grads.allFinite()) throw Error("opt_step: non-finite gradient");
  Eigen::VectorXd g = grads;
  clip_by_global_norm(g, max_grad_norm);
  opt.step += 1;
  opt.first_moment = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * g;
  opt.second_moment = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  params.array() -= opt.learning_rate * (opt.first_moment.array() / c1) /
                    ((opt.second_moment.array() / c2).sqrt() + opt.epsilon);
}

void soft_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau) {
  check(target.size() == online.size(), "soft_update: shape mismatch");
  check(tau > 0.0 && tau <= 1.0, "soft_update: tau must lie in (0, 1]");
  if (tau == 1.0) {
    target = online;
    return;
  }
  target = (1.0 - tau) * target + tau * online;
}

void soft_update(Mlp& target, const Mlp& online, double tau) {
  check(target.same_shape(online), "soft_update: shape mismatch");
  soft_update(target.params(), online.params(), tau);
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& at, double h) {
  Eigen::VectorXd g(at.size());
  Eigen::VectorXd x = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  check(a.size() == b.size(), "max_relative_error: shape mismatch");
  if (a.size() == 0) return 0.0;
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

void write_checkpoint(std::ostream& out, const Mlp& net) {
  out.write("MDNN", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(net.hidden_activation()));
  put_u32(out, static_cast<std::uint32_t>(net.output_activation()));
  put_u32(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) put_u32(out, static_cast<std::uint32_t>(s));
  put_u64(out, static_cast<std::uint64_t>(net.parameter_count()));
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i)
    put_u64(out, std::bit_cast<std::uint64_t>(net.params()[i]));
}

Mlp read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  check(in && std::memcmp(magic, "MDNN", 4) == 0, "checkpoint: bad magic");
  check(get_u32(in) == 1, "checkpoint: unsupported version");
  const auto hidden = get_u32(in), output = get_u32(in);
  check(hidden <= 2 && output <= 2, "checkpoint: bad activation code");
  const auto count = get_u32(in);
  check(count >= 2 && count < 1024, "checkpoint: bad layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) s = static_cast<int>(get_u32(in));
  Mlp net = Mlp::zeros(sizes, static_cast<Activation>(hidden), static_cast<Activation>(output));
  check(get_u64(in) == static_cast<std::uint64_t>(net.parameter_count()),
        "checkpoint: parameter count does not match shape");
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i)
    net.params()[i] = std::bit_cast<double>(get_u64(in));
  return net;
}

}  // namespace metadoar::nn
