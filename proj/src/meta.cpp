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

#include "metadoar/meta.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "metadoar/binary_io.hpp"
#include "metadoar/qcache.hpp"

namespace metadoar::meta {
namespace {

using binary::put_f64;
using binary::put_u32;
using binary::put_u64;

std::uint64_t get_bytes(std::istream& in, int n) { return binary::get_le(in, n, "meta checkpoint"); }

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

nn::Mlp make_node_projector(const MetaConfig& c, Rng& rng) {
  return nn::Mlp({c.id_dim + 3, c.node_hidden, c.embedding_dim}, nn::Activation::kRelu,
                 nn::Activation::kIdentity, rng);
}

nn::Mlp make_state_projector(const MetaConfig& c, Rng& rng) {
  return nn::Mlp({kSummarySize, c.state_hidden, c.embedding_dim}, nn::Activation::kRelu,
                 nn::Activation::kIdentity, rng);
}

}  // namespace

int compute_k(int device_count, int alpha) {
  if (device_count < 1) throw Error("compute_k: device count must be >= 1");
  if (alpha < 1) throw Error("compute_k: alpha must be >= 1");
  // ceil(log10(n)) computed exactly on integers: number of digits of n - 1.
  long long n = std::max(10, device_count);
  int digits = 0;
  for (long long p = 1; p < n; p *= 10) ++digits;
  return std::max(1, alpha * digits);
}

void MetaConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& constraint) {
    throw Error("meta." + field + ": " + constraint);
  };
  if (alpha < 1) fail("alpha", "must be a positive integer");
  if (embedding_dim < 1) fail("embedding_dim", "must be a positive integer");
  if (id_dim < 1) fail("id_dim", "must be a positive integer");
  if (node_hidden < 1) fail("node_hidden", "must be a positive integer");
  if (state_hidden < 1) fail("state_hidden", "must be a positive integer");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(target_tau > 0.0 && target_tau <= 1.0)) fail("target_tau", "must lie in (0, 1]");
  if (replay_capacity < 1) fail("replay_capacity", "must be a positive integer");
  if (batch_size < 1) fail("batch_size", "must be a positive integer");
  if (train_every < 1) fail("train_every", "must be a positive integer");
}

Eigen::VectorXd summarize_observation(const Eigen::VectorXd& observation) {
  constexpr int f = env::kFeaturesPerDevice;
  if (observation.size() < 1 || (observation.size() - 1) % f != 0)
    throw Error("summarize_observation: unexpected observation length");
  const Eigen::Index m = (observation.size() - 1) / f;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kSummarySize);
  if (m > 0) {
    Eigen::Map<const Eigen::MatrixXd> blocks(observation.data(), f, m);
    out.head(f) = blocks.rowwise().mean();
    out.segment(f, f) = blocks.rowwise().maxCoeff();
  }
  return out;
}

MetaController::MetaController(int device_count, Role role, MetaConfig config)
    : device_count_(device_count), role_(role), config_(config), replay_(config.replay_capacity) {
  if (device_count < 1) throw Error("MetaController: device count must be >= 1");
  config_.validate();
  Rng id_rng(mix_seed(config_.seed, 0xE1D));
  id_embeddings_.resize(config_.id_dim, device_count);
  for (int i = 0; i < device_count; ++i)
    for (int r = 0; r < config_.id_dim; ++r) id_embeddings_(r, i) = standard_normal(id_rng);
  Rng init(mix_seed(config_.seed, 0xA11CE));
  node_projector_ = make_node_projector(config_, init);
  state_projector_ = make_state_projector(config_, init);
  target_state_projector_ = state_projector_;
  optimizer_ = nn::OptimizerState(config_.learning_rate, trainable_parameter_count());
  embedding_cache_ = Eigen::MatrixXd::Zero(config_.embedding_dim, device_count);
  dirty_.assign(idx(device_count), true);
}

Eigen::VectorXd MetaController::node_features(const env::NetworkState& state, int node) const {
  if (node < 0 || node >= device_count_) throw Error("node_features: node out of range");
  if (state.device_count() != device_count_) throw Error("node_features: device count mismatch");
  Eigen::VectorXd x(feature_size());
  x.head(config_.id_dim) = id_embeddings_.col(node);
  x[config_.id_dim] = static_cast<double>(state.degree(node)) / std::max(1, state.max_degree());
  x[config_.id_dim + 1] = state.visible(node, role_) ? 1.0 : 0.0;
  x[config_.id_dim + 2] = state.devices[idx(node)].attacker_owned ? 1.0 : 0.0;
  return x;
}

void MetaController::mark_dirty(const std::vector<int>& nodes) {
  for (int n : nodes)
    if (n < 0 || n >= device_count_) throw Error("mark_dirty: node out of range");
  for (int n : nodes) dirty_[idx(n)] = true;
}

void MetaController::mark_all_dirty() { std::fill(dirty_.begin(), dirty_.end(), true); }

std::size_t MetaController::dirty_count() const {
  return static_cast<std::size_t>(std::count(dirty_.begin(), dirty_.end(), true));
}

void MetaController::refresh_embeddings(const env::NetworkState& state) {
  // Degrees are normalized by the maximum degree, so a new maximum touches
  // every row.
  if (state.max_degree() != embedded_max_degree_) {
    mark_all_dirty();
    embedded_max_degree_ = state.max_degree();
  }
  std::vector<int> rows;
  for (int i = 0; i < device_count_; ++i)
    if (dirty_[idx(i)]) rows.push_back(i);
  if (rows.empty()) return;
  Eigen::MatrixXd x(feature_size(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c)
    x.col(static_cast<Eigen::Index>(c)) = node_features(state, rows[c]);
  const Eigen::MatrixXd z = node_projector_.forward_batch(x);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    embedding_cache_.col(rows[c]) = z.col(static_cast<Eigen::Index>(c));
    dirty_[idx(rows[c])] = false;
  }
}

Eigen::MatrixXd MetaController::recompute_embeddings(const env::NetworkState& state) const {
  Eigen::MatrixXd x(feature_size(), device_count_);
  for (int i = 0; i < device_count_; ++i) x.col(i) = node_features(state, i);
  return node_projector_.forward_batch(x);
}

Eigen::VectorXd MetaController::state_embedding(const env::Observation& o) const {
  return state_projector_.forward(summarize_observation(o.values));
}

Eigen::VectorXd MetaController::target_state_embedding(const env::Observation& o) const {
  return target_state_projector_.forward(summarize_observation(o.values));
}

std::uint64_t MetaController::cache_state_key(const env::Observation& o,
                                              std::optional<int> decimals) const {
  return qcache::state_key(target_state_embedding(o), decimals);
}

double MetaController::score(const Eigen::VectorXd& h, int node) const {
  return embedding_cache_.col(node).dot(h) + bias_;
}

std::vector<int> MetaController::select_from_scores(const std::vector<double>& scores,
                                                    const std::vector<bool>& visible) const {
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (visible[idx(i)]) candidates.push_back(i);
  const auto keep = std::min<std::size_t>(idx(k()), candidates.size());
  auto better = [&](int a, int b) {
    if (scores[idx(a)] != scores[idx(b)]) return scores[idx(a)] > scores[idx(b)];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), better);
  candidates.resize(keep);
  return candidates;
}

std::vector<int> MetaController::select(const env::NetworkState& state, const env::Observation& o) {
  refresh_embeddings(state);
  const Eigen::VectorXd h = state_embedding(o);
  std::vector<double> scores(idx(device_count_), 0.0);
  std::vector<bool> visible(idx(device_count_), false);
  for (int i = 0; i < device_count_; ++i) {
    visible[idx(i)] = state.visible(i, role_);
    if (visible[idx(i)]) scores[idx(i)] = score(h, i);
  }
  return select_from_scores(scores, visible);
}

double MetaController::predict_reward(const env::Observation& o,
                                      const std::vector<int>& selected) const {
  if (selected.empty()) throw Error("predict_reward: empty selection");
  const Eigen::VectorXd h = state_embedding(o);
  double total = 0.0;
  for (int i : selected) total += score(h, i);
  return total / static_cast<double>(selected.size());
}

Eigen::Index MetaController::trainable_parameter_count() const {
  return state_projector_.parameter_count() + node_projector_.parameter_count() + 1;
}

Eigen::VectorXd MetaController::trainable_parameters() const {
  Eigen::VectorXd p(trainable_parameter_count());
  const auto ns = state_projector_.parameter_count(), nn_ = node_projector_.parameter_count();
  p.head(ns) = state_projector_.params();
  p.segment(ns, nn_) = node_projector_.params();
  p[ns + nn_] = bias_;
  return p;
}

void MetaController::set_trainable_parameters(const Eigen::VectorXd& p) {
  if (p.size() != trainable_parameter_count()) throw Error("set_trainable_parameters: shape mismatch");
  const auto ns = state_projector_.parameter_count(), nn_ = node_projector_.parameter_count();
  state_projector_.params() = p.head(ns);
  node_projector_.params() = p.segment(ns, nn_);
  bias_ = p[ns + nn_];
}

double MetaController::loss(const std::vector<const MetaTransition*>& batch) const {
  if (batch.empty()) throw Error("meta loss: empty batch");
  double total = 0.0;
  for (const auto* t : batch) {
    if (t->selected.empty()) throw Error("meta loss: empty selection in batch");
    const Eigen::VectorXd h = state_projector_.forward(summarize_observation(t->observation));
    const Eigen::MatrixXd z = node_projector_.forward_batch(t->selected_features);
    const double pred = (z.transpose() * h).mean() + bias_;
    total += (pred - t->reward) * (pred - t->reward);
  }
  return total / static_cast<double>(batch.size());
}

double MetaController::loss_and_gradient(const std::vector<const MetaTransition*>& batch,
                                         Eigen::VectorXd& gradient) const {
  if (batch.empty()) throw Error("meta loss: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd summaries(kSummarySize, n);
  Eigen::Index total_selected = 0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto* t = batch[static_cast<std::size_t>(b)];
    if (t->selected.empty() || t->selected_features.cols() != static_cast<Eigen::Index>(t->selected.size()))
      throw Error("meta loss: malformed selection in batch");
    summaries.col(b) = summarize_observation(t->observation);
    total_selected += t->selected_features.cols();
  }
  Eigen::MatrixXd features(feature_size(), total_selected);
  for (Eigen::Index b = 0, col = 0; b < n; ++b) {
    const auto& f = batch[static_cast<std::size_t>(b)]->selected_features;
    features.middleCols(col, f.cols()) = f;
    col += f.cols();
  }
  nn::Mlp::Tape state_tape, node_tape;
  const Eigen::MatrixXd h = state_projector_.forward(summaries, state_tape);
  const Eigen::MatrixXd z = node_projector_.forward(features, node_tape);

  Eigen::MatrixXd h_up = Eigen::MatrixXd::Zero(h.rows(), n);
  Eigen::MatrixXd z_up(z.rows(), z.cols());
  double loss_sum = 0.0, bias_grad = 0.0;
  for (Eigen::Index b = 0, col = 0; b < n; ++b) {
    const auto* t = batch[static_cast<std::size_t>(b)];
    const Eigen::Index count = t->selected_features.cols();
    const auto zb = z.middleCols(col, count);
    const Eigen::VectorXd z_mean = zb.rowwise().mean();
    const double pred = z_mean.dot(h.col(b)) + bias_;
    const double err = pred - t->reward;
    loss_sum += err * err;
    const double dpred = 2.0 * err / static_cast<double>(n);
    bias_grad += dpred;
    h_up.col(b) = dpred * z_mean;
    z_up.middleCols(col, count) = (dpred / static_cast<double>(count) * h.col(b)).replicate(1, count);
    col += count;
  }
  const auto gs = state_projector_.backward(state_tape, h_up);
  const auto gn = node_projector_.backward(node_tape, z_up);
  gradient.resize(trainable_parameter_count());
  const auto ns = state_projector_.parameter_count(), nn_ = node_projector_.parameter_count();
  gradient.head(ns) = gs.params;
  gradient.segment(ns, nn_) = gn.params;
  gradient[ns + nn_] = bias_grad;
  return loss_sum / static_cast<double>(n);
}

double MetaController::train(const std::vector<const MetaTransition*>& batch) {
  Eigen::VectorXd grad;
  const double before = loss_and_gradient(batch, grad);
  Eigen::VectorXd params = trainable_parameters();
  nn::opt_step(params, grad, optimizer_, config_.max_grad_norm);
  set_trainable_parameters(params);
  nn::soft_update(target_state_projector_, state_projector_, config_.target_tau);
  mark_all_dirty();
  return before;
}

std::optional<double> MetaController::train_from_replay(Rng& rng) {
  if (replay_.empty()) return std::nullopt;
  const auto picks = replay_.sample_indices(idx(config_.batch_size), rng);
  std::vector<const MetaTransition*> batch;
  batch.reserve(picks.size());
  for (auto p : picks) batch.push_back(&replay_.at(p));
  return train(batch);
}

void MetaController::save(std::ostream& out) const {
  out.write("MDMC", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(device_count_));
  put_u32(out, role_ == Role::kAttacker ? 0 : 1);
  const MetaConfig& c = config_;
  for (int v : {c.alpha, c.embedding_dim, c.id_dim, c.node_hidden, c.state_hidden, c.batch_size,
                c.train_every})
    put_u32(out, static_cast<std::uint32_t>(v));
  for (double v : {c.learning_rate, c.max_grad_norm, c.target_tau}) put_f64(out, v);
  put_u64(out, c.replay_capacity);
  put_u64(out, c.seed);
  nn::write_checkpoint(out, node_projector_);
  nn::write_checkpoint(out, state_projector_);
  nn::write_checkpoint(out, target_state_projector_);
  put_f64(out, bias_);
}

MetaController MetaController::load(std::istream& in) {
  binary::expect_magic(in, "MDMC", "meta checkpoint");
  if (get_bytes(in, 4) != 1) throw Error("meta checkpoint: unsupported version");
  const int m = static_cast<int>(get_bytes(in, 4));
  const Role role = get_bytes(in, 4) == 0 ? Role::kAttacker : Role::kDefender;
  MetaConfig c;
  int* ints[] = {&c.alpha, &c.embedding_dim, &c.id_dim, &c.node_hidden, &c.state_hidden,
                 &c.batch_size, &c.train_every};
  for (int* p : ints) *p = static_cast<int>(get_bytes(in, 4));
  double* dbls[] = {&c.learning_rate, &c.max_grad_norm, &c.target_tau};
  for (double* p : dbls) *p = std::bit_cast<double>(get_bytes(in, 8));
  c.replay_capacity = get_bytes(in, 8);
  c.seed = get_bytes(in, 8);
  MetaController mc(m, role, c);
  mc.node_projector_ = nn::read_checkpoint(in);
  mc.state_projector_ = nn::read_checkpoint(in);
  mc.target_state_projector_ = nn::read_checkpoint(in);
  mc.bias_ = std::bit_cast<double>(get_bytes(in, 8));
  const std::vector<int> node_sizes{c.id_dim + 3, c.node_hidden, c.embedding_dim};
  const std::vector<int> state_sizes{kSummarySize, c.state_hidden, c.embedding_dim};
  if (mc.node_projector_.layer_sizes() != node_sizes ||
      mc.state_projector_.layer_sizes() != state_sizes ||
      mc.target_state_projector_.layer_sizes() != state_sizes)
    throw Error("meta checkpoint: projector shapes do not match config");
  mc.mark_all_dirty();
  return mc;
}

}  // namespace metadoar::meta
