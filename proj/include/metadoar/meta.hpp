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

// Top-k device selection for one role.
//
// Every device i gets a structural feature x_i = [e_i; deg(i); visible(i);
// owned(i)] where e_i is a fixed random ID embedding. A node projector maps
// x_i to z_i, cached per device and recomputed only when the device is marked
// dirty. A state projector maps a fixed-length summary of the role's
// observation to h(o). Devices are ranked by z_i . h(o) + b and the k best
// visible ones are handed to the low-level actor, with
// k = max(1, alpha * ceil(log10(max(10, M)))).
//
// Training regresses the mean score of the selected devices onto the reward
// observed after acting on them.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "metadoar/common.hpp"
#include "metadoar/env.hpp"
#include "metadoar/nn.hpp"
#include "metadoar/ring_buffer.hpp"

namespace metadoar::meta {

int compute_k(int device_count, int alpha);

struct MetaConfig {
  int alpha = 1;
  int embedding_dim = 32;  // d
  int id_dim = 16;         // d_id
  int node_hidden = 32;
  int state_hidden = 64;
  double learning_rate = 1e-3;
  double max_grad_norm = 0.5;
  double target_tau = 0.01;
  std::size_t replay_capacity = 10'000;
  int batch_size = 64;
  int train_every = 16;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const MetaConfig&) const = default;
};

// Fixed-length observation summary fed to the state projector: per-feature
// mean and max over device blocks. The step fraction is left out so that
// recurring network states map to recurring cache keys.
inline constexpr int kSummarySize = 2 * env::kFeaturesPerDevice;
Eigen::VectorXd summarize_observation(const Eigen::VectorXd& observation);

struct MetaTransition {
  Eigen::VectorXd observation;
  std::vector<int> selected;
  Eigen::MatrixXd selected_features;  // (id_dim + 3) x |selected|
  double reward = 0.0;
  Eigen::VectorXd next_observation;
  bool done = false;
};

class MetaController {
 public:
  MetaController(int device_count, Role role, MetaConfig config = {});

  int device_count() const { return device_count_; }
  Role role() const { return role_; }
  const MetaConfig& config() const { return config_; }
  int k() const { return compute_k(device_count_, config_.alpha); }
  int feature_size() const { return config_.id_dim + 3; }

  // x_i for this controller's role.
  Eigen::VectorXd node_features(const env::NetworkState& state, int node) const;

  void mark_dirty(const std::vector<int>& nodes);
  void mark_all_dirty();
  // Re-embeds dirty rows of the embedding cache and clears the dirty set.
  void refresh_embeddings(const env::NetworkState& state);
  // Full recompute into a fresh matrix, leaving the cache untouched.
  Eigen::MatrixXd recompute_embeddings(const env::NetworkState& state) const;

  Eigen::VectorXd state_embedding(const env::Observation& o) const;
  Eigen::VectorXd target_state_embedding(const env::Observation& o) const;
  std::uint64_t cache_state_key(const env::Observation& o, std::optional<int> decimals) const;

  // z_i . h + b using the cached z_i.
  double score(const Eigen::VectorXd& h, int node) const;
  double score(const env::Observation& o, int node) const { return score(state_embedding(o), node); }

  // Refreshes dirty embeddings, then returns the top-k visible devices by
  // score, best first; ties go to the lower id.
  std::vector<int> select(const env::NetworkState& state, const env::Observation& o);
  std::vector<int> select_from_scores(const std::vector<double>& scores,
                                      const std::vector<bool>& visible) const;

  // Mean cached score over `selected`. Throws Error when empty.
  double predict_reward(const env::Observation& o, const std::vector<int>& selected) const;

  // Packed trainable parameters: [state projector; node projector; b].
  Eigen::VectorXd trainable_parameters() const;
  void set_trainable_parameters(const Eigen::VectorXd& params);
  Eigen::Index trainable_parameter_count() const;

  // Mean squared error of predicted vs recorded reward, recomputing z_i from
  // the stored features. Gradient is with respect to trainable_parameters().
  double loss(const std::vector<const MetaTransition*>& batch) const;
  double loss_and_gradient(const std::vector<const MetaTransition*>& batch,
                           Eigen::VectorXd& gradient) const;
  // One clipped Adam step; soft-updates the target state projector and marks
  // every cached embedding dirty. Returns the pre-step loss.
  double train(const std::vector<const MetaTransition*>& batch);

  void record(MetaTransition transition) { replay_.push(std::move(transition)); }
  const RingBuffer<MetaTransition>& replay() const { return replay_; }
  void clear_replay() { replay_.clear(); }
  // Samples a replay minibatch and trains; no-op on an empty buffer.
  std::optional<double> train_from_replay(Rng& rng);

  const Eigen::MatrixXd& id_embeddings() const { return id_embeddings_; }
  const Eigen::MatrixXd& embedding_cache() const { return embedding_cache_; }
  const std::vector<bool>& dirty() const { return dirty_; }
  std::size_t dirty_count() const;
  double bias() const { return bias_; }
  void set_bias(double b) { bias_ = b; }
  nn::Mlp& node_projector() { return node_projector_; }
  const nn::Mlp& node_projector() const { return node_projector_; }
  nn::Mlp& state_projector() { return state_projector_; }
  const nn::Mlp& state_projector() const { return state_projector_; }
  const nn::Mlp& target_state_projector() const { return target_state_projector_; }

  // Header "MDMC", u32 version, u32 device count, role, config, then the three
  // projector checkpoints and the bias. ID embeddings are regenerated from
  // config.seed.
  void save(std::ostream& out) const;
  static MetaController load(std::istream& in);

 private:
  int device_count_;
  Role role_;
  MetaConfig config_;
  Eigen::MatrixXd id_embeddings_;    // id_dim x M, column i = e_i
  nn::Mlp node_projector_;
  nn::Mlp state_projector_;
  nn::Mlp target_state_projector_;
  double bias_ = 0.0;
  nn::OptimizerState optimizer_;
  Eigen::MatrixXd embedding_cache_;  // d x M, column i = z_i
  std::vector<bool> dirty_;
  int embedded_max_degree_ = -1;  // degree normalizer used for the cached rows
  RingBuffer<MetaTransition> replay_;
};

}  // namespace metadoar::meta
