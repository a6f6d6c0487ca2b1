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


#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace metadoar::cli {
namespace {

[[noreturn]] void bad_value(const std::string& name, const std::string& text, const char* expected) {
  throw Error("config: " + name + ": expected " + expected + ", got '" + text + "'");
}

template <typename T>
T parse_number(const std::string& name, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    bad_value(name, text, std::is_integral_v<T> ? "an integer" : "a number");
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

// Reads and writes one concrete field type.
template <typename T>
struct Codec {
  static T parse(const std::string& name, const std::string& text) { return parse_number<T>(name, text); }
  static std::string format(const T& v) { return format_number(v); }
};

template <>
struct Codec<bool> {
  static bool parse(const std::string& name, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    bad_value(name, text, "true or false");
  }
  static std::string format(bool v) { return v ? "true" : "false"; }
};

template <>
struct Codec<std::string> {
  static std::string parse(const std::string&, const std::string& text) { return text; }
  static std::string format(const std::string& v) { return v; }
};

template <>
struct Codec<env::GraphModel> {
  static env::GraphModel parse(const std::string& name, const std::string& text) {
    try {
      return env::parse_graph_model(text);
    } catch (const Error&) {
      bad_value(name, text, "a graph model name");
    }
  }
  static std::string format(env::GraphModel v) { return std::string(env::graph_model_name(v)); }
};

// "none" stands for an unset optional.
template <typename T>
struct Codec<std::optional<T>> {
  static std::optional<T> parse(const std::string& name, const std::string& text) {
    if (text == "none") return std::nullopt;
    return Codec<T>::parse(name, text);
  }
  static std::string format(const std::optional<T>& v) { return v ? Codec<T>::format(*v) : "none"; }
};

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Field field(std::string section, std::string key, Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  Field f;
  f.section = section;
  f.key = key;
  f.get = [access](const RunConfig& c) { return Codec<T>::format(access(const_cast<RunConfig&>(c))); };
  const std::string name = section + "." + key;
  f.set = [access, name](RunConfig& c, const std::string& text) { access(c) = Codec<T>::parse(name, text); };
  return f;
}

#define MD_FIELD(section, key, expr) field(section, key, [](RunConfig& c) -> auto& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MD_FIELD("env", "device_count", c.run.env.device_count),
      MD_FIELD("env", "steps_per_episode", c.run.env.steps_per_episode),
      MD_FIELD("env", "initial_compromised_ratio", c.run.env.initial_compromised_ratio),
      MD_FIELD("env", "num_attacker_owned", c.run.env.num_attacker_owned),
      MD_FIELD("env", "gamma", c.run.env.gamma),
      MD_FIELD("env", "comp_scale", c.run.env.comp_scale),
      MD_FIELD("env", "work_scale", c.run.env.work_scale),
      MD_FIELD("env", "def_scale", c.run.env.def_scale),
      MD_FIELD("env", "exploit_catalog_size", c.run.env.exploit_catalog_size),
      MD_FIELD("env", "app_catalog_size", c.run.env.app_catalog_size),
      MD_FIELD("env", "graph_model", c.run.env.graph_model),
      MD_FIELD("env", "seed", c.run.env.seed),
      MD_FIELD("env", "events_rate", c.run.env.events_rate),
      MD_FIELD("env", "p_add", c.run.env.p_add),
      MD_FIELD("env", "initial_vulnerability_prob", c.run.env.initial_vulnerability_prob),
      MD_FIELD("env", "attachment_edges", c.run.env.attachment_edges),
      MD_FIELD("env", "regular_degree", c.run.env.regular_degree),
      MD_FIELD("env", "fast_scan", c.run.env.fast_scan),
      MD_FIELD("env", "default_version", c.run.env.default_version),
      MD_FIELD("env", "default_mode", c.run.env.default_mode),
      MD_FIELD("env", "default_high", c.run.env.default_high),
      MD_FIELD("env", "max_network_size", c.run.env.max_network_size),
      MD_FIELD("env", "zero_day", c.run.env.zero_day),

      MD_FIELD("br", "hidden", c.run.br.hidden),
      MD_FIELD("br", "actor_lr", c.run.br.actor_lr),
      MD_FIELD("br", "critic_lr", c.run.br.critic_lr),
      MD_FIELD("br", "reward_scale", c.run.br.reward_scale),
      MD_FIELD("br", "tau", c.run.br.tau),
      MD_FIELD("br", "max_grad_norm", c.run.br.max_grad_norm),
      MD_FIELD("br", "noise_std", c.run.br.noise_std),
      MD_FIELD("br", "greedy_k", c.run.br.greedy_k),
      MD_FIELD("br", "greedy_tau", c.run.br.greedy_tau),
      MD_FIELD("br", "replay_capacity", c.run.br.replay_capacity),
      MD_FIELD("br", "batch_size", c.run.br.batch_size),
      MD_FIELD("br", "warmup", c.run.br.warmup),
      MD_FIELD("br", "budget", c.run.br.budget),

      MD_FIELD("meta", "enabled", c.run.use_meta),
      MD_FIELD("meta", "alpha", c.run.meta.alpha),
      MD_FIELD("meta", "embedding_dim", c.run.meta.embedding_dim),
      MD_FIELD("meta", "id_dim", c.run.meta.id_dim),
      MD_FIELD("meta", "node_hidden", c.run.meta.node_hidden),
      MD_FIELD("meta", "state_hidden", c.run.meta.state_hidden),
      MD_FIELD("meta", "learning_rate", c.run.meta.learning_rate),
      MD_FIELD("meta", "max_grad_norm", c.run.meta.max_grad_norm),
      MD_FIELD("meta", "target_tau", c.run.meta.target_tau),
      MD_FIELD("meta", "replay_capacity", c.run.meta.replay_capacity),
      MD_FIELD("meta", "batch_size", c.run.meta.batch_size),
      MD_FIELD("meta", "train_every", c.run.meta.train_every),

      MD_FIELD("cache", "enabled", c.run.use_cache),
      MD_FIELD("cache", "capacity", c.run.cache.capacity),
      MD_FIELD("cache", "ttl", c.run.cache.ttl),
      MD_FIELD("cache", "flush_interval", c.run.cache.flush_interval),
      MD_FIELD("cache", "reeval_prob", c.run.cache.reeval_prob),
      MD_FIELD("cache", "khop_radius", c.run.cache.khop_radius),
      MD_FIELD("cache", "decimals", c.run.cache.quantization_decimals),

      MD_FIELD("do", "min_iterations", c.run.stop.min_iterations),
      MD_FIELD("do", "max_iterations", c.run.stop.max_iterations),
      MD_FIELD("do", "episodes_per_cell", c.run.episodes_per_cell),
      MD_FIELD("do", "eps_relative", c.run.stop.relative),
      MD_FIELD("do", "eps_absolute", c.run.stop.absolute),
      MD_FIELD("do", "cell_threads", c.run.threads),

      MD_FIELD("run", "seed", c.run.seed),
      MD_FIELD("run", "seeds", c.seeds),
      MD_FIELD("run", "out", c.out),
      MD_FIELD("run", "parallel", c.parallel),
      MD_FIELD("run", "wall_clock", c.wall_clock),
      MD_FIELD("run", "scale_decodes", c.scale_decodes),
      MD_FIELD("run", "theory_instances", c.theory_instances),
      MD_FIELD("run", "theory_tol", c.theory_tol),
      MD_FIELD("run", "theory_max_states", c.theory_max_states),
      MD_FIELD("run", "theory_max_actions", c.theory_max_actions),
      MD_FIELD("run", "theory_unpruned", c.theory_unpruned),
  };
  return table;
}

#undef MD_FIELD

}  // namespace

void RunConfig::validate() const {
  run.validate();
  if (seeds < 1) throw Error("run.seeds: must be a positive integer");
  if (parallel < 1) throw Error("run.parallel: must be a positive integer");
  if (scale_decodes < 1) throw Error("run.scale_decodes: must be a positive integer");
  if (theory_instances < 0) throw Error("run.theory_instances: must be >= 0");
  if (!(theory_tol > 0.0)) throw Error("run.theory_tol: must be > 0");
  if (theory_max_states < 1) throw Error("run.theory_max_states: must be a positive integer");
  if (theory_max_actions < 1) throw Error("run.theory_max_actions: must be a positive integer");
  if (out.empty()) throw Error("run.out: must not be empty");
}

RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, std::map<std::string, const Field*>> index;
  for (const auto& f : fields()) index[f.section][f.key] = &f;

  RunConfig config;
  for (const auto& [section, body] : tree) {
    const auto sec = index.find(section);
    if (!body.data().empty()) throw Error("config: key '" + section + "' must sit inside a section");
    if (sec == index.end()) throw Error("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const auto f = sec->second.find(key);
      if (f == sec->second.end()) throw Error("config: unknown key " + section + "." + key);
      f->second->set(config, value.get_value<std::string>());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
}

}  // namespace metadoar::cli
