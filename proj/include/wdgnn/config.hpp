#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdgnn/architecture.hpp"

namespace wdgnn {

// Everything an experiment run needs, validated up front. Defaults follow
// the reference setups; dataset sizes default to the scaled-down variants so
// a run finishes on a laptop.
struct ExperimentConfig {
  // [scenario]
  std::string scenario = "sourceloc";  // sourceloc | flocking | movielens

  // [arch]
  int deep_layers = 2;
  int deep_features = 32;
  int filter_order = 5;
  int output_features = 32;
  std::string nonlinearity = "relu";

  // [train]
  int epochs = 100;
  int batch_size = 50;
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double validation_fraction = 0.2;
  int threads = 0;

  // [online]
  std::string online_mode = "distributed";  // none | centralized | distributed
  double gamma = 5e-3;
  int online_steps = 1000;
  double epsilon_floor = 1e-3;

  // [perturb]
  double drop_probability = 0.3;

  // [run]
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "out";

  // [sourceloc]
  int nodes = 50;
  int communities = 5;
  double p_intra = 0.8;
  double p_inter = 0.2;
  double noise_std = 0.01;
  int max_diffusion_time = 30;
  int train_samples = 4000;
  int val_samples = 1000;
  int test_samples = 500;

  // [flocking]
  int agents = 50;
  double comm_radius = 2.0;
  double sample_time = 0.01;
  double duration = 2.0;
  double max_accel = 10.0;
  double init_velocity = 3.0;
  double min_spacing = 0.1;
  double init_radius = 0.0;  // 0 = scale with sqrt(N)
  int train_trajectories = 60;
  int val_trajectories = 8;
  int test_trajectories = 8;

  // [movielens]
  std::string ratings_path = "";
  std::string target_movie = "Star Wars";
  std::string transfer_movie = "Contact";
  double test_fraction = 0.1;
  int top_similar = 10;
  int keep_movies = 400;

  // [sweep]
  std::vector<double> sweep_probabilities = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  int sweep_instances = 200;
  double sweep_eps_max = 0.05;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

}  // namespace detail

inline void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::to_double;
  using detail::to_int;
  if (key == "scenario.kind") cfg.scenario = value;
  else if (key == "arch.deep_layers") cfg.deep_layers = to_int(key, value);
  else if (key == "arch.deep_features") cfg.deep_features = to_int(key, value);
  else if (key == "arch.filter_order") cfg.filter_order = to_int(key, value);
  else if (key == "arch.output_features") cfg.output_features = to_int(key, value);
  else if (key == "arch.nonlinearity") cfg.nonlinearity = value;
  else if (key == "train.epochs") cfg.epochs = to_int(key, value);
  else if (key == "train.batch_size") cfg.batch_size = to_int(key, value);
  else if (key == "train.learning_rate") cfg.learning_rate = to_double(key, value);
  else if (key == "train.beta1") cfg.beta1 = to_double(key, value);
  else if (key == "train.beta2") cfg.beta2 = to_double(key, value);
  else if (key == "train.validation_fraction") cfg.validation_fraction = to_double(key, value);
  else if (key == "train.threads") cfg.threads = to_int(key, value);
  else if (key == "online.mode") cfg.online_mode = value;
  else if (key == "online.gamma") cfg.gamma = to_double(key, value);
  else if (key == "online.steps") cfg.online_steps = to_int(key, value);
  else if (key == "online.epsilon_floor") cfg.epsilon_floor = to_double(key, value);
  else if (key == "perturb.drop_probability") cfg.drop_probability = to_double(key, value);
  else if (key == "run.seeds") {
    cfg.seeds.clear();
    for (const std::string& s : detail::split_list(value))
      cfg.seeds.push_back(static_cast<uint64_t>(std::stoull(s)));
  } else if (key == "run.out_dir") cfg.out_dir = value;
  else if (key == "sourceloc.nodes") cfg.nodes = to_int(key, value);
  else if (key == "sourceloc.communities") cfg.communities = to_int(key, value);
  else if (key == "sourceloc.p_intra") cfg.p_intra = to_double(key, value);
  else if (key == "sourceloc.p_inter") cfg.p_inter = to_double(key, value);
  else if (key == "sourceloc.noise_std") cfg.noise_std = to_double(key, value);
  else if (key == "sourceloc.max_diffusion_time") cfg.max_diffusion_time = to_int(key, value);
  else if (key == "sourceloc.train_samples") cfg.train_samples = to_int(key, value);
  else if (key == "sourceloc.val_samples") cfg.val_samples = to_int(key, value);
  else if (key == "sourceloc.test_samples") cfg.test_samples = to_int(key, value);
  else if (key == "flocking.agents") cfg.agents = to_int(key, value);
  else if (key == "flocking.comm_radius") cfg.comm_radius = to_double(key, value);
  else if (key == "flocking.sample_time") cfg.sample_time = to_double(key, value);
  else if (key == "flocking.duration") cfg.duration = to_double(key, value);
  else if (key == "flocking.max_accel") cfg.max_accel = to_double(key, value);
  else if (key == "flocking.init_velocity") cfg.init_velocity = to_double(key, value);
  else if (key == "flocking.min_spacing") cfg.min_spacing = to_double(key, value);
  else if (key == "flocking.init_radius") cfg.init_radius = to_double(key, value);
  else if (key == "flocking.train_trajectories") cfg.train_trajectories = to_int(key, value);
  else if (key == "flocking.val_trajectories") cfg.val_trajectories = to_int(key, value);
  else if (key == "flocking.test_trajectories") cfg.test_trajectories = to_int(key, value);
  else if (key == "movielens.ratings_path") cfg.ratings_path = value;
  else if (key == "movielens.target_movie") cfg.target_movie = value;
  else if (key == "movielens.transfer_movie") cfg.transfer_movie = value;
  else if (key == "movielens.test_fraction") cfg.test_fraction = to_double(key, value);
  else if (key == "movielens.top_similar") cfg.top_similar = to_int(key, value);
  else if (key == "movielens.keep_movies") cfg.keep_movies = to_int(key, value);
  else if (key == "sweep.probabilities") {
    cfg.sweep_probabilities.clear();
    for (const std::string& s : detail::split_list(value))
      cfg.sweep_probabilities.push_back(to_double(key, s));
  } else if (key == "sweep.instances") cfg.sweep_instances = to_int(key, value);
  else if (key == "sweep.eps_max") cfg.sweep_eps_max = to_double(key, value);
  else throw std::runtime_error("config: unknown key '" + key + "'");
}

// Collect every constraint violation instead of stopping at the first.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  require(cfg.scenario == "sourceloc" || cfg.scenario == "flocking" || cfg.scenario == "movielens",
          "scenario.kind must be sourceloc, flocking or movielens");
  require(cfg.deep_layers >= 1, "arch.deep_layers must be >= 1");
  require(cfg.deep_features >= 1, "arch.deep_features must be >= 1");
  require(cfg.filter_order >= 0, "arch.filter_order must be >= 0");
  require(cfg.output_features >= 1, "arch.output_features must be >= 1");
  require(cfg.nonlinearity == "relu" || cfg.nonlinearity == "tanh" || cfg.nonlinearity == "identity",
          "arch.nonlinearity must be relu, tanh or identity");
  require(cfg.epochs >= 1, "train.epochs must be >= 1");
  require(cfg.batch_size >= 1, "train.batch_size must be >= 1");
  require(cfg.learning_rate > 0, "train.learning_rate must be > 0");
  require(cfg.beta1 >= 0 && cfg.beta1 < 1, "train.beta1 must be in [0,1)");
  require(cfg.beta2 >= 0 && cfg.beta2 < 1, "train.beta2 must be in [0,1)");
  require(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1,
          "train.validation_fraction must be in [0,1)");
  require(cfg.threads >= 0, "train.threads must be >= 0");
  require(cfg.online_mode == "none" || cfg.online_mode == "centralized" ||
              cfg.online_mode == "distributed",
          "online.mode must be none, centralized or distributed");
  require(cfg.gamma > 0, "online.gamma must be > 0");
  require(cfg.online_steps >= 0, "online.steps must be >= 0");
  require(cfg.epsilon_floor > 0, "online.epsilon_floor must be > 0");
  require(cfg.drop_probability >= 0 && cfg.drop_probability <= 1,
          "perturb.drop_probability must be in [0,1]");
  require(!cfg.seeds.empty(), "run.seeds must list at least one seed");
  require(cfg.nodes >= 2, "sourceloc.nodes must be >= 2");
  require(cfg.communities >= 1 && cfg.nodes % std::max(1, cfg.communities) == 0,
          "sourceloc.communities must divide sourceloc.nodes");
  require(cfg.p_intra >= 0 && cfg.p_intra <= 1, "sourceloc.p_intra must be in [0,1]");
  require(cfg.p_inter >= 0 && cfg.p_inter <= 1, "sourceloc.p_inter must be in [0,1]");
  require(cfg.noise_std >= 0, "sourceloc.noise_std must be >= 0");
  require(cfg.max_diffusion_time >= 0, "sourceloc.max_diffusion_time must be >= 0");
  require(cfg.train_samples >= 1 && cfg.val_samples >= 0 && cfg.test_samples >= 1,
          "sourceloc sample counts must be positive");
  require(cfg.agents >= 2, "flocking.agents must be >= 2");
  require(cfg.comm_radius > 0, "flocking.comm_radius must be > 0");
  require(cfg.sample_time > 0, "flocking.sample_time must be > 0");
  require(cfg.duration > 0, "flocking.duration must be > 0");
  require(cfg.max_accel > 0, "flocking.max_accel must be > 0");
  require(cfg.init_velocity > 0, "flocking.init_velocity must be > 0");
  require(cfg.min_spacing > 0, "flocking.min_spacing must be > 0");
  require(cfg.init_radius >= 0, "flocking.init_radius must be >= 0");
  require(cfg.train_trajectories >= 1 && cfg.val_trajectories >= 0 && cfg.test_trajectories >= 1,
          "flocking trajectory counts must be positive");
  require(cfg.test_fraction > 0 && cfg.test_fraction < 1, "movielens.test_fraction must be in (0,1)");
  require(cfg.top_similar >= 1, "movielens.top_similar must be >= 1");
  require(cfg.keep_movies >= 2, "movielens.keep_movies must be >= 2");
  for (double p : cfg.sweep_probabilities)
    require(p >= 0 && p <= 1, "sweep.probabilities entries must be in [0,1]");
  require(!cfg.sweep_probabilities.empty(), "sweep.probabilities must be nonempty");
  require(cfg.sweep_instances >= 1, "sweep.instances must be >= 1");
  require(cfg.sweep_eps_max > 0, "sweep.eps_max must be > 0");
  return errors;
}

// Line-oriented "key = value" text with optional [section] headers; '#'
// starts a comment. An empty file yields all defaults.
inline ExperimentConfig parse_config_text(std::istream& in) {
  ExperimentConfig cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected 'key = value' at line " + std::to_string(line_no));
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos && !section.empty()) key = section + "." + key;
    apply_config_key(cfg, key, value);
  }
  std::vector<std::string> errors = validate_config(cfg);
  if (!errors.empty()) {
    std::string joined = "config validation failed:";
    for (const std::string& e : errors) joined += "\n  - " + e;
    throw std::runtime_error(joined);
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_config: cannot open " + path);
  return parse_config_text(in);
}

// Canonical serialization: one dotted key per line, fixed order; reparses to
// an equal config and feeds the config hash.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "arch.deep_features = " << cfg.deep_features << "\n";
  out << "arch.deep_layers = " << cfg.deep_layers << "\n";
  out << "arch.filter_order = " << cfg.filter_order << "\n";
  out << "arch.nonlinearity = " << cfg.nonlinearity << "\n";
  out << "arch.output_features = " << cfg.output_features << "\n";
  out << "flocking.agents = " << cfg.agents << "\n";
  out << "flocking.comm_radius = " << format_double(cfg.comm_radius) << "\n";
  out << "flocking.duration = " << format_double(cfg.duration) << "\n";
  out << "flocking.init_radius = " << format_double(cfg.init_radius) << "\n";
  out << "flocking.init_velocity = " << format_double(cfg.init_velocity) << "\n";
  out << "flocking.max_accel = " << format_double(cfg.max_accel) << "\n";
  out << "flocking.min_spacing = " << format_double(cfg.min_spacing) << "\n";
  out << "flocking.sample_time = " << format_double(cfg.sample_time) << "\n";
  out << "flocking.test_trajectories = " << cfg.test_trajectories << "\n";
  out << "flocking.train_trajectories = " << cfg.train_trajectories << "\n";
  out << "flocking.val_trajectories = " << cfg.val_trajectories << "\n";
  out << "movielens.keep_movies = " << cfg.keep_movies << "\n";
  out << "movielens.ratings_path = " << cfg.ratings_path << "\n";
  out << "movielens.target_movie = " << cfg.target_movie << "\n";
  out << "movielens.test_fraction = " << format_double(cfg.test_fraction) << "\n";
  out << "movielens.top_similar = " << cfg.top_similar << "\n";
  out << "movielens.transfer_movie = " << cfg.transfer_movie << "\n";
  out << "online.epsilon_floor = " << format_double(cfg.epsilon_floor) << "\n";
  out << "online.gamma = " << format_double(cfg.gamma) << "\n";
  out << "online.mode = " << cfg.online_mode << "\n";
  out << "online.steps = " << cfg.online_steps << "\n";
  out << "perturb.drop_probability = " << format_double(cfg.drop_probability) << "\n";
  out << "run.out_dir = " << cfg.out_dir << "\n";
  out << "run.seeds = ";
  for (size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
  out << "\n";
  out << "scenario.kind = " << cfg.scenario << "\n";
  out << "sourceloc.communities = " << cfg.communities << "\n";
  out << "sourceloc.max_diffusion_time = " << cfg.max_diffusion_time << "\n";
  out << "sourceloc.nodes = " << cfg.nodes << "\n";
  out << "sourceloc.noise_std = " << format_double(cfg.noise_std) << "\n";
  out << "sourceloc.p_inter = " << format_double(cfg.p_inter) << "\n";
  out << "sourceloc.p_intra = " << format_double(cfg.p_intra) << "\n";
  out << "sourceloc.test_samples = " << cfg.test_samples << "\n";
  out << "sourceloc.train_samples = " << cfg.train_samples << "\n";
  out << "sourceloc.val_samples = " << cfg.val_samples << "\n";
  out << "sweep.eps_max = " << format_double(cfg.sweep_eps_max) << "\n";
  out << "sweep.instances = " << cfg.sweep_instances << "\n";
  out << "sweep.probabilities = ";
  for (size_t i = 0; i < cfg.sweep_probabilities.size(); ++i)
    out << (i ? "," : "") << format_double(cfg.sweep_probabilities[i]);
  out << "\n";
  out << "train.batch_size = " << cfg.batch_size << "\n";
  out << "train.beta1 = " << format_double(cfg.beta1) << "\n";
  out << "train.beta2 = " << format_double(cfg.beta2) << "\n";
  out << "train.epochs = " << cfg.epochs << "\n";
  out << "train.learning_rate = " << format_double(cfg.learning_rate) << "\n";
  out << "train.threads = " << cfg.threads << "\n";
  out << "train.validation_fraction = " << format_double(cfg.validation_fraction) << "\n";
  return out.str();
}

// FNV-1a over the canonical serialization
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::string text = serialize_config(cfg);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wdgnn
