#pragma once

#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wdgnn/architecture.hpp"
#include "wdgnn/graph.hpp"
#include "wdgnn/online.hpp"
#include "wdgnn/rng.hpp"
#include "wdgnn/training.hpp"

namespace wdgnn {

struct SwarmState {
  Matrix pos;  // N x 2, meters
  Matrix vel;  // N x 2, m/s

  int n() const { return pos.rows; }
};

struct SwarmConfig {
  int n_agents = 50;
  double comm_radius = 2.0;       // m
  double sample_time = 0.01;      // s
  double duration = 2.0;          // s
  double max_accel = 10.0;        // m/s^2, per component
  double init_velocity = 3.0;     // velocities drawn from [-v, +v]^2
  double min_spacing = 0.1;       // m, floor on initial pairwise distance
  double potential_cutoff = 2.0;  // m, collision potential support
  double init_radius = 0.0;       // m, 0 = scale with sqrt(N)

  int steps() const { return static_cast<int>(std::lround(duration / sample_time)); }
  double disc_radius() const {
    return init_radius > 0.0 ? init_radius : 0.6 * std::sqrt(static_cast<double>(n_agents));
  }
};

// Edge iff the pair sits within the communication radius (inclusive).
inline Gso build_communication_graph(const SwarmState& state, double r) {
  if (r <= 0.0) throw std::invalid_argument("build_communication_graph: radius must be positive");
  int n = state.n();
  Gso g{Matrix(n, n), true};
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double dx = state.pos(i, 0) - state.pos(j, 0);
      double dy = state.pos(i, 1) - state.pos(j, 1);
      if (std::sqrt(dx * dx + dy * dy) <= r) {
        g.entries(i, j) = 1.0;
        g.entries(j, i) = 1.0;
      }
    }
  return g;
}

// grad wrt p_i of V = 1/||d||^2 + log ||d||^2 inside the cutoff, 0 outside
inline std::pair<double, double> collision_potential_gradient(double dx, double dy, double cutoff) {
  double d2 = dx * dx + dy * dy;
  if (d2 == 0.0) throw std::invalid_argument("collision_potential_gradient: coincident positions");
  if (d2 > cutoff * cutoff) return {0.0, 0.0};
  double c = -2.0 / (d2 * d2) + 2.0 / d2;
  return {c * dx, c * dy};
}

// u_i = -sum_j (v_i - v_j) - sum_j grad V(p_i, p_j), clipped per component
inline Matrix optimal_controller(const SwarmState& state, double cutoff, double max_accel) {
  int n = state.n();
  Matrix u(n, 2);
  double mean_vx = 0.0, mean_vy = 0.0;
  for (int i = 0; i < n; ++i) {
    mean_vx += state.vel(i, 0);
    mean_vy += state.vel(i, 1);
  }
  for (int i = 0; i < n; ++i) {
    double ux = -(n * state.vel(i, 0) - mean_vx);
    double uy = -(n * state.vel(i, 1) - mean_vy);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      auto [gx, gy] = collision_potential_gradient(state.pos(i, 0) - state.pos(j, 0),
                                                   state.pos(i, 1) - state.pos(j, 1), cutoff);
      ux -= gx;
      uy -= gy;
    }
    u(i, 0) = std::clamp(ux, -max_accel, max_accel);
    u(i, 1) = std::clamp(uy, -max_accel, max_accel);
  }
  return u;
}

// p+ = p + v Ts + u Ts^2/2,  v+ = v + u Ts
inline SwarmState step_dynamics(const SwarmState& state, const Matrix& u, double t_s) {
  check_shape(state.vel, u, "step_dynamics");
  if (!all_finite(state.pos) || !all_finite(state.vel) || !all_finite(u))
    throw std::invalid_argument("step_dynamics: non-finite input");
  SwarmState next = state;
  for (int i = 0; i < state.n(); ++i)
    for (int c = 0; c < 2; ++c) {
      next.pos(i, c) += state.vel(i, c) * t_s + 0.5 * u(i, c) * t_s * t_s;
      next.vel(i, c) += u(i, c) * t_s;
    }
  return next;
}

// Per node: [sum (v_i - v_j), sum d/||d||^4, sum d/||d||^2] over graph
// neighbors, three 2-vectors concatenated to six features.
inline GraphSignal flocking_features(const SwarmState& state, const Gso& graph) {
  int n = state.n();
  GraphSignal x(n, 6);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i || graph.entries(i, j) == 0.0) continue;
      double dx = state.pos(i, 0) - state.pos(j, 0);
      double dy = state.pos(i, 1) - state.pos(j, 1);
      double d2 = dx * dx + dy * dy;
      if (d2 == 0.0) throw std::invalid_argument("flocking_features: coincident neighbors");
      x(i, 0) += state.vel(i, 0) - state.vel(j, 0);
      x(i, 1) += state.vel(i, 1) - state.vel(j, 1);
      x(i, 2) += dx / (d2 * d2);
      x(i, 3) += dy / (d2 * d2);
      x(i, 4) += dx / d2;
      x(i, 5) += dy / d2;
    }
  }
  return x;
}

// per-step variance of velocities around their mean
inline double velocity_variation_step(const SwarmState& state) {
  int n = state.n();
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += state.vel(i, 0);
    my += state.vel(i, 1);
  }
  mx /= n;
  my /= n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double dx = state.vel(i, 0) - mx;
    double dy = state.vel(i, 1) - my;
    s += dx * dx + dy * dy;
  }
  return s / n;
}

struct VelocityVariation {
  double total = 0.0;
  double final_step = 0.0;
};

inline VelocityVariation velocity_variation(const std::vector<SwarmState>& trajectory) {
  if (trajectory.empty()) throw std::invalid_argument("velocity_variation: empty trajectory");
  VelocityVariation v;
  for (const SwarmState& s : trajectory) v.total += velocity_variation_step(s);
  v.final_step = velocity_variation_step(trajectory.back());
  return v;
}

// Rejection-sample positions in a disc with the minimum spacing, velocities
// uniform in [-v, +v]^2; redraw until the communication graph is connected.
inline SwarmState init_swarm(const SwarmConfig& cfg, Rng& rng) {
  double radius = cfg.disc_radius();
  for (int attempt = 0; attempt < 100; ++attempt) {
    SwarmState st{Matrix(cfg.n_agents, 2), Matrix(cfg.n_agents, 2)};
    bool ok = true;
    for (int i = 0; i < cfg.n_agents && ok; ++i) {
      int tries = 0;
      for (;; ++tries) {
        if (tries > 1000) {
          ok = false;
          break;
        }
        double px = rng.uniform(-radius, radius);
        double py = rng.uniform(-radius, radius);
        if (px * px + py * py > radius * radius) continue;
        bool spaced = true;
        for (int j = 0; j < i; ++j) {
          double dx = px - st.pos(j, 0), dy = py - st.pos(j, 1);
          if (dx * dx + dy * dy < cfg.min_spacing * cfg.min_spacing) {
            spaced = false;
            break;
          }
        }
        if (spaced) {
          st.pos(i, 0) = px;
          st.pos(i, 1) = py;
          break;
        }
      }
    }
    if (!ok) continue;
    for (int i = 0; i < cfg.n_agents; ++i) {
      st.vel(i, 0) = rng.uniform(-cfg.init_velocity, cfg.init_velocity);
      st.vel(i, 1) = rng.uniform(-cfg.init_velocity, cfg.init_velocity);
    }
    if (is_connected(build_communication_graph(st, cfg.comm_radius))) return st;
  }
  throw std::runtime_error("init_swarm: initialization retries exhausted");
}

enum class FlockingMode { expert, offline, centralized_online, distributed_online };

struct FlockingStep {
  Gso graph;
  GraphSignal features;
  Matrix action;  // executed (clipped) accelerations
};

struct FlockingResult {
  std::vector<SwarmState> trajectory;  // states after each control step (1..D)
  std::vector<FlockingStep> steps;     // per-step record aligned with controls
  VelocityVariation variation;
  OnlineTrace trace;
};

namespace detail {
// gradient of the wide taps for a loss with full-output upstream
inline std::vector<Matrix> wide_gradient(const FilterCache& stacks, const WdGnnParams& p,
                                         const Matrix& upstream) {
  Matrix up_psi = matmul_a_bt(upstream, p.readout.w);
  for (double& v : up_psi.a) v *= p.alpha_w;
  std::vector<Matrix> g;
  for (size_t k = 0; k < stacks.shifted.size(); ++k) g.push_back(matmul_at_b(stacks.shifted[k], up_psi));
  return g;
}
}  // namespace detail

// Closed-loop rollout. Each step builds the graph from positions, computes
// the features, evaluates the policy (deep part on the current pair, wide
// part on the delayed stacks of the last K+1 pairs), clips accelerations and
// steps the dynamics. Online modes retrain the wide taps each step against a
// one-step-lookahead velocity-variance surrogate: v_{t+1} = v_t + u_t Ts.
inline FlockingResult run_flocking(const WdGnnParams& policy, const SwarmConfig& cfg,
                                   FlockingMode mode, double gamma, uint64_t seed,
                                   double epsilon_floor = 1e-3) {
  Rng rng(Rng::derive(seed, 0xF70C));
  SwarmState state = init_swarm(cfg, rng);
  int n = cfg.n_agents;
  int d_steps = cfg.steps();
  double ts = cfg.sample_time;

  WdGnnParams shared = policy;  // centralized online updates move its wide taps
  NodeParams locals;
  if (mode == FlockingMode::distributed_online) locals = replicate_wide(policy.wide, n);
  int k_order = policy.wide.k_order();

  std::deque<std::pair<Gso, GraphSignal>> history;
  FlockingResult result;

  for (int t = 0; t < d_steps; ++t) {
    Gso graph = build_communication_graph(state, cfg.comm_radius);
    GraphSignal x = flocking_features(state, graph);
    history.emplace_front(graph, x);
    while (static_cast<int>(history.size()) > k_order + 1) history.pop_back();
    while (static_cast<int>(history.size()) < k_order + 1) history.push_back(history.back());

    Matrix u;
    FilterCache stacks;
    Matrix deep_out;
    if (mode == FlockingMode::expert) {
      u = optimal_controller(state, cfg.potential_cutoff, cfg.max_accel);
    } else {
      stacks = delayed_filter_stacks({history.begin(), history.end()}, k_order);
      auto [deep, deep_cache] = gnn_forward(graph, x, shared.deep);
      (void)deep_cache;
      deep_out = std::move(deep);
      Matrix raw;
      if (mode == FlockingMode::distributed_online) {
        raw = distributed_output(locals, stacks, deep_out, shared);
      } else {
        Matrix psi = shared.alpha_w * filter_apply(stacks, shared.wide);
        add_scaled(psi, deep_out, shared.alpha_d);
        add_constant(psi, shared.beta);
        raw = apply_readout(shared.readout, psi);
      }
      u = raw;
      for (double& v : u.a) v = std::clamp(v, -cfg.max_accel, cfg.max_accel);
    }

    SwarmState next = step_dynamics(state, u, ts);
    if (!all_finite(next.pos) || !all_finite(next.vel))
      throw std::runtime_error("run_flocking: non-finite state at step " + std::to_string(t));

    TraceRow row;
    row.t = t;
    row.gamma = gamma;
    row.metric = velocity_variation_step(next);
    row.loss = row.metric;

    if (mode == FlockingMode::centralized_online || mode == FlockingMode::distributed_online) {
      // clip mask: no gradient through saturated accelerations
      Matrix clip_mask(n, 2, 1.0);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c)
          if (std::fabs(u(i, c)) >= cfg.max_accel) clip_mask(i, c) = 0.0;

      if (mode == FlockingMode::centralized_online) {
        double mvx = 0.0, mvy = 0.0;
        for (int i = 0; i < n; ++i) {
          mvx += next.vel(i, 0);
          mvy += next.vel(i, 1);
        }
        mvx /= n;
        mvy /= n;
        Matrix upstream(n, 2);
        for (int i = 0; i < n; ++i) {
          upstream(i, 0) = ts * 2.0 / n * (next.vel(i, 0) - mvx) * clip_mask(i, 0);
          upstream(i, 1) = ts * 2.0 / n * (next.vel(i, 1) - mvy) * clip_mask(i, 1);
        }
        std::vector<Matrix> g = detail::wide_gradient(stacks, shared, upstream);
        for (int k = 0; k <= k_order; ++k) {
          if (!all_finite(g[k])) throw std::runtime_error("run_flocking: non-finite gradient");
          add_scaled(shared.wide.taps[k], g[k], -gamma);
        }
      } else {
        // neighborhood velocity variance as the local cost
        Matrix local_up(n, 2);
        for (int i = 0; i < n; ++i) {
          double mvx = next.vel(i, 0), mvy = next.vel(i, 1);
          int count = 1;
          for (int j = 0; j < n; ++j) {
            if (j == i || graph.entries(i, j) == 0.0) continue;
            mvx += next.vel(j, 0);
            mvy += next.vel(j, 1);
            ++count;
          }
          mvx /= count;
          mvy /= count;
          local_up(i, 0) = ts * 2.0 / count * (next.vel(i, 0) - mvx) * clip_mask(i, 0);
          local_up(i, 1) = ts * 2.0 / count * (next.vel(i, 1) - mvy) * clip_mask(i, 1);
        }
        ConsensusWeights w = metropolis_weights(graph, epsilon_floor);
        distributed_online_step(locals, w, graph, stacks, shared, local_up, gamma);
        row.disagreement = consensus_disagreement(locals);
      }
    }

    result.steps.push_back({std::move(graph), std::move(x), u});
    result.trajectory.push_back(next);
    result.trace.push_back(std::move(row));
    state = std::move(next);
  }

  result.variation = velocity_variation(result.trajectory);
  return result;
}

// Expert rollouts recorded as (features, graph, expert action) samples.
inline Dataset gen_flocking_dataset(const SwarmConfig& cfg, int n_trajectories, uint64_t seed) {
  Dataset ds;
  ds.num_classes = 0;
  WdGnnParams unused;  // expert mode ignores the policy
  unused.wide = FilterTaps{{Matrix(6, 2)}};
  for (int traj = 0; traj < n_trajectories; ++traj) {
    FlockingResult roll = run_flocking(unused, cfg, FlockingMode::expert, 0.0,
                                       Rng::derive(seed, static_cast<uint64_t>(traj)));
    for (FlockingStep& step : roll.steps) {
      Sample smp;
      smp.x = std::move(step.features);
      smp.target = std::move(step.action);
      smp.graph_index = static_cast<int>(ds.graphs.size());
      ds.graphs.push_back(std::move(step.graph));
      ds.samples.push_back(std::move(smp));
    }
  }
  return ds;
}

// CSV per step: t, agent id, px, py, vx, vy, ux, uy
inline void write_trajectory_csv(const std::string& path, const FlockingResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  out << "t,agent,px,py,vx,vy,ux,uy\n";
  for (size_t t = 0; t < result.trajectory.size(); ++t) {
    const SwarmState& st = result.trajectory[t];
    const Matrix& u = result.steps[t].action;
    for (int i = 0; i < st.n(); ++i)
      out << t << "," << i << "," << format_double(st.pos(i, 0)) << "," << format_double(st.pos(i, 1))
          << "," << format_double(st.vel(i, 0)) << "," << format_double(st.vel(i, 1)) << ","
          << format_double(u(i, 0)) << "," << format_double(u(i, 1)) << "\n";
  }
}

}  // namespace wdgnn
