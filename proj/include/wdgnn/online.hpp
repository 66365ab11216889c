#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wdgnn/architecture.hpp"
#include "wdgnn/graph.hpp"
#include "wdgnn/training.hpp"

namespace wdgnn {

// Per-node copies of the wide-part taps for the distributed update.
struct NodeParams {
  std::vector<FilterTaps> taps;

  int n() const { return static_cast<int>(taps.size()); }
};

inline NodeParams replicate_wide(const FilterTaps& wide, int n) {
  NodeParams p;
  p.taps.assign(n, wide);
  return p;
}

// max over node pairs of the Frobenius distance between local tap sets
inline double consensus_disagreement(const NodeParams& locals) {
  if (locals.taps.empty()) throw std::invalid_argument("consensus_disagreement: empty");
  double worst = 0.0;
  for (int i = 0; i < locals.n(); ++i)
    for (int j = i + 1; j < locals.n(); ++j)
      worst = std::max(worst, taps_distance(locals.taps[i], locals.taps[j]));
  return worst;
}

inline FilterTaps mean_taps(const NodeParams& locals) {
  FilterTaps mean = locals.taps[0];
  for (int i = 1; i < locals.n(); ++i)
    for (size_t k = 0; k < mean.taps.size(); ++k) add_scaled(mean.taps[k], locals.taps[i].taps[k], 1.0);
  for (Matrix& t : mean.taps)
    for (double& v : t.a) v /= locals.n();
  return mean;
}

struct TraceRow {
  int t = 0;
  double loss = 0.0;
  double metric = 0.0;
  double disagreement = 0.0;
  std::optional<double> dist_to_opt;
  double gamma = 0.0;
};

using OnlineTrace = std::vector<TraceRow>;

inline void write_trace_csv(const std::string& path, const OnlineTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "t,loss,metric,disagreement,dist_to_opt,gamma\n";
  for (const TraceRow& r : trace) {
    out << r.t << "," << format_double(r.loss) << "," << format_double(r.metric) << ","
        << format_double(r.disagreement) << ",";
    if (r.dist_to_opt) out << format_double(*r.dist_to_opt);
    out << "," << format_double(r.gamma) << "\n";
  }
}

// One centralized gradient step on the wide taps; everything else is frozen.
// `loss_fn` maps the model output to (loss, upstream gradient).
using LossFn = std::function<std::pair<double, Matrix>(const Matrix& out)>;

inline double centralized_online_step(WdGnnParams& params, const Gso& s_t, const GraphSignal& x_t,
                                      const LossFn& loss_fn, double gamma) {
  auto [out, cache] = wdgnn_forward(s_t, x_t, params);
  auto [loss, upstream] = loss_fn(out);
  WdGnnGrads g = wdgnn_backward(cache, s_t, params, upstream);
  for (const Matrix& gw : g.wide)
    if (!all_finite(gw)) throw std::runtime_error("centralized_online_step: non-finite gradient");
  for (int k = 0; k <= params.wide.k_order(); ++k)
    add_scaled(params.wide.taps[k], g.wide[k], -gamma);
  return loss;
}

// Output where node i's wide branch uses its own taps; the frozen deep branch
// is shared. `stacks` holds the shifted signals S^k X (or delayed products).
inline Matrix distributed_output(const NodeParams& locals, const FilterCache& stacks,
                                 const Matrix& deep_out, const WdGnnParams& frozen) {
  int n = deep_out.rows;
  int g_out = frozen.wide.f_out();
  Matrix wide(n, g_out);
  for (int i = 0; i < n; ++i) {
    const FilterTaps& taps = locals.taps[i];
    for (size_t k = 0; k < taps.taps.size(); ++k) {
      const Matrix& z = stacks.shifted[k];
      const Matrix& a = taps.taps[k];
      for (int f = 0; f < z.cols; ++f) {
        double zv = z(i, f);
        if (zv == 0.0) continue;
        for (int g = 0; g < g_out; ++g) wide(i, g) += zv * a(f, g);
      }
    }
  }
  Matrix psi = frozen.alpha_w * wide;
  add_scaled(psi, deep_out, frozen.alpha_d);
  add_constant(psi, frozen.beta);
  return apply_readout(frozen.readout, psi);
}

inline std::pair<Matrix, FilterCache> distributed_forward(const NodeParams& locals, const Gso& s_t,
                                                          const GraphSignal& x_t,
                                                          const WdGnnParams& frozen) {
  if (locals.n() != s_t.n()) throw std::invalid_argument("distributed_forward: node count mismatch");
  int k_order = frozen.wide.k_order();
  FilterCache stacks;
  stacks.shifted.reserve(k_order + 1);
  stacks.shifted.push_back(x_t);
  for (int k = 1; k <= k_order; ++k) stacks.shifted.push_back(graph_shift(s_t, stacks.shifted.back()));
  auto [deep, deep_cache] = gnn_forward(s_t, x_t, frozen.deep);
  (void)deep_cache;
  return {distributed_output(locals, stacks, deep, frozen), std::move(stacks)};
}

namespace detail {
inline void check_weight_support(const ConsensusWeights& w_t, const Gso& s_t) {
  int n = s_t.n();
  if (w_t.n() != n) throw std::invalid_argument("distributed_online_step: weight size mismatch");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && w_t.entries(i, j) != 0.0 && s_t.entries(i, j) == 0.0)
        throw std::invalid_argument("distributed_online_step: weight support violates graph");
}

inline std::vector<FilterTaps> mix_locals(const NodeParams& locals, const ConsensusWeights& w_t,
                                          int k_order, int f_in, int g_out) {
  int n = locals.n();
  std::vector<FilterTaps> mixed(n);
  for (int i = 0; i < n; ++i) {
    FilterTaps agg;
    for (int k = 0; k <= k_order; ++k) agg.taps.emplace_back(f_in, g_out);
    for (int j = 0; j < n; ++j) {
      double wij = w_t.entries(i, j);
      if (wij == 0.0) continue;
      for (int k = 0; k <= k_order; ++k) add_scaled(agg.taps[k], locals.taps[j].taps[k], wij);
    }
    mixed[i] = std::move(agg);
  }
  return mixed;
}
}  // namespace detail

// Consensus mixing plus a local gradient step (one synchronous round).
// `local_upstream` row i is the gradient of node i's local loss with respect
// to node i's own output row; rows of nodes without a local loss are zero.
inline void distributed_online_step(NodeParams& locals, const ConsensusWeights& w_t, const Gso& s_t,
                                    const FilterCache& stacks, const WdGnnParams& frozen,
                                    const Matrix& local_upstream, double gamma) {
  if (!all_finite(local_upstream))
    throw std::runtime_error("distributed_online_step: non-finite gradient");
  detail::check_weight_support(w_t, s_t);
  int n = locals.n();
  int k_order = frozen.wide.k_order();
  int f_in = frozen.wide.f_in();
  int g_out = frozen.wide.f_out();

  std::vector<FilterTaps> next = detail::mix_locals(locals, w_t, k_order, f_in, g_out);
  for (int i = 0; i < n; ++i) {
    Matrix up_psi(1, g_out);
    for (int g = 0; g < g_out; ++g) {
      double s = 0.0;
      for (int c = 0; c < frozen.readout.w.cols; ++c)
        s += local_upstream(i, c) * frozen.readout.w(g, c);
      up_psi(0, g) = s * frozen.alpha_w;
    }
    for (int k = 0; k <= k_order; ++k) {
      const Matrix& z = stacks.shifted[k];
      for (int f = 0; f < f_in; ++f) {
        double zv = z(i, f);
        if (zv == 0.0) continue;
        for (int g = 0; g < g_out; ++g) next[i].taps[k](f, g) -= gamma * zv * up_psi(0, g);
      }
    }
  }
  locals.taps = std::move(next);
}

// General variant: node i's local loss may read the whole output (computed,
// per the update model, with node i's own taps); per_node_upstream[i] is the
// full N x G_out gradient of that local loss.
inline void distributed_online_step_general(NodeParams& locals, const ConsensusWeights& w_t,
                                            const Gso& s_t, const FilterCache& stacks,
                                            const WdGnnParams& frozen,
                                            const std::vector<Matrix>& per_node_upstream,
                                            double gamma) {
  detail::check_weight_support(w_t, s_t);
  int n = locals.n();
  int k_order = frozen.wide.k_order();
  int f_in = frozen.wide.f_in();
  int g_out = frozen.wide.f_out();

  std::vector<FilterTaps> next = detail::mix_locals(locals, w_t, k_order, f_in, g_out);
  for (int i = 0; i < n; ++i) {
    if (!all_finite(per_node_upstream[i]))
      throw std::runtime_error("distributed_online_step_general: non-finite gradient");
    Matrix up_psi = matmul_a_bt(per_node_upstream[i], frozen.readout.w);
    for (double& v : up_psi.a) v *= frozen.alpha_w;
    for (int k = 0; k <= k_order; ++k) {
      Matrix g = matmul_at_b(stacks.shifted[k], up_psi);
      add_scaled(next[i].taps[k], g, -gamma);
    }
  }
  locals.taps = std::move(next);
}

enum class OnlineMode { centralized, distributed };

struct OnlineStep {
  Gso s;
  GraphSignal x;
  int label = -1;  // classification feedback
  Matrix target;   // regression feedback
  Matrix mask;     // optional regression mask
};

struct TaskSpec {
  int num_classes = 0;         // 0 = regression
  std::vector<int> detectors;  // classification nodes carrying local losses

  bool classification() const { return num_classes > 0; }
};

struct OnlineOptions {
  double epsilon_floor = 1e-3;  // floor passed to the Metropolis rule
  // optional per-step optimum of the wide taps, for tracking-error traces
  std::function<std::optional<FilterTaps>(int t, const OnlineStep&)> optimum = nullptr;
  // initial per-node taps; defaults to replicating the trained wide part
  std::optional<NodeParams> initial_locals;
};

struct OnlineResult {
  WdGnnParams params;                // final parameters (centralized: updated wide)
  std::optional<NodeParams> locals;  // distributed only
  OnlineTrace trace;
};

// Online phase: observe (X_t, S_t, feedback), compute the instantaneous
// loss, update the wide taps per mode. Deep part, combination scalars and
// readout stay at their offline values throughout.
inline OnlineResult run_online(OnlineMode mode, const std::vector<OnlineStep>& stream,
                               const WdGnnParams& trained, const TaskSpec& task, double gamma,
                               const OnlineOptions& opts = {}) {
  if (stream.empty()) throw std::invalid_argument("run_online: empty stream");
  if (mode == OnlineMode::distributed && !task.classification()) {
    for (const OnlineStep& st : stream)
      if (!st.mask.empty())
        throw std::invalid_argument("run_online: distributed mode incompatible with masked regression");
  }

  OnlineResult result;
  result.params = trained;
  NodeParams locals;
  if (mode == OnlineMode::distributed)
    locals = opts.initial_locals ? *opts.initial_locals : replicate_wide(trained.wide, stream[0].s.n());

  Dataset proto;  // reuse the task-loss plumbing from training
  proto.num_classes = task.num_classes;
  proto.detectors = task.detectors;

  int t = 0;
  for (const OnlineStep& st : stream) {
    TraceRow row;
    row.t = t;
    row.gamma = gamma;

    Sample smp;
    smp.x = st.x;
    smp.label = st.label;
    smp.target = st.target;
    smp.mask = st.mask;

    if (mode == OnlineMode::centralized) {
      auto [out, cache] = wdgnn_forward(st.s, st.x, result.params);
      auto [loss, upstream] = sample_loss(proto, smp, out);
      row.loss = loss;
      row.metric = task.classification() ? argmax_accuracy(out, task.detectors, st.label) : loss;
      WdGnnGrads g = wdgnn_backward(cache, st.s, result.params, upstream);
      for (const Matrix& gw : g.wide)
        if (!all_finite(gw))
          throw std::runtime_error("run_online: non-finite gradient at step " + std::to_string(t));
      for (int k = 0; k <= result.params.wide.k_order(); ++k)
        add_scaled(result.params.wide.taps[k], g.wide[k], -gamma);
      if (opts.optimum) {
        auto star = opts.optimum(t, st);
        if (star) row.dist_to_opt = taps_distance(result.params.wide, *star);
      }
    } else {
      auto [out, stacks] = distributed_forward(locals, st.s, st.x, result.params);
      auto [loss, upstream] = sample_loss(proto, smp, out);
      row.loss = loss;
      row.metric = task.classification() ? argmax_accuracy(out, task.detectors, st.label) : loss;
      // Node i keeps only the gradient of its own local loss. Detector rows
      // of the cross-entropy upstream already hold exactly that; for plain
      // regression the local loss is the node's own mean squared residual,
      // which differs from the global upstream by the node count.
      Matrix local_up = upstream;
      if (!task.classification()) {
        for (double& v : local_up.a) v *= static_cast<double>(out.rows);
      }
      ConsensusWeights w = metropolis_weights(st.s, opts.epsilon_floor);
      distributed_online_step(locals, w, st.s, stacks, result.params, local_up, gamma);
      row.disagreement = consensus_disagreement(locals);
      if (opts.optimum) {
        auto star = opts.optimum(t, st);
        if (star) {
          double worst = 0.0;
          for (const FilterTaps& node : locals.taps)
            worst = std::max(worst, taps_distance(node, *star));
          row.dist_to_opt = worst;
        }
      }
    }
    result.trace.push_back(std::move(row));
    ++t;
  }
  if (mode == OnlineMode::distributed) result.locals = std::move(locals);
  return result;
}

}  // namespace wdgnn
