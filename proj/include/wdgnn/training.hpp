#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "wdgnn/architecture.hpp"
#include "wdgnn/graph.hpp"
#include "wdgnn/matrix.hpp"
#include "wdgnn/rng.hpp"

namespace wdgnn {

struct Sample {
  GraphSignal x;
  int label = -1;      // classification target (class index)
  Matrix target;       // regression target
  Matrix mask;         // optional per-entry weights for regression; empty = all ones
  int graph_index = 0; // index into Dataset::graphs
};

struct Dataset {
  std::vector<Gso> graphs;     // one shared graph or one per sample
  std::vector<Sample> samples;
  std::vector<int> detectors;  // classification readout nodes; empty = all nodes
  int num_classes = 0;         // 0 = regression

  bool classification() const { return num_classes > 0; }
  const Gso& graph_of(const Sample& s) const { return graphs[s.graph_index]; }
};

// Mean over detection nodes of -log softmax(logits)[label].
// Returns the loss and its gradient with respect to the logits.
inline std::pair<double, Matrix> cross_entropy_loss(const Matrix& logits,
                                                    const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw std::invalid_argument("cross_entropy_loss: one label per logit row required");
  int rows = logits.rows, classes = logits.cols;
  Matrix grad(rows, classes);
  double loss = 0.0;
  for (int i = 0; i < rows; ++i) {
    int label = labels[i];
    if (label < 0 || label >= classes) throw std::invalid_argument("cross_entropy_loss: label out of range");
    double mx = logits(i, 0);
    for (int c = 1; c < classes; ++c) mx = std::max(mx, logits(i, c));
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(logits(i, c) - mx);
    loss += -(logits(i, label) - mx - std::log(z));
    for (int c = 0; c < classes; ++c) grad(i, c) = std::exp(logits(i, c) - mx) / z / rows;
    grad(i, label) -= 1.0 / rows;
  }
  return {loss / rows, std::move(grad)};
}

// Mean of (optionally mask-weighted) squared differences.
inline std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target,
                                          const Matrix& mask = Matrix()) {
  check_shape(pred, target, "mse_loss");
  if (!mask.empty()) check_shape(pred, mask, "mse_loss(mask)");
  double count = mask.empty() ? static_cast<double>(pred.size()) : sum(mask);
  if (count <= 0.0) throw std::invalid_argument("mse_loss: empty effective mask");
  Matrix grad(pred.rows, pred.cols);
  double loss = 0.0;
  for (size_t i = 0; i < pred.a.size(); ++i) {
    double w = mask.empty() ? 1.0 : mask.a[i];
    double d = pred.a[i] - target.a[i];
    loss += w * d * d;
    grad.a[i] = 2.0 * w * d / count;
  }
  return {loss / count, std::move(grad)};
}

// Loss of one sample given the full model output; the returned upstream is
// shaped like the output (zero outside the rows the loss reads).
inline std::pair<double, Matrix> sample_loss(const Dataset& ds, const Sample& smp, const Matrix& out) {
  if (ds.classification()) {
    const std::vector<int>& det = ds.detectors;
    int rows = det.empty() ? out.rows : static_cast<int>(det.size());
    Matrix logits(rows, out.cols);
    for (int r = 0; r < rows; ++r) {
      int node = det.empty() ? r : det[r];
      for (int c = 0; c < out.cols; ++c) logits(r, c) = out(node, c);
    }
    auto [loss, lgrad] = cross_entropy_loss(logits, std::vector<int>(rows, smp.label));
    Matrix up(out.rows, out.cols);
    for (int r = 0; r < rows; ++r) {
      int node = det.empty() ? r : det[r];
      for (int c = 0; c < out.cols; ++c) up(node, c) = lgrad(r, c);
    }
    return {loss, std::move(up)};
  }
  return mse_loss(out, smp.target, smp.mask);
}

// Fraction of detection rows whose argmax matches the label.
inline double argmax_accuracy(const Matrix& out, const std::vector<int>& detectors, int label) {
  int rows = detectors.empty() ? out.rows : static_cast<int>(detectors.size());
  int hits = 0;
  for (int r = 0; r < rows; ++r) {
    int node = detectors.empty() ? r : detectors[r];
    int best = 0;
    for (int c = 1; c < out.cols; ++c)
      if (out(node, c) > out(node, best)) best = c;
    if (best == label) ++hits;
  }
  return static_cast<double>(hits) / rows;
}

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam(size_t n_params, double lr, double beta1 = 0.9, double beta2 = 0.999) {
  AdamState s;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  return s;
}

// Standard bias-corrected update; deterministic.
inline void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

namespace detail {
inline void flatten_into(const Matrix& m, std::vector<double>& out) {
  out.insert(out.end(), m.a.begin(), m.a.end());
}
inline void unflatten_from(const std::vector<double>& in, size_t& pos, Matrix& m) {
  std::copy(in.begin() + pos, in.begin() + pos + m.a.size(), m.a.begin());
  pos += m.a.size();
}
}  // namespace detail

inline std::vector<double> flatten_params(const WdGnnParams& p) {
  std::vector<double> out;
  for (const Matrix& t : p.wide.taps) detail::flatten_into(t, out);
  for (const GnnLayer& l : p.deep.layers)
    for (const Matrix& t : l.taps.taps) detail::flatten_into(t, out);
  out.push_back(p.alpha_w);
  out.push_back(p.alpha_d);
  out.push_back(p.beta);
  detail::flatten_into(p.readout.w, out);
  detail::flatten_into(p.readout.b, out);
  return out;
}

inline void unflatten_params(const std::vector<double>& flat, WdGnnParams& p) {
  size_t pos = 0;
  for (Matrix& t : p.wide.taps) detail::unflatten_from(flat, pos, t);
  for (GnnLayer& l : p.deep.layers)
    for (Matrix& t : l.taps.taps) detail::unflatten_from(flat, pos, t);
  p.alpha_w = flat[pos++];
  p.alpha_d = flat[pos++];
  p.beta = flat[pos++];
  detail::unflatten_from(flat, pos, p.readout.w);
  detail::unflatten_from(flat, pos, p.readout.b);
}

inline std::vector<double> flatten_grads(const WdGnnGrads& g) {
  std::vector<double> out;
  for (const Matrix& t : g.wide) detail::flatten_into(t, out);
  for (const auto& layer : g.deep)
    for (const Matrix& t : layer) detail::flatten_into(t, out);
  out.push_back(g.alpha_w);
  out.push_back(g.alpha_d);
  out.push_back(g.beta);
  detail::flatten_into(g.readout_w, out);
  detail::flatten_into(g.readout_b, out);
  return out;
}

// Mean gradient over a set of samples. Samples are split into fixed-size
// chunks; chunk sums are combined in chunk order, so the result does not
// depend on the number of worker threads.
inline std::pair<WdGnnGrads, double> batch_gradient(const Dataset& ds, const std::vector<int>& idx,
                                                    const WdGnnParams& params, int threads = 0) {
  constexpr int kChunk = 8;
  int n = static_cast<int>(idx.size());
  int n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<WdGnnGrads> chunk_grads(n_chunks);
  std::vector<double> chunk_loss(n_chunks, 0.0);

  auto run_chunk = [&](int c) {
    WdGnnGrads acc = zero_grads(params);
    double loss = 0.0;
    for (int i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      const Sample& smp = ds.samples[idx[i]];
      auto [out, cache] = wdgnn_forward(ds.graph_of(smp), smp.x, params);
      auto [l, up] = sample_loss(ds, smp, out);
      grads_add(acc, wdgnn_backward(cache, ds.graph_of(smp), params, up));
      loss += l;
    }
    chunk_grads[c] = std::move(acc);
    chunk_loss[c] = loss;
  };

  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n_chunks));
  if (workers == 1) {
    for (int c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int c = w; c < n_chunks; c += workers) run_chunk(c);
      });
    for (std::thread& t : pool) t.join();
  }

  WdGnnGrads total = std::move(chunk_grads[0]);
  double loss = chunk_loss[0];
  for (int c = 1; c < n_chunks; ++c) {
    grads_add(total, chunk_grads[c]);
    loss += chunk_loss[c];
  }
  grads_scale(total, 1.0 / n);
  return {std::move(total), loss / n};
}

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;  // accuracy for classification, rmse for regression
};

inline EvalResult evaluate(const Dataset& ds, const WdGnnParams& params, int threads = 0) {
  int n = static_cast<int>(ds.samples.size());
  if (n == 0) return {};
  constexpr int kChunk = 16;
  int n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> loss(n_chunks, 0.0), metric(n_chunks, 0.0);

  auto run_chunk = [&](int c) {
    for (int i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      const Sample& smp = ds.samples[i];
      auto [out, cache] = wdgnn_forward(ds.graph_of(smp), smp.x, params);
      auto [l, up] = sample_loss(ds, smp, out);
      (void)up;
      loss[c] += l;
      metric[c] += ds.classification() ? argmax_accuracy(out, ds.detectors, smp.label) : l;
    }
  };
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n_chunks));
  if (workers == 1) {
    for (int c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int c = w; c < n_chunks; c += workers) run_chunk(c);
      });
    for (std::thread& t : pool) t.join();
  }
  double total_loss = std::accumulate(loss.begin(), loss.end(), 0.0) / n;
  double total_metric = std::accumulate(metric.begin(), metric.end(), 0.0) / n;
  if (!ds.classification()) total_metric = std::sqrt(total_metric);
  return {total_loss, total_metric};
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 50;
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  uint64_t seed = 1;
  double validation_fraction = 0.2;  // used by callers that split one pool
  int threads = 0;                   // 0 = hardware concurrency
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  WdGnnParams params;  // best-validation checkpoint
  std::vector<EpochStats> history;
};

// Minibatch ADAM over all parameter groups jointly; best-validation model
// returned. Fully deterministic for a fixed (seed, config, data).
inline TrainResult train_offline(const Dataset& train, const Dataset& val, WdGnnParams params,
                                 const TrainConfig& cfg) {
  if (train.samples.empty()) throw std::invalid_argument("train_offline: empty dataset");
  if (cfg.epochs < 1) throw std::invalid_argument("train_offline: epochs must be >= 1");
  int batch = std::min<int>(cfg.batch_size, static_cast<int>(train.samples.size()));
  if (batch < 1) throw std::invalid_argument("train_offline: batch_size must be >= 1");

  Rng rng(Rng::derive(cfg.seed, 0xBA7C4));
  std::vector<int> order(train.samples.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> flat = flatten_params(params);
  AdamState adam = make_adam(flat.size(), cfg.learning_rate, cfg.beta1, cfg.beta2);

  TrainResult result;
  result.params = params;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      std::vector<int> idx(order.begin() + start,
                           order.begin() + std::min(order.size(), start + batch));
      auto [grads, loss] = batch_gradient(train, idx, params, cfg.threads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_offline: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(n_batches));
      std::vector<double> g = flatten_grads(grads);
      adam_step(adam, flat, g);
      unflatten_params(flat, params);
      epoch_loss += loss;
      ++n_batches;
    }
    EvalResult v = val.samples.empty() ? EvalResult{} : evaluate(val, params, cfg.threads);
    result.history.push_back({epoch, epoch_loss / std::max(1, n_batches), v.loss, v.metric});
    if (val.samples.empty() || v.loss <= best_val) {
      best_val = v.loss;
      result.params = params;
    }
  }
  return result;
}

inline void write_loss_history(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_loss_history: cannot open " + path);
  out << "epoch,train_loss,val_loss,val_metric\n";
  for (const EpochStats& e : history)
    out << e.epoch << "," << format_double(e.train_loss) << "," << format_double(e.val_loss) << ","
        << format_double(e.val_metric) << "\n";
}

}  // namespace wdgnn
