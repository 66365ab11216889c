#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wdgnn/graph.hpp"
#include "wdgnn/matrix.hpp"
#include "wdgnn/rng.hpp"

namespace wdgnn {

enum class Nonlinearity { relu, tanh, identity };

inline Nonlinearity nonlinearity_from_string(const std::string& s) {
  if (s == "relu") return Nonlinearity::relu;
  if (s == "tanh") return Nonlinearity::tanh;
  if (s == "identity") return Nonlinearity::identity;
  throw std::invalid_argument("unknown nonlinearity: " + s);
}

inline std::string to_string(Nonlinearity k) {
  switch (k) {
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::identity: return "identity";
  }
  throw std::invalid_argument("unknown nonlinearity kind");
}

inline Matrix nonlinearity_apply(Nonlinearity kind, const Matrix& x) {
  Matrix y = x;
  switch (kind) {
    case Nonlinearity::relu:
      for (double& v : y.a) v = v > 0.0 ? v : 0.0;
      break;
    case Nonlinearity::tanh:
      for (double& v : y.a) v = std::tanh(v);
      break;
    case Nonlinearity::identity:
      break;
  }
  return y;
}

// Entrywise derivative evaluated at the pre-activation; relu' at 0 is 0.
inline Matrix nonlinearity_derivative(Nonlinearity kind, const Matrix& x) {
  Matrix y = x;
  switch (kind) {
    case Nonlinearity::relu:
      for (double& v : y.a) v = v > 0.0 ? 1.0 : 0.0;
      break;
    case Nonlinearity::tanh:
      for (double& v : y.a) {
        double t = std::tanh(v);
        v = 1.0 - t * t;
      }
      break;
    case Nonlinearity::identity:
      for (double& v : y.a) v = 1.0;
      break;
  }
  return y;
}

// K+1 tap matrices of a polynomial graph filter, each f_in x f_out.
struct FilterTaps {
  std::vector<Matrix> taps;

  int k_order() const { return static_cast<int>(taps.size()) - 1; }
  int f_in() const { return taps.empty() ? 0 : taps[0].rows; }
  int f_out() const { return taps.empty() ? 0 : taps[0].cols; }
};

inline double taps_distance(const FilterTaps& a, const FilterTaps& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.taps.size(); ++k) {
    Matrix d = a.taps[k] - b.taps[k];
    s += dot(d, d);
  }
  return std::sqrt(s);
}

inline double taps_norm(const FilterTaps& a) {
  double s = 0.0;
  for (const Matrix& t : a.taps) s += dot(t, t);
  return std::sqrt(s);
}

struct GnnLayer {
  FilterTaps taps;
  Nonlinearity sigma = Nonlinearity::relu;
};

struct GnnParams {
  std::vector<GnnLayer> layers;

  int depth() const { return static_cast<int>(layers.size()); }
};

// Shared per-node affine readout: out = psi * w + b at every node.
struct Readout {
  Matrix w;  // G x G_out
  Matrix b;  // 1 x G_out

  static Readout identity(int g) { return Readout{Matrix::identity(g), Matrix(1, g)}; }
};

struct WdGnnParams {
  FilterTaps wide;
  GnnParams deep;
  double alpha_w = 1.0;
  double alpha_d = 1.0;
  double beta = 0.0;
  Readout readout;

  int output_features() const { return wide.f_out(); }
};

struct FilterCache {
  std::vector<Matrix> shifted;  // stack k holds S^k X (or the delayed product chain)
};

struct LayerCache {
  FilterCache filt;
  Matrix pre;
  Matrix act;
};

struct ForwardCache {
  GraphSignal input;
  FilterCache wide;
  std::vector<LayerCache> deep;
  Matrix wide_out;
  Matrix deep_out;
  Matrix psi;  // alpha_w*wide + alpha_d*deep + beta, pre-readout
  Matrix out;
};

// Y = sum_k S^k X A_k via iterated one-hop shifts; no explicit matrix powers.
inline std::pair<GraphSignal, FilterCache> filter_forward(const Gso& s, const GraphSignal& x,
                                                          const FilterTaps& taps) {
  if (s.n() != x.rows) throw std::invalid_argument("filter_forward: graph/signal size mismatch");
  if (x.cols != taps.f_in()) throw std::invalid_argument("filter_forward: feature count mismatch");
  FilterCache cache;
  cache.shifted.reserve(taps.taps.size());
  cache.shifted.push_back(x);
  Matrix y = matmul(x, taps.taps[0]);
  for (int k = 1; k <= taps.k_order(); ++k) {
    cache.shifted.push_back(graph_shift(s, cache.shifted.back()));
    y = y + matmul(cache.shifted.back(), taps.taps[k]);
  }
  return {std::move(y), std::move(cache)};
}

// Re-apply taps to an existing stack of shifted signals.
inline GraphSignal filter_apply(const FilterCache& cache, const FilterTaps& taps) {
  Matrix y = matmul(cache.shifted[0], taps.taps[0]);
  for (int k = 1; k <= taps.k_order(); ++k) y = y + matmul(cache.shifted[k], taps.taps[k]);
  return y;
}

// Delayed stacks for time-varying data: stack k is S_t S_{t-1}...S_{t-(k-1)} X_{t-k},
// built from `history` ordered newest-first.
inline FilterCache delayed_filter_stacks(const std::vector<std::pair<Gso, GraphSignal>>& history,
                                         int k_order) {
  if (static_cast<int>(history.size()) < k_order + 1)
    throw std::invalid_argument("delayed_filter_stacks: insufficient history");
  FilterCache cache;
  cache.shifted.reserve(k_order + 1);
  cache.shifted.push_back(history[0].second);
  for (int k = 1; k <= k_order; ++k) {
    Matrix z = history[k].second;
    for (int tau = k - 1; tau >= 0; --tau) z = graph_shift(history[tau].first, z);
    cache.shifted.push_back(std::move(z));
  }
  return cache;
}

inline GraphSignal delayed_filter_forward(const std::vector<std::pair<Gso, GraphSignal>>& history,
                                          const FilterTaps& taps) {
  return filter_apply(delayed_filter_stacks(history, taps.k_order()), taps);
}

inline std::pair<GraphSignal, std::vector<LayerCache>> gnn_forward(const Gso& s, const GraphSignal& x,
                                                                   const GnnParams& params) {
  std::vector<LayerCache> caches;
  caches.reserve(params.layers.size());
  GraphSignal cur = x;
  for (const GnnLayer& layer : params.layers) {
    LayerCache lc;
    auto [pre, filt] = filter_forward(s, cur, layer.taps);
    lc.filt = std::move(filt);
    lc.pre = std::move(pre);
    lc.act = nonlinearity_apply(layer.sigma, lc.pre);
    cur = lc.act;
    caches.push_back(std::move(lc));
  }
  return {std::move(cur), std::move(caches)};
}

inline Matrix apply_readout(const Readout& r, const Matrix& psi) {
  Matrix out = matmul(psi, r.w);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) += r.b(0, j);
  return out;
}

inline std::pair<GraphSignal, ForwardCache> wdgnn_forward(const Gso& s, const GraphSignal& x,
                                                          const WdGnnParams& params) {
  ForwardCache cache;
  cache.input = x;
  auto [wide_out, wide_cache] = filter_forward(s, x, params.wide);
  cache.wide = std::move(wide_cache);
  cache.wide_out = std::move(wide_out);

  auto [deep_out, deep_caches] = gnn_forward(s, x, params.deep);
  cache.deep = std::move(deep_caches);
  cache.deep_out = std::move(deep_out);

  if (!cache.wide_out.same_shape(cache.deep_out))
    throw std::invalid_argument("wdgnn_forward: wide/deep output feature mismatch");

  cache.psi = params.alpha_w * cache.wide_out;
  add_scaled(cache.psi, cache.deep_out, params.alpha_d);
  add_constant(cache.psi, params.beta);
  cache.out = apply_readout(params.readout, cache.psi);
  return {cache.out, std::move(cache)};
}

struct WdGnnGrads {
  std::vector<Matrix> wide;               // per wide tap
  std::vector<std::vector<Matrix>> deep;  // per layer, per tap
  double alpha_w = 0.0;
  double alpha_d = 0.0;
  double beta = 0.0;
  Matrix readout_w;
  Matrix readout_b;
};

inline WdGnnGrads zero_grads(const WdGnnParams& p) {
  WdGnnGrads g;
  for (const Matrix& t : p.wide.taps) g.wide.emplace_back(t.rows, t.cols);
  for (const GnnLayer& l : p.deep.layers) {
    std::vector<Matrix> lg;
    for (const Matrix& t : l.taps.taps) lg.emplace_back(t.rows, t.cols);
    g.deep.push_back(std::move(lg));
  }
  g.readout_w = Matrix(p.readout.w.rows, p.readout.w.cols);
  g.readout_b = Matrix(1, p.readout.b.cols);
  return g;
}

inline void grads_add(WdGnnGrads& acc, const WdGnnGrads& g) {
  for (size_t k = 0; k < acc.wide.size(); ++k) add_scaled(acc.wide[k], g.wide[k], 1.0);
  for (size_t l = 0; l < acc.deep.size(); ++l)
    for (size_t k = 0; k < acc.deep[l].size(); ++k) add_scaled(acc.deep[l][k], g.deep[l][k], 1.0);
  acc.alpha_w += g.alpha_w;
  acc.alpha_d += g.alpha_d;
  acc.beta += g.beta;
  add_scaled(acc.readout_w, g.readout_w, 1.0);
  add_scaled(acc.readout_b, g.readout_b, 1.0);
}

inline void grads_scale(WdGnnGrads& g, double s) {
  for (Matrix& m : g.wide)
    for (double& v : m.a) v *= s;
  for (auto& layer : g.deep)
    for (Matrix& m : layer)
      for (double& v : m.a) v *= s;
  g.alpha_w *= s;
  g.alpha_d *= s;
  g.beta *= s;
  for (double& v : g.readout_w.a) v *= s;
  for (double& v : g.readout_b.a) v *= s;
}

// Exact reverse-mode gradients of every parameter group, given the gradient
// of the loss with respect to the readout output.
inline WdGnnGrads wdgnn_backward(const ForwardCache& cache, const Gso& s, const WdGnnParams& params,
                                 const Matrix& upstream) {
  if (!upstream.same_shape(cache.out))
    throw std::invalid_argument("wdgnn_backward: upstream shape mismatch with cached output");
  WdGnnGrads g = zero_grads(params);

  // readout
  g.readout_w = matmul_at_b(cache.psi, upstream);
  for (int j = 0; j < upstream.cols; ++j) {
    double col = 0.0;
    for (int i = 0; i < upstream.rows; ++i) col += upstream(i, j);
    g.readout_b(0, j) = col;
  }
  Matrix up_psi = matmul_a_bt(upstream, params.readout.w);

  // combination scalars
  g.alpha_w = dot(up_psi, cache.wide_out);
  g.alpha_d = dot(up_psi, cache.deep_out);
  g.beta = sum(up_psi);

  // wide taps: dL/dA_k = (S^k X)ᵀ (alpha_w * up_psi)
  for (int k = 0; k <= params.wide.k_order(); ++k) {
    g.wide[k] = matmul_at_b(cache.wide.shifted[k], up_psi);
    for (double& v : g.wide[k].a) v *= params.alpha_w;
  }

  // deep branch: walk layers backwards, sigma' applied entrywise
  Matrix delta = params.alpha_d * up_psi;
  for (int l = params.deep.depth() - 1; l >= 0; --l) {
    const GnnLayer& layer = params.deep.layers[l];
    const LayerCache& lc = cache.deep[l];
    delta = hadamard(delta, nonlinearity_derivative(layer.sigma, lc.pre));
    for (int k = 0; k <= layer.taps.k_order(); ++k)
      g.deep[l][k] = matmul_at_b(lc.filt.shifted[k], delta);
    if (l > 0) {
      // propagate: sum_k (Sᵀ)^k delta B_kᵀ, Horner over the shift
      int kk = layer.taps.k_order();
      Matrix acc = matmul_a_bt(delta, layer.taps.taps[kk]);
      for (int k = kk - 1; k >= 0; --k) {
        acc = graph_shift_transpose(s, acc);
        acc = acc + matmul_a_bt(delta, layer.taps.taps[k]);
      }
      delta = std::move(acc);
    }
  }
  return g;
}

// Entry (f,g) of the filter frequency response: sum_k [A_k]_fg lambda^k.
inline Matrix frequency_response(const FilterTaps& taps, double lambda) {
  Matrix r(taps.f_in(), taps.f_out());
  double p = 1.0;
  for (int k = 0; k <= taps.k_order(); ++k) {
    add_scaled(r, taps.taps[k], p);
    p *= lambda;
  }
  return r;
}

// max over (f,g) and grid points of |lambda * d/dlambda a_fg(lambda)|
inline double integral_lipschitz_estimate(const FilterTaps& taps, double lambda_lo, double lambda_hi,
                                          int grid) {
  if (grid < 2) throw std::invalid_argument("integral_lipschitz_estimate: grid must be >= 2");
  if (lambda_lo > lambda_hi) throw std::invalid_argument("integral_lipschitz_estimate: bad interval");
  double best = 0.0;
  for (int g = 0; g < grid; ++g) {
    double lambda = lambda_lo + (lambda_hi - lambda_lo) * g / (grid - 1);
    Matrix deriv(taps.f_in(), taps.f_out());
    double p = 1.0;  // lambda^{k-1}
    for (int k = 1; k <= taps.k_order(); ++k) {
      add_scaled(deriv, taps.taps[k], k * p);
      p *= lambda;
    }
    best = std::max(best, std::fabs(lambda) * max_abs(deriv));
  }
  return best;
}

// max |a_fg(lambda)| over a grid; reported for the per-layer response maxima
inline double response_max(const FilterTaps& taps, double lambda_lo, double lambda_hi, int grid) {
  double best = 0.0;
  for (int g = 0; g < grid; ++g) {
    double lambda = lambda_lo + (lambda_hi - lambda_lo) * g / (grid - 1);
    best = std::max(best, max_abs(frequency_response(taps, lambda)));
  }
  return best;
}

// integral-Lipschitz constant across the wide filter and every deep layer
inline double il_constant(const WdGnnParams& params, double lambda_lo, double lambda_hi,
                          int grid = 1001) {
  double c = integral_lipschitz_estimate(params.wide, lambda_lo, lambda_hi, grid);
  for (const GnnLayer& l : params.deep.layers)
    c = std::max(c, integral_lipschitz_estimate(l.taps, lambda_lo, lambda_hi, grid));
  return c;
}

// taps i.i.d. uniform on +-1/sqrt(f_in*(K+1))
inline FilterTaps make_filter_taps(int k_order, int f_in, int f_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(f_in) * (k_order + 1));
  FilterTaps t;
  for (int k = 0; k <= k_order; ++k) {
    Matrix m(f_in, f_out);
    for (double& v : m.a) v = rng.uniform(-bound, bound);
    t.taps.push_back(std::move(m));
  }
  return t;
}

struct ArchSpec {
  int f_in = 1;
  int g_out = 32;          // wide and deep branch output features
  int k_order = 5;
  int deep_layers = 1;     // L
  int deep_features = 32;  // F_l for hidden layers
  Nonlinearity sigma = Nonlinearity::relu;
  int readout_out = 1;     // readout target dimension
};

inline WdGnnParams make_wdgnn(const ArchSpec& spec, Rng& rng) {
  WdGnnParams p;
  p.wide = make_filter_taps(spec.k_order, spec.f_in, spec.g_out, rng);
  int fin = spec.f_in;
  for (int l = 0; l < spec.deep_layers; ++l) {
    int fout = (l == spec.deep_layers - 1) ? spec.g_out : spec.deep_features;
    p.deep.layers.push_back({make_filter_taps(spec.k_order, fin, fout, rng), spec.sigma});
    fin = fout;
  }
  p.alpha_w = 1.0;
  p.alpha_d = 1.0;
  p.beta = 0.0;
  double rb = 1.0 / std::sqrt(static_cast<double>(spec.g_out));
  p.readout.w = Matrix(spec.g_out, spec.readout_out);
  for (double& v : p.readout.w.a) v = rng.uniform(-rb, rb);
  p.readout.b = Matrix(1, spec.readout_out);
  return p;
}

namespace detail {
inline void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows << " " << m.cols << "\n";
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << "\n";
  }
}

inline Matrix read_matrix(std::istream& in) {
  int r, c;
  if (!(in >> r >> c)) throw std::runtime_error("checkpoint: truncated matrix header");
  Matrix m(r, c);
  for (double& v : m.a)
    if (!(in >> v)) throw std::runtime_error("checkpoint: truncated matrix body");
  return m;
}
}  // namespace detail

// Self-describing text checkpoint; decimal precision round-trips bit-exactly.
inline void save_checkpoint(const WdGnnParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << "wdgnn-checkpoint 1\n";
  out << "wide " << p.wide.k_order() << "\n";
  for (const Matrix& t : p.wide.taps) detail::write_matrix(out, t);
  out << "deep " << p.deep.depth() << "\n";
  for (const GnnLayer& l : p.deep.layers) {
    out << "layer " << l.taps.k_order() << " " << to_string(l.sigma) << "\n";
    for (const Matrix& t : l.taps.taps) detail::write_matrix(out, t);
  }
  out << "alpha_w " << format_double(p.alpha_w) << "\n";
  out << "alpha_d " << format_double(p.alpha_d) << "\n";
  out << "beta " << format_double(p.beta) << "\n";
  out << "readout\n";
  detail::write_matrix(out, p.readout.w);
  detail::write_matrix(out, p.readout.b);
}

inline WdGnnParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string tag;
  int version;
  in >> tag >> version;
  if (tag != "wdgnn-checkpoint" || version != 1)
    throw std::runtime_error("load_checkpoint: unrecognized format");
  WdGnnParams p;
  int k_order, depth;
  in >> tag >> k_order;
  if (tag != "wide") throw std::runtime_error("load_checkpoint: expected wide section");
  for (int k = 0; k <= k_order; ++k) p.wide.taps.push_back(detail::read_matrix(in));
  in >> tag >> depth;
  if (tag != "deep") throw std::runtime_error("load_checkpoint: expected deep section");
  for (int l = 0; l < depth; ++l) {
    std::string sigma;
    in >> tag >> k_order >> sigma;
    if (tag != "layer") throw std::runtime_error("load_checkpoint: expected layer section");
    GnnLayer layer;
    layer.sigma = nonlinearity_from_string(sigma);
    for (int k = 0; k <= k_order; ++k) layer.taps.taps.push_back(detail::read_matrix(in));
    p.deep.layers.push_back(std::move(layer));
  }
  in >> tag >> p.alpha_w;
  in >> tag >> p.alpha_d;
  in >> tag >> p.beta;
  in >> tag;
  if (tag != "readout") throw std::runtime_error("load_checkpoint: expected readout section");
  p.readout.w = detail::read_matrix(in);
  p.readout.b = detail::read_matrix(in);
  return p;
}

}  // namespace wdgnn
