#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wdgnn/eigen.hpp"
#include "wdgnn/matrix.hpp"
#include "wdgnn/rng.hpp"

namespace wdgnn {

// Graph shift operator: a square matrix whose off-diagonal sparsity pattern
// is the edge set. An edge (j,i) exists iff entries(i,j) != 0 for i != j.
struct Gso {
  Matrix entries;
  bool symmetric = false;

  int n() const { return entries.rows; }
};

using GraphSignal = Matrix;  // N x F, row i = node i's feature vector

struct Permutation {
  // node i is relabeled to map[i]; as a 0/1 matrix P, P(i, map[i]) = 1
  std::vector<int> map;

  int n() const { return static_cast<int>(map.size()); }
};

struct ConsensusWeights {
  Matrix entries;
  double epsilon_floor = 0.0;

  int n() const { return entries.rows; }
};

// Symmetric E with S + ES + SE = S_hat (identity permutation) and its
// spectral norm, the measured perturbation size.
struct RelativeError {
  Matrix matrix;
  double operator_norm = 0.0;
};

inline bool is_connected(const Gso& g) {
  int n = g.n();
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v) {
      if (v == u || seen[v]) continue;
      if (g.entries(u, v) != 0.0 || g.entries(v, u) != 0.0) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n;
}

// Symmetric 0/1 SBM adjacency with communities as contiguous blocks of
// size n/communities. Redraws until connected, up to 100 attempts.
inline Gso sbm_generate(int n, int communities, double p_intra, double p_inter, uint64_t seed) {
  if (communities <= 0 || n <= 0 || n % communities != 0)
    throw std::invalid_argument("sbm_generate: communities must divide n");
  if (p_intra < 0 || p_intra > 1 || p_inter < 0 || p_inter > 1)
    throw std::invalid_argument("sbm_generate: probabilities must be in [0,1]");

  Rng rng(seed);
  int block = n / communities;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Gso g{Matrix(n, n), true};
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double p = (i / block == j / block) ? p_intra : p_inter;
        if (rng.bernoulli(p)) {
          g.entries(i, j) = 1.0;
          g.entries(j, i) = 1.0;
        }
      }
    }
    if (is_connected(g)) return g;
  }
  throw std::runtime_error("sbm_generate: no connected graph in 100 attempts");
}

inline int sbm_community(int node, int n, int communities) { return node / (n / communities); }

// S / |lambda|_max, so the output has spectral radius 1.
inline Gso normalize_adjacency(const Gso& a) {
  if (!a.symmetric) throw std::invalid_argument("normalize_adjacency: requires symmetric input");
  double radius = spectral_radius_symmetric(a.entries);
  if (radius < 1e-300) throw std::invalid_argument("normalize_adjacency: zero matrix");
  Gso out = a;
  for (double& v : out.entries.a) v /= radius;
  return out;
}

inline GraphSignal graph_shift(const Gso& s, const GraphSignal& x) {
  if (s.n() != x.rows) throw std::invalid_argument("graph_shift: dimension mismatch");
  return matmul(s.entries, x);
}

// Sᵀ X (used by reverse-mode gradients; equals graph_shift when symmetric)
inline GraphSignal graph_shift_transpose(const Gso& s, const GraphSignal& x) {
  if (s.n() != x.rows) throw std::invalid_argument("graph_shift_transpose: dimension mismatch");
  if (s.symmetric) return matmul(s.entries, x);
  return matmul_at_b(s.entries, x);
}

// Each undirected edge independently removed with probability p.
inline Gso drop_edges(const Gso& s, double p, uint64_t seed) {
  if (!s.symmetric) throw std::invalid_argument("drop_edges: requires symmetric input");
  if (p < 0 || p > 1) throw std::invalid_argument("drop_edges: p must be in [0,1]");
  Rng rng(seed);
  Gso out = s;
  int n = s.n();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (out.entries(i, j) != 0.0 && rng.bernoulli(p)) {
        out.entries(i, j) = 0.0;
        out.entries(j, i) = 0.0;
      }
    }
  }
  return out;
}

inline Permutation identity_permutation(int n) {
  Permutation p;
  p.map.resize(n);
  for (int i = 0; i < n; ++i) p.map[i] = i;
  return p;
}

inline Permutation random_permutation(int n, Rng& rng) {
  Permutation p = identity_permutation(n);
  rng.shuffle(p.map);
  return p;
}

inline void check_permutation(const Permutation& p, int n, const char* where) {
  if (p.n() != n) throw std::invalid_argument(std::string(where) + ": size mismatch");
  std::vector<char> seen(n, 0);
  for (int v : p.map) {
    if (v < 0 || v >= n || seen[v]) throw std::invalid_argument(std::string(where) + ": not a bijection");
    seen[v] = 1;
  }
}

// PᵀSP for the permutation matrix P with P(i, map[i]) = 1
inline Gso permute_graph(const Gso& s, const Permutation& perm) {
  check_permutation(perm, s.n(), "permute_graph");
  Gso out{Matrix(s.n(), s.n()), s.symmetric};
  for (int i = 0; i < s.n(); ++i)
    for (int j = 0; j < s.n(); ++j) out.entries(perm.map[i], perm.map[j]) = s.entries(i, j);
  return out;
}

// PᵀX
inline GraphSignal permute_signal(const GraphSignal& x, const Permutation& perm) {
  check_permutation(perm, x.rows, "permute_signal");
  GraphSignal out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int f = 0; f < x.cols; ++f) out(perm.map[i], f) = x(i, f);
  return out;
}

// Solve S_hat - S = ES + SE for symmetric E in the eigenbasis of S.
// With Delta = Vᵀ(S_hat - S)V, the solution is (VᵀEV)ij = Delta_ij/(li+lj).
// A resonant pair (li+lj ~ 0 with Delta_ij != 0) has no solution here and is
// a hard error rather than a pseudo-inverse fallback.
inline RelativeError relative_error_from_perturbation(const Gso& s, const Gso& s_hat) {
  if (!s.symmetric || !s_hat.symmetric)
    throw std::invalid_argument("relative_error_from_perturbation: requires symmetric inputs");
  if (s.n() != s_hat.n())
    throw std::invalid_argument("relative_error_from_perturbation: size mismatch");

  auto eig = symmetric_eigendecomposition(s.entries);
  const Matrix& v = eig.vectors;
  Matrix diff = s_hat.entries - s.entries;
  Matrix delta = matmul_at_b(v, matmul(diff, v));

  int n = s.n();
  double zero_tol = 1e-12 * std::max(1.0, frobenius_norm(diff));
  Matrix f(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double denom = eig.values[i] + eig.values[j];
      if (std::fabs(denom) < 1e-10) {
        if (std::fabs(delta(i, j)) > zero_tol)
          throw std::runtime_error("relative_error_from_perturbation: resonant eigenvalue pair");
        f(i, j) = 0.0;
      } else {
        f(i, j) = delta(i, j) / denom;
      }
    }
  }

  RelativeError out;
  out.matrix = matmul(matmul(v, f), transpose(v));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double m = 0.5 * (out.matrix(i, j) + out.matrix(j, i));
      out.matrix(i, j) = m;
      out.matrix(j, i) = m;
    }
  out.operator_norm = spectral_radius_symmetric(out.matrix);
  return out;
}

// Metropolis-Hastings weights: W_ij = 1/(1+max(di,dj)) on edges, diagonal
// absorbs the remainder. Doubly stochastic on any undirected graph.
inline ConsensusWeights metropolis_weights(const Gso& s, double epsilon_floor) {
  if (!s.symmetric) throw std::invalid_argument("metropolis_weights: requires symmetric input");
  int n = s.n();
  std::vector<int> deg(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && s.entries(i, j) != 0.0) ++deg[i];

  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j || s.entries(i, j) == 0.0) continue;
      w(i, j) = 1.0 / (1.0 + std::max(deg[i], deg[j]));
      off += w(i, j);
    }
    w(i, i) = 1.0 - off;
  }

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (w(i, j) != 0.0 && w(i, j) < epsilon_floor - 1e-15)
        throw std::runtime_error("metropolis_weights: entry below epsilon floor");
  return ConsensusWeights{std::move(w), epsilon_floor};
}

// True iff every length-`window` run of the sequence has a connected union
// graph (finite-horizon proxy for the joint-connectivity assumptions).
inline bool check_union_connectivity(const std::vector<Gso>& graphs, int window) {
  if (graphs.empty()) throw std::invalid_argument("check_union_connectivity: empty sequence");
  if (window < 1) throw std::invalid_argument("check_union_connectivity: window must be >= 1");
  int n = graphs[0].n();
  for (const Gso& g : graphs)
    if (g.n() != n) throw std::invalid_argument("check_union_connectivity: size mismatch");

  int len = static_cast<int>(graphs.size());
  int effective = std::min(window, len);
  for (int t = 0; t + effective <= len; ++t) {
    Gso u{Matrix(n, n), true};
    for (int k = t; k < t + effective; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j && graphs[k].entries(i, j) != 0.0) u.entries(i, j) = 1.0;
    if (!is_connected(u)) return false;
  }
  return true;
}

// Gershgorin disc bounds for the spectrum of a symmetric matrix.
inline std::pair<double, double> gershgorin_interval(const Gso& s) {
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < s.n(); ++i) {
    double radius = 0.0;
    for (int j = 0; j < s.n(); ++j)
      if (j != i) radius += std::fabs(s.entries(i, j));
    double d = s.entries(i, i);
    if (i == 0) {
      lo = d - radius;
      hi = d + radius;
    } else {
      lo = std::min(lo, d - radius);
      hi = std::max(hi, d + radius);
    }
  }
  return {lo, hi};
}

// Plain-text edge list: first line "N", then "i j w" per nonzero entry.
inline void save_edge_list(const Gso& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_edge_list: cannot open " + path);
  out << g.n() << "\n";
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.n(); ++j)
      if (g.entries(i, j) != 0.0)
        out << i << " " << j << " " << format_double(g.entries(i, j)) << "\n";
}

inline Gso load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_edge_list: cannot open " + path);
  int n = 0;
  if (!(in >> n) || n <= 0) throw std::runtime_error("load_edge_list: bad node count");
  Gso g{Matrix(n, n), false};
  int i, j;
  double w;
  while (in >> i >> j >> w) {
    if (i < 0 || i >= n || j < 0 || j >= n) throw std::runtime_error("load_edge_list: index out of range");
    g.entries(i, j) = w;
  }
  g.symmetric = is_symmetric(g.entries);
  return g;
}

}  // namespace wdgnn
