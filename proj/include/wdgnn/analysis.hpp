#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wdgnn/architecture.hpp"
#include "wdgnn/eigen.hpp"
#include "wdgnn/graph.hpp"
#include "wdgnn/online.hpp"

namespace wdgnn {

// |alpha_D| L prod_{l=1}^{L-1} F_l + |alpha_W|  (empty product = 1 for L = 1)
inline double stability_constant(const WdGnnParams& params) {
  int depth = params.deep.depth();
  if (depth < 1) throw std::invalid_argument("stability_constant: deep part needs >= 1 layer");
  double prod = 1.0;
  for (int l = 0; l + 1 < depth; ++l) prod *= params.deep.layers[l].taps.f_out();
  return std::fabs(params.alpha_d) * depth * prod + std::fabs(params.alpha_w);
}

// first-order output-difference bound 2 C_L C_Psi (1 + 8 sqrt(N)) ||X|| eps
inline double stability_bound(double c_l, double c_psi, int n, double x_norm, double eps) {
  if (c_l < 0 || c_psi < 0 || n < 0 || x_norm < 0 || eps < 0)
    throw std::invalid_argument("stability_bound: inputs must be nonnegative");
  return 2.0 * c_l * c_psi * (1.0 + 8.0 * std::sqrt(static_cast<double>(n))) * x_norm * eps;
}

// wide-only specialization of the bound above
inline double filter_stability_bound(double c_l, int n, double x_norm, double eps) {
  return stability_bound(c_l, 1.0, n, x_norm, eps);
}

// max{|1 - gamma c_s|, |1 - gamma c_c|}, valid for gamma in (0, 2/c_s)
inline double convergence_rate(double gamma, double c_s, double c_c) {
  if (!(c_s >= c_c && c_c > 0)) throw std::invalid_argument("convergence_rate: need c_s >= c_c > 0");
  if (!(gamma > 0 && gamma < 2.0 / c_s))
    throw std::invalid_argument("convergence_rate: gamma outside (0, 2/c_s)");
  return std::max(std::fabs(1.0 - gamma * c_s), std::fabs(1.0 - gamma * c_c));
}

// bound_{t+1} = (prod_{tau<=t} m_tau) err0 + (1 - mhat^{t+1})/(1 - mhat) c_b,
// with mhat the running max of the rates. Returns one value per step.
inline std::vector<double> centralized_tracking_bound(double initial_err,
                                                      const std::vector<double>& rates, double c_b) {
  std::vector<double> bound;
  bound.reserve(rates.size());
  double prod = 1.0;
  double mhat = 0.0;
  for (size_t t = 0; t < rates.size(); ++t) {
    if (!(rates[t] >= 0.0 && rates[t] < 1.0))
      throw std::invalid_argument("centralized_tracking_bound: rates must lie in [0,1)");
    prod *= rates[t];
    mhat = std::max(mhat, rates[t]);
    double series = (mhat > 0.0) ? (1.0 - std::pow(mhat, static_cast<double>(t + 1))) / (1.0 - mhat)
                                 : 1.0;
    bound.push_back(prod * initial_err + series * c_b);
  }
  return bound;
}

// C_eps = 1 + N/(1-(1-eps^Cd)^(1/Cd)) * (1+eps^-Cd)/(1-eps^Cd), Cd = c_d(N-1).
// Returns +inf (with a warning) when the denominators collapse numerically.
inline double c_epsilon_constant(int n, double epsilon_floor, int c_d) {
  if (!(epsilon_floor > 0.0 && epsilon_floor < 1.0))
    throw std::invalid_argument("c_epsilon_constant: epsilon_floor must be in (0,1)");
  if (c_d < 1) throw std::invalid_argument("c_epsilon_constant: c_d must be >= 1");
  if (n < 2) throw std::invalid_argument("c_epsilon_constant: n must be >= 2");
  double cd_hat = static_cast<double>(c_d) * (n - 1);
  double e = std::pow(epsilon_floor, cd_hat);
  double denom1 = 1.0 - std::pow(1.0 - e, 1.0 / cd_hat);
  double denom2 = 1.0 - e;
  if (denom1 <= 0.0 || denom2 <= 0.0) {
    std::fprintf(stderr, "c_epsilon_constant: degenerate denominators, returning +inf\n");
    return std::numeric_limits<double>::infinity();
  }
  double c = 1.0 + n / denom1 * (1.0 + std::pow(epsilon_floor, -cd_hat)) / denom2;
  if (!std::isfinite(c)) {
    std::fprintf(stderr, "c_epsilon_constant: formula overflowed, returning +inf\n");
    return std::numeric_limits<double>::infinity();
  }
  return c;
}

// bound_{t+1} = (prod m_tau) err0 + 2 gamma C_eps L (gamma C_s/(1-mhat) + 1)
//               + C_B/(1-mhat)
inline std::vector<double> distributed_tracking_bound(double initial_mean_err,
                                                      const std::vector<double>& rates, double c_b,
                                                      double gamma, double lipschitz_l, double c_s,
                                                      double c_eps) {
  std::vector<double> bound;
  bound.reserve(rates.size());
  double prod = 1.0;
  double mhat = 0.0;
  for (double m : rates) {
    if (!(m >= 0.0 && m < 1.0))
      throw std::invalid_argument("distributed_tracking_bound: rates must lie in [0,1)");
    prod *= m;
    mhat = std::max(mhat, m);
    double neighborhood = 2.0 * gamma * c_eps * lipschitz_l * (gamma * c_s / (1.0 - mhat) + 1.0);
    bound.push_back(prod * initial_mean_err + neighborhood + c_b / (1.0 - mhat));
  }
  return bound;
}

struct WeightProductDeviation {
  double max_dev = 0.0;
  double lemma_bound = 0.0;
};

// Lambda = prod_t W_t; max deviation of its entries from 1/N, next to the
// geometric consensus bound evaluated with the sequence's epsilon floor.
inline WeightProductDeviation weight_product_deviation(const std::vector<ConsensusWeights>& weights,
                                                       int c_d) {
  if (weights.empty()) throw std::invalid_argument("weight_product_deviation: empty sequence");
  int n = weights[0].n();
  double eps = weights[0].epsilon_floor;
  Matrix prod = weights[0].entries;
  for (size_t t = 1; t < weights.size(); ++t) {
    if (weights[t].n() != n) throw std::invalid_argument("weight_product_deviation: size mismatch");
    eps = std::min(eps, weights[t].epsilon_floor);
    prod = matmul(prod, weights[t].entries);
  }
  WeightProductDeviation out;
  for (double v : prod.a) out.max_dev = std::max(out.max_dev, std::fabs(v - 1.0 / n));
  double cd_hat = static_cast<double>(c_d) * (n - 1);
  double e = std::pow(eps, cd_hat);
  double len = static_cast<double>(weights.size());
  out.lemma_bound = 2.0 * (1.0 + std::pow(eps, -cd_hat)) / (1.0 - e) * std::pow(1.0 - e, len / cd_hat);
  return out;
}

// empirical C_B: max over consecutive steps of the optimizer drift
inline double estimate_drift_constant(const std::vector<FilterTaps>& optima) {
  if (optima.size() < 2) throw std::invalid_argument("estimate_drift_constant: need length >= 2");
  double worst = 0.0;
  for (size_t t = 0; t + 1 < optima.size(); ++t)
    worst = std::max(worst, taps_distance(optima[t + 1], optima[t]));
  return worst;
}

// ---------------------------------------------------------------------------
// Synthetic time-varying quadratic stream. The task is a regression through
// the wide branch alone (alpha_d = 0, identity readout), so the per-step loss
// mse(Z_t a, Z_t a*_t) is quadratic in the taps with optimum a*_t known by
// construction. Curvature constants come from the Gram matrix of the stacked
// shifted signals.

struct QuadraticStream {
  std::vector<OnlineStep> steps;
  std::vector<FilterTaps> optima;  // a*_t per step
  WdGnnParams model;               // wide-only model the stream is built for
  std::vector<double> c_s;         // per-step smoothness of the global loss
  std::vector<double> c_c;         // per-step strong convexity
  double drift = 0.0;              // exact C_B of the optimum sequence
};

// Stacked shifted signals [X, SX, ..., S^K X] for a single-feature signal.
inline Matrix stacked_shift_matrix(const Gso& s, const GraphSignal& x, int k_order) {
  Matrix z(x.rows, k_order + 1);
  Matrix cur = x;
  for (int k = 0; k <= k_order; ++k) {
    for (int i = 0; i < x.rows; ++i) z(i, k) = cur(i, 0);
    if (k < k_order) cur = graph_shift(s, cur);
  }
  return z;
}

// Smoothness/strong-convexity constants of a = vec(taps) -> mse(Z a, y):
// the Hessian is (2/N) ZᵀZ.
inline std::pair<double, double> quadratic_curvature(const Gso& s, const GraphSignal& x, int k_order) {
  Matrix z = stacked_shift_matrix(s, x, k_order);
  Matrix gram = matmul_at_b(z, z);
  auto eig = symmetric_eigendecomposition(gram);
  double scale = 2.0 / x.rows;
  return {scale * eig.values.back(), scale * std::max(0.0, eig.values.front())};
}

inline FilterTaps scalar_taps(const std::vector<double>& coeffs) {
  FilterTaps t;
  for (double c : coeffs) {
    Matrix m(1, 1);
    m(0, 0) = c;
    t.taps.push_back(std::move(m));
  }
  return t;
}

// Stream over a fixed connected graph with fresh signals each step and an
// optimum that drifts by exactly `drift` per step along a random direction.
inline QuadraticStream make_quadratic_stream(int n, int k_order, int n_steps, double drift,
                                             uint64_t seed) {
  Rng rng(seed);
  QuadraticStream qs;

  Gso g;
  for (int attempt = 0;; ++attempt) {
    g = Gso{Matrix(n, n), true};
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.bernoulli(0.5)) {
          g.entries(i, j) = 1.0;
          g.entries(j, i) = 1.0;
        }
    if (is_connected(g)) break;
    if (attempt > 100) throw std::runtime_error("make_quadratic_stream: no connected graph");
  }
  g = normalize_adjacency(g);

  std::vector<double> star(k_order + 1);
  for (double& v : star) v = rng.uniform(-1.0, 1.0);

  qs.model.wide = scalar_taps(std::vector<double>(k_order + 1, 0.0));  // a_0 = 0
  qs.model.deep.layers.push_back({scalar_taps(std::vector<double>(k_order + 1, 0.0)),
                                  Nonlinearity::identity});
  qs.model.alpha_w = 1.0;
  qs.model.alpha_d = 0.0;
  qs.model.beta = 0.0;
  qs.model.readout = Readout::identity(1);

  for (int t = 0; t < n_steps; ++t) {
    OnlineStep st;
    st.s = g;
    st.x = GraphSignal(n, 1);
    for (double& v : st.x.a) v = rng.normal();
    FilterTaps opt = scalar_taps(star);
    Matrix z = stacked_shift_matrix(st.s, st.x, k_order);
    st.target = Matrix(n, 1);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k <= k_order; ++k) acc += z(i, k) * star[k];
      st.target(i, 0) = acc;
    }
    auto [cs, cc] = quadratic_curvature(st.s, st.x, k_order);
    qs.c_s.push_back(cs);
    qs.c_c.push_back(cc);
    qs.steps.push_back(std::move(st));
    qs.optima.push_back(std::move(opt));

    if (drift > 0.0) {
      std::vector<double> dir(k_order + 1);
      double norm = 0.0;
      for (double& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (size_t k = 0; k < star.size(); ++k) star[k] += drift * dir[k] / norm;
    }
  }
  if (qs.optima.size() >= 2) qs.drift = estimate_drift_constant(qs.optima);
  return qs;
}

// ---------------------------------------------------------------------------
// Reports

struct StabilityRecord {
  int instance = 0;
  int n = 0;
  double eps = 0.0;
  double c_l = 0.0;
  double c_psi = 0.0;
  double x_norm = 0.0;
  double empirical_diff = 0.0;
  double bound = 0.0;
};

inline void write_stability_csv(const std::string& path, const std::vector<StabilityRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_stability_csv: cannot open " + path);
  out << "instance,n,eps,c_l,c_psi,x_norm,empirical_diff,bound\n";
  for (const StabilityRecord& r : rows)
    out << r.instance << "," << r.n << "," << format_double(r.eps) << "," << format_double(r.c_l)
        << "," << format_double(r.c_psi) << "," << format_double(r.x_norm) << ","
        << format_double(r.empirical_diff) << "," << format_double(r.bound) << "\n";
}

struct ConvergenceRecord {
  int t = 0;
  double tracking_error = 0.0;
  double bound = 0.0;
  double rate = 0.0;
  double gamma = 0.0;
  double c_b = 0.0;
  double c_s = 0.0;
  double c_c = 0.0;
  double c_eps = 0.0;  // 0 for the centralized bound
};

inline void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_convergence_csv: cannot open " + path);
  out << "t,tracking_error,bound,rate,gamma,c_b,c_s,c_c,c_eps\n";
  for (const ConvergenceRecord& r : rows)
    out << r.t << "," << format_double(r.tracking_error) << "," << format_double(r.bound) << ","
        << format_double(r.rate) << "," << format_double(r.gamma) << "," << format_double(r.c_b)
        << "," << format_double(r.c_s) << "," << format_double(r.c_c) << ","
        << format_double(r.c_eps) << "\n";
}

}  // namespace wdgnn
