#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "wdgnn/analysis.hpp"

using namespace wdgnn;

namespace {

WdGnnParams layered_model(int layers, int hidden, double alpha_w, double alpha_d) {
  WdGnnParams p;
  Rng rng(1);
  p.wide = make_filter_taps(2, 1, 1, rng);
  int fin = 1;
  for (int l = 0; l < layers; ++l) {
    int fout = (l == layers - 1) ? 1 : hidden;
    p.deep.layers.push_back({make_filter_taps(2, fin, fout, rng), Nonlinearity::relu});
    fin = fout;
  }
  p.alpha_w = alpha_w;
  p.alpha_d = alpha_d;
  p.readout = Readout::identity(1);
  return p;
}

Gso random_connected(int n, double p, Rng& rng) {
  for (;;) {
    Gso g{Matrix(n, n), true};
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.bernoulli(p)) g.entries(i, j) = g.entries(j, i) = 1.0;
    if (is_connected(g)) return g;
  }
}

}  // namespace

TEST_CASE("stability constant") {
  REQUIRE(stability_constant(layered_model(2, 32, 1.0, 1.0)) == Catch::Approx(65.0));
  REQUIRE(stability_constant(layered_model(3, 8, 0.0, 0.0)) == 0.0);
  REQUIRE(stability_constant(layered_model(2, 16, 0.5, 0.0)) == Catch::Approx(0.5));  // wide only
  REQUIRE(stability_constant(layered_model(1, 4, 0.0, 1.0)) == Catch::Approx(1.0));   // empty product
}

TEST_CASE("stability bound formula") {
  REQUIRE(stability_bound(1.0, 2.0, 9, 3.0, 0.0) == 0.0);
  double b1 = stability_bound(1.5, 2.0, 9, 3.0, 0.01);
  double b2 = stability_bound(1.5, 2.0, 9, 3.0, 0.02);
  REQUIRE(b2 == Catch::Approx(2.0 * b1));
  REQUIRE(stability_bound(1.0, 1.0, 1, 1.0, 0.1) == Catch::Approx(1.8));
  REQUIRE_THROWS_AS(stability_bound(-1.0, 1.0, 1, 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("filter stability bound is the c_psi = 1 specialization") {
  REQUIRE(filter_stability_bound(2.0, 4, 1.0, 0.05) == Catch::Approx(3.4));
  REQUIRE(filter_stability_bound(0.7, 16, 2.0, 0.0) == 0.0);
  REQUIRE(filter_stability_bound(0.7, 16, 2.0, 0.03) ==
          Catch::Approx(stability_bound(0.7, 1.0, 16, 2.0, 0.03)));
}

TEST_CASE("convergence rate") {
  REQUIRE(convergence_rate(0.1, 10.0, 1.0) == Catch::Approx(0.9));
  double c_s = 7.0, c_c = 2.0;
  REQUIRE(convergence_rate(2.0 / (c_s + c_c), c_s, c_c) ==
          Catch::Approx((c_s - c_c) / (c_s + c_c)));
  REQUIRE(convergence_rate(1.0 / 3.0, 3.0, 3.0) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE_THROWS_AS(convergence_rate(0.5, 10.0, 1.0), std::invalid_argument);   // gamma >= 2/c_s
  REQUIRE_THROWS_AS(convergence_rate(0.1, 1.0, 2.0), std::invalid_argument);    // c_c > c_s
  REQUIRE_THROWS_AS(convergence_rate(0.1, 1.0, 0.0), std::invalid_argument);    // c_c = 0
}

TEST_CASE("centralized tracking bound") {
  // c_b = 0, constant rate: pure geometric decay
  std::vector<double> rates(10, 0.8);
  std::vector<double> bound = centralized_tracking_bound(2.0, rates, 0.0);
  for (size_t t = 0; t < rates.size(); ++t)
    REQUIRE(bound[t] == Catch::Approx(2.0 * std::pow(0.8, t + 1)));

  // zero initial error: the geometric series of the drift
  std::vector<double> bound2 = centralized_tracking_bound(0.0, rates, 0.5);
  for (size_t t = 0; t < rates.size(); ++t)
    REQUIRE(bound2[t] == Catch::Approx(0.5 * (1.0 - std::pow(0.8, t + 1)) / 0.2));

  // long-horizon limit c_b / (1 - m)
  std::vector<double> long_rates(2000, 0.9);
  std::vector<double> bound3 = centralized_tracking_bound(1.0, long_rates, 0.3);
  REQUIRE(bound3.back() == Catch::Approx(0.3 / 0.1).epsilon(1e-6));

  REQUIRE_THROWS_AS(centralized_tracking_bound(1.0, {0.5, 1.0}, 0.1), std::invalid_argument);
}

TEST_CASE("c_epsilon constant") {
  REQUIRE(c_epsilon_constant(2, 0.5, 1) == Catch::Approx(25.0));

  // monotone nonincreasing in the epsilon floor
  double last = std::numeric_limits<double>::infinity();
  for (double eps : {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) {
    double c = c_epsilon_constant(4, eps, 2);
    REQUIRE(c <= last + 1e-9);
    last = c;
  }

  // the formula overflows to the +inf sentinel for extreme parameters
  REQUIRE(std::isinf(c_epsilon_constant(50, 0.01, 100)));

  REQUIRE_THROWS_AS(c_epsilon_constant(4, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(c_epsilon_constant(4, 1.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(c_epsilon_constant(4, 0.5, 0), std::invalid_argument);
}

TEST_CASE("distributed tracking bound") {
  std::vector<double> rates(50, 0.9);

  // gamma -> 0 with c_b = 0 leaves only the geometric term
  std::vector<double> bound = distributed_tracking_bound(1.0, rates, 0.0, 0.0, 5.0, 10.0, 100.0);
  for (size_t t = 0; t < rates.size(); ++t)
    REQUIRE(bound[t] == Catch::Approx(std::pow(0.9, t + 1)));

  // long-horizon limit
  double gamma = 0.01, lip = 5.0, c_s = 10.0, c_eps = 100.0, c_b = 0.2;
  std::vector<double> long_rates(3000, 0.9);
  std::vector<double> bound2 = distributed_tracking_bound(1.0, long_rates, c_b, gamma, lip, c_s, c_eps);
  double limit = 2.0 * gamma * c_eps * lip * (gamma * c_s / 0.1 + 1.0) + c_b / 0.1;
  REQUIRE(bound2.back() == Catch::Approx(limit).epsilon(1e-6));

  // distributed bound dominates the centralized one for shared constants
  std::vector<double> central = centralized_tracking_bound(1.0, rates, c_b);
  std::vector<double> dist = distributed_tracking_bound(1.0, rates, c_b, gamma, lip, c_s, c_eps);
  for (size_t t = 0; t < rates.size(); ++t) REQUIRE(dist[t] >= central[t]);
}

TEST_CASE("weight product deviation of the uniform matrix is zero") {
  int n = 5;
  ConsensusWeights uniform{Matrix(n, n, 1.0 / n), 1.0 / n};
  auto dev = weight_product_deviation({uniform}, 1);
  REQUIRE(dev.max_dev == 0.0);
  REQUIRE(dev.lemma_bound > 0.0);
}

TEST_CASE("powers of a fixed metropolis matrix converge geometrically") {
  Rng rng(3);
  Gso g = random_connected(8, 0.4, rng);
  ConsensusWeights w = metropolis_weights(g, 1e-3);

  std::vector<double> devs;
  for (int len : {2, 6, 10, 14, 18}) {
    std::vector<ConsensusWeights> seq(len, w);
    devs.push_back(weight_product_deviation(seq, 1).max_dev);
  }
  for (size_t i = 0; i + 1 < devs.size(); ++i) REQUIRE(devs[i + 1] < devs[i]);
  // ratio between windows is roughly constant (geometric decay)
  double r1 = devs[1] / devs[0];
  double r2 = devs[3] / devs[2];
  REQUIRE(r1 < 1.0);
  REQUIRE(r2 == Catch::Approx(r1).epsilon(0.8));
}

TEST_CASE("empirical deviation stays below the lemma bound on admissible sequences") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 3 + rng.uniform_int(5);
    std::vector<ConsensusWeights> seq;
    int len = 3 + rng.uniform_int(15);
    for (int t = 0; t < len; ++t) {
      Gso g = random_connected(n, 0.6, rng);  // connected every step => C_d = 1
      seq.push_back(metropolis_weights(g, 1.0 / (2.0 * n)));
    }
    auto dev = weight_product_deviation(seq, 1);
    REQUIRE(dev.max_dev <= dev.lemma_bound);
  }
  REQUIRE_THROWS_AS(weight_product_deviation({}, 1), std::invalid_argument);
}

TEST_CASE("drift constant estimation") {
  FilterTaps a = scalar_taps({0.0, 0.0});
  FilterTaps b = scalar_taps({3.0, 4.0});  // distance 5 from a
  FilterTaps c = scalar_taps({3.0, 4.0});
  REQUIRE(estimate_drift_constant({a, a, a}) == 0.0);
  REQUIRE(estimate_drift_constant({a, b, c}) == Catch::Approx(5.0));
  // reversing a monotone sequence preserves the max of consecutive steps
  REQUIRE(estimate_drift_constant({c, b, a}) == Catch::Approx(5.0));
  REQUIRE_THROWS_AS(estimate_drift_constant({a}), std::invalid_argument);
}

TEST_CASE("quadratic stream: optima are exact and constants are consistent") {
  QuadraticStream qs = make_quadratic_stream(8, 3, 25, 0.01, 7);
  REQUIRE(qs.steps.size() == 25);
  REQUIRE(qs.drift <= 0.01 + 1e-12);
  REQUIRE(qs.drift > 0.0);

  for (size_t t = 0; t < qs.steps.size(); ++t) {
    REQUIRE(qs.c_s[t] >= qs.c_c[t]);
    REQUIRE(qs.c_c[t] > 0.0);

    // the loss at the stated optimum is zero
    WdGnnParams at_opt = qs.model;
    at_opt.wide = qs.optima[t];
    auto [out, cache] = wdgnn_forward(qs.steps[t].s, qs.steps[t].x, at_opt);
    auto [loss, grad] = mse_loss(out, qs.steps[t].target);
    REQUIRE(loss < 1e-20);
  }

  // the optimum from the normal equations matches the constructed one
  const OnlineStep& st = qs.steps[0];
  Matrix z = stacked_shift_matrix(st.s, st.x, 3);
  Matrix gram = matmul_at_b(z, z);
  auto eig = symmetric_eigendecomposition(gram);
  Matrix rhs = matmul_at_b(z, st.target);  // (K+1) x 1
  // solve gram * a = rhs through the eigendecomposition
  Matrix coeffs = matmul_at_b(eig.vectors, rhs);
  for (int k = 0; k < coeffs.rows; ++k) coeffs(k, 0) /= eig.values[k];
  Matrix a_star = matmul(eig.vectors, coeffs);
  for (int k = 0; k <= 3; ++k)
    REQUIRE(a_star(k, 0) == Catch::Approx(qs.optima[0].taps[k](0, 0)).margin(1e-8));
}

TEST_CASE("report csv writers") {
  std::vector<StabilityRecord> stab = {{0, 10, 0.01, 1.0, 2.0, 3.0, 0.1, 0.2}};
  write_stability_csv("test_stab.csv", stab);
  std::ifstream in("test_stab.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  REQUIRE(header == "instance,n,eps,c_l,c_psi,x_norm,empirical_diff,bound");
  REQUIRE(row == "0,10,0.01,1,2,3,0.1,0.2");
  in.close();
  std::remove("test_stab.csv");

  std::vector<ConvergenceRecord> conv = {{1, 0.5, 0.75, 0.9, 0.01, 0.0, 2.0, 1.0, 0.0}};
  write_convergence_csv("test_conv.csv", conv);
  std::ifstream in2("test_conv.csv");
  std::getline(in2, header);
  REQUIRE(header == "t,tracking_error,bound,rate,gamma,c_b,c_s,c_c,c_eps");
  in2.close();
  std::remove("test_conv.csv");
}
