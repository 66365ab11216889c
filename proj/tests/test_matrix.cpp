#include <catch2/catch_amalgamated.hpp>

#include "wdgnn/eigen.hpp"
#include "wdgnn/matrix.hpp"
#include "wdgnn/rng.hpp"

using namespace wdgnn;

TEST_CASE("matmul matches hand computation") {
  Matrix a(2, 3);
  a.a = {1, 2, 3, 4, 5, 6};
  Matrix b(3, 2);
  b.a = {7, 8, 9, 10, 11, 12};
  Matrix c = matmul(a, b);
  REQUIRE(c(0, 0) == 58);
  REQUIRE(c(0, 1) == 64);
  REQUIRE(c(1, 0) == 139);
  REQUIRE(c(1, 1) == 154);
}

TEST_CASE("transposed products agree with explicit transpose") {
  Rng rng(3);
  Matrix a(4, 3), b(4, 5);
  for (double& v : a.a) v = rng.normal();
  for (double& v : b.a) v = rng.normal();
  Matrix direct = matmul_at_b(a, b);
  Matrix ref = matmul(transpose(a), b);
  REQUIRE(max_abs(direct - ref) < 1e-14);

  Matrix c(5, 3);
  for (double& v : c.a) v = rng.normal();
  Matrix direct2 = matmul_a_bt(a, c);
  Matrix ref2 = matmul(a, transpose(c));
  REQUIRE(max_abs(direct2 - ref2) < 1e-14);
}

TEST_CASE("shape mismatches throw") {
  REQUIRE_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
  REQUIRE_THROWS_AS(Matrix(2, 2) + Matrix(3, 3), std::invalid_argument);
}

TEST_CASE("eigendecomposition of the identity") {
  auto eig = symmetric_eigendecomposition(Matrix::identity(5));
  for (double v : eig.values) REQUIRE(v == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("eigendecomposition of K2 adjacency") {
  Matrix k2(2, 2);
  k2(0, 1) = 1.0;
  k2(1, 0) = 1.0;
  auto eig = symmetric_eigendecomposition(k2);
  REQUIRE(eig.values[0] == Catch::Approx(-1.0).margin(1e-12));
  REQUIRE(eig.values[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("random symmetric reconstruction residual") {
  Rng rng(11);
  int n = 10;
  Matrix s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double v = rng.normal();
      s(i, j) = v;
      s(j, i) = v;
    }
  auto eig = symmetric_eigendecomposition(s);

  // S V = V diag(lambda)
  Matrix sv = matmul(s, eig.vectors);
  Matrix vl = eig.vectors;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) vl(i, j) *= eig.values[j];
  REQUIRE(frobenius_norm(sv - vl) <= 1e-8 * frobenius_norm(s));

  // VᵀV = I
  Matrix vtv = matmul_at_b(eig.vectors, eig.vectors);
  REQUIRE(frobenius_norm(vtv - Matrix::identity(n)) < 1e-8);

  // eigenvalues ascending
  for (int i = 0; i + 1 < n; ++i) REQUIRE(eig.values[i] <= eig.values[i + 1]);
}

TEST_CASE("eigendecomposition rejects non-symmetric input") {
  Matrix m(2, 2);
  m(0, 1) = 1.0;
  REQUIRE_THROWS_AS(symmetric_eigendecomposition(m), std::invalid_argument);
}

TEST_CASE("spectral norm") {
  Matrix col(4, 1);
  col.a = {1, 2, 2, 0};
  REQUIRE(spectral_norm(col) == Catch::Approx(3.0));

  // rank-1 matrix u vᵀ has spectral norm |u||v|
  Matrix u(3, 1), v(2, 1);
  u.a = {1, 2, 2};
  v.a = {3, 4};
  Matrix uv = matmul_a_bt(u, v);
  REQUIRE(spectral_norm(uv) == Catch::Approx(15.0).epsilon(1e-10));
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());

  Rng r(7);
  double mean = 0.0;
  int n = 20000;
  for (int i = 0; i < n; ++i) mean += r.normal();
  mean /= n;
  REQUIRE(std::fabs(mean) < 0.05);

  Rng s(9);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) ++counts[s.uniform_int(5)];
  for (int c : counts) REQUIRE(std::fabs(c - 1000.0) < 150);
}

TEST_CASE("format_double round-trips") {
  for (double v : {1.0, 1.0 / 3.0, 1e-17, -2.5e300, 0.1}) {
    std::string s = format_double(v);
    REQUIRE(std::stod(s) == v);
  }
}
