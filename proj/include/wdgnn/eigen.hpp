#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wdgnn/matrix.hpp"

namespace wdgnn {

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k is the eigenvector of values[k]
};

inline double offdiag_frobenius(const Matrix& m) {
  double s = 0.0;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      if (i != j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

// Cyclic Jacobi rotations for a symmetric matrix. Stops when the off-diagonal
// Frobenius norm falls below 1e-12 relative to the full norm, capped at 100
// sweeps. Robust and dependency-free at the sizes this library targets.
inline EigenDecomposition symmetric_eigendecomposition(const Matrix& s) {
  if (s.rows != s.cols) throw std::invalid_argument("symmetric_eigendecomposition: not square");
  double scale = max_abs(s);
  if (!is_symmetric(s, 1e-10 * std::max(1.0, scale)))
    throw std::invalid_argument("symmetric_eigendecomposition: input is not symmetric");

  int n = s.rows;
  Matrix a = s;
  Matrix v = Matrix::identity(n);
  double full_norm = frobenius_norm(a);
  double threshold = 1e-12 * std::max(full_norm, 1e-300);

  for (int sweep = 0; sweep < 100; ++sweep) {
    if (offdiag_frobenius(a) <= threshold) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        double app = a(p, p), aqq = a(q, q);
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double sn = t * c;

        for (int k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  EigenDecomposition out;
  out.values.resize(n);
  for (int i = 0; i < n; ++i) out.values[i] = a(i, i);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return out.values[x] < out.values[y]; });

  std::vector<double> sorted(n);
  Matrix vs(n, n);
  for (int k = 0; k < n; ++k) {
    sorted[k] = out.values[order[k]];
    for (int i = 0; i < n; ++i) vs(i, k) = v(i, order[k]);
  }
  out.values = std::move(sorted);
  out.vectors = std::move(vs);
  return out;
}

// max |eigenvalue| of a symmetric matrix
inline double spectral_radius_symmetric(const Matrix& s) {
  auto eig = symmetric_eigendecomposition(s);
  double m = 0.0;
  for (double l : eig.values) m = std::max(m, std::fabs(l));
  return m;
}

// operator 2-norm of a general matrix: sqrt(lambda_max(XᵀX))
inline double spectral_norm(const Matrix& x) {
  if (x.rows == 1 || x.cols == 1) return frobenius_norm(x);
  Matrix gram = matmul_at_b(x, x);
  // symmetrize roundoff before Jacobi
  for (int i = 0; i < gram.rows; ++i)
    for (int j = i + 1; j < gram.cols; ++j) {
      double m = 0.5 * (gram(i, j) + gram(j, i));
      gram(i, j) = m;
      gram(j, i) = m;
    }
  auto eig = symmetric_eigendecomposition(gram);
  double top = eig.values.empty() ? 0.0 : eig.values.back();
  return std::sqrt(std::max(0.0, top));
}

}  // namespace wdgnn
