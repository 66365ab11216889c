#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace wdgnn {

// Dense row-major matrix of doubles. Everything in this library is small
// enough (N up to ~1000) that dense storage wins on simplicity.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dimension");
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  bool empty() const { return rows == 0 || cols == 0; }
  int size() const { return rows * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void check_shape(const Matrix& x, const Matrix& y, const char* where) {
  if (!x.same_shape(y))
    throw std::invalid_argument(std::string(where) + ": shape mismatch (" + std::to_string(x.rows) +
                                "x" + std::to_string(x.cols) + " vs " + std::to_string(y.rows) +
                                "x" + std::to_string(y.cols) + ")");
}

inline Matrix operator+(const Matrix& x, const Matrix& y) {
  check_shape(x, y, "operator+");
  Matrix r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
  return r;
}

inline Matrix operator-(const Matrix& x, const Matrix& y) {
  check_shape(x, y, "operator-");
  Matrix r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
  return r;
}

inline Matrix operator*(double s, const Matrix& x) {
  Matrix r = x;
  for (double& v : r.a) v *= s;
  return r;
}

// y += s*x
inline void add_scaled(Matrix& y, const Matrix& x, double s) {
  check_shape(y, x, "add_scaled");
  for (size_t i = 0; i < y.a.size(); ++i) y.a[i] += s * x.a[i];
}

inline void add_constant(Matrix& y, double c) {
  for (double& v : y.a) v += c;
}

// C = A*B, ikj order so the inner loop streams rows of B.
inline Matrix matmul(const Matrix& A, const Matrix& B) {
  if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
    double* crow = &C.a[static_cast<size_t>(i) * C.cols];
    for (int k = 0; k < A.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return C;
}

// C = Aᵀ*B
inline Matrix matmul_at_b(const Matrix& A, const Matrix& B) {
  if (A.rows != B.rows) throw std::invalid_argument("matmul_at_b: dimension mismatch");
  Matrix C(A.cols, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
    const double* brow = &B.a[static_cast<size_t>(i) * B.cols];
    for (int k = 0; k < A.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      double* crow = &C.a[static_cast<size_t>(k) * C.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return C;
}

// C = A*Bᵀ
inline Matrix matmul_a_bt(const Matrix& A, const Matrix& B) {
  if (A.cols != B.cols) throw std::invalid_argument("matmul_a_bt: dimension mismatch");
  Matrix C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
    for (int j = 0; j < B.rows; ++j) {
      const double* brow = &B.a[static_cast<size_t>(j) * B.cols];
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
      C(i, j) = s;
    }
  }
  return C;
}

inline Matrix transpose(const Matrix& A) {
  Matrix T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
  return T;
}

inline Matrix hadamard(const Matrix& x, const Matrix& y) {
  check_shape(x, y, "hadamard");
  Matrix r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] *= y.a[i];
  return r;
}

// Frobenius inner product
inline double dot(const Matrix& x, const Matrix& y) {
  check_shape(x, y, "dot");
  double s = 0.0;
  for (size_t i = 0; i < x.a.size(); ++i) s += x.a[i] * y.a[i];
  return s;
}

inline double sum(const Matrix& x) {
  double s = 0.0;
  for (double v : x.a) s += v;
  return s;
}

inline double frobenius_norm(const Matrix& x) {
  double s = 0.0;
  for (double v : x.a) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& x) {
  double m = 0.0;
  for (double v : x.a) m = std::max(m, std::fabs(v));
  return m;
}

inline bool all_finite(const Matrix& x) {
  for (double v : x.a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool is_symmetric(const Matrix& x, double tol = 0.0) {
  if (x.rows != x.cols) return false;
  for (int i = 0; i < x.rows; ++i)
    for (int j = i + 1; j < x.cols; ++j)
      if (std::fabs(x(i, j) - x(j, i)) > tol) return false;
  return true;
}

// Shortest decimal that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace wdgnn
