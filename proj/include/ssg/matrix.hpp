#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ssg {

// Dense row-major matrix of doubles. Row vectors are 1xN matrices.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
  }
  Matrix(int r, int c, std::vector<double> v) : rows(r), cols(c), d(std::move(v)) {
    if (d.size() != static_cast<size_t>(r) * c)
      throw std::invalid_argument("Matrix: data size mismatch");
  }

  double& at(int i, int j) { return d[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return d[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return d.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return d.data() + static_cast<size_t>(i) * cols; }
  size_t size() const { return d.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && d == o.d;
  }
};

inline Matrix zeros(int r, int c) { return Matrix(r, c); }

inline Matrix row_vector(const std::vector<double>& v) {
  return Matrix(1, static_cast<int>(v.size()), v);
}

// C += A * B
inline void gemm_accum(Matrix& c, const Matrix& a, const Matrix& b) {
  assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.row(p);
      for (int j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
}

// C += A * B^T
inline void gemm_nt_accum(Matrix& c, const Matrix& a, const Matrix& b) {
  assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
  const int n = a.rows, k = a.cols, m = b.rows;
  for (int i = 0; i < n; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < m; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ar[p] * br[p];
      cr[j] += s;
    }
  }
}

// C += A^T * B
inline void gemm_tn_accum(Matrix& c, const Matrix& a, const Matrix& b) {
  assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
  const int n = a.cols, k = a.rows, m = b.cols;
  for (int p = 0; p < k; ++p) {
    const double* ar = a.row(p);
    const double* br = b.row(p);
    for (int i = 0; i < n; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.row(i);
      for (int j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  gemm_accum(c, a, b);
  return c;
}

inline double l2_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.d) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
  double s = 0.0;
  for (double v : a.d) s = std::max(s, std::abs(v));
  return s;
}

inline bool all_finite(const Matrix& a) {
  for (double v : a.d)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace ssg
