#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace stnq {

using Vector = std::vector<double>;

// Dense row-major matrix. Deliberately dumb; the layer code in autodiff.hpp
// writes its own loops against .row() pointers.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
};

inline Matrix reshape(const Matrix& m, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != m.size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  Matrix out(rows, cols);
  out.data = m.data;
  return out;
}

inline Matrix from_row(const Vector& v) {
  Matrix m(1, static_cast<int>(v.size()));
  m.data = v;
  return m;
}

// C = A * B, shapes (m x k)(k x n)
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims differ");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      if (aik == 0.0) continue;
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

// C = A * B^T, shapes (m x k)(n x k)
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dims differ");
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      cr[j] = acc;
    }
  }
  return c;
}

// C = A^T * B, shapes (k x m)(k x n)
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dims differ");
  Matrix c(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      double* cr = c.row(i);
      for (int j = 0; j < b.cols; ++j) cr[j] += aki * br[j];
    }
  }
  return c;
}

}  // namespace stnq
