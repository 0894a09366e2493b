// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "welore/error.hpp"

namespace welore {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

// c[i,:] += alpha * sum_k a[i,k] * b[k,:]. Four rows of b per pass over a
// row of c; per-element summation order stays k ascending.
void gemm_nn_acc(Matrix& c, const Matrix& a, const Matrix& b, double alpha) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* bp = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c.row(i).data();
    const double* arow = a.row(i).data();
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double s0 = alpha * arow[p], s1 = alpha * arow[p + 1];
      const double s2 = alpha * arow[p + 2], s3 = alpha * arow[p + 3];
      const double* b0 = bp + p * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = (((crow[j] + s0 * b0[j]) + s1 * b1[j]) + s2 * b2[j]) + s3 * b3[j];
    }
    for (; p < k; ++p) {
      const double s = alpha * arow[p];
      const double* brow = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream os;
    os << "matrix data length " << data_.size() << " does not match shape "
       << rows << "x" << cols;
    throw Error(ErrorCode::kDimension, os.str());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::kDimension,
                "matmul: " + shape_str(a) + " * " + shape_str(b));
  Matrix c(a.rows(), b.cols());
  gemm_nn_acc(c, a, b, 1.0);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw Error(ErrorCode::kDimension,
                "matmul_nt: " + shape_str(a) + " * (" + shape_str(b) + ")^T");
  Matrix c(a.rows(), b.rows());
  gemm_nn_acc(c, a, transpose(b), 1.0);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  add_matmul_tn(c, a, b, 1.0);
  return c;
}

void add_matmul_tn(Matrix& c, const Matrix& a, const Matrix& b, double alpha) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
    throw Error(ErrorCode::kDimension, "add_matmul_tn: (" + shape_str(a) +
                                           ")^T * " + shape_str(b) + " -> " +
                                           shape_str(c));
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double* a0 = a.row(p).data();
    const double* a1 = a.row(p + 1).data();
    const double* a2 = a.row(p + 2).data();
    const double* a3 = a.row(p + 3).data();
    const double* b0 = b.row(p).data();
    const double* b1 = b.row(p + 1).data();
    const double* b2 = b.row(p + 2).data();
    const double* b3 = b.row(p + 3).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double s0 = alpha * a0[i], s1 = alpha * a1[i];
      const double s2 = alpha * a2[i], s3 = alpha * a3[i];
      double* __restrict crow = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = (((crow[j] + s0 * b0[j]) + s1 * b1[j]) + s2 * b2[j]) + s3 * b3[j];
    }
  }
  for (; p < k; ++p) {
    const double* arow = a.row(p).data();
    const double* brow = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double s = alpha * arow[i];
      double* __restrict crow = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void add_matmul(Matrix& c, const Matrix& a, const Matrix& b, double alpha) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols())
    throw Error(ErrorCode::kDimension, "add_matmul: " + shape_str(a) + " * " +
                                           shape_str(b) + " -> " + shape_str(c));
  gemm_nn_acc(c, a, b, alpha);
}

void axpy(Matrix& y, const Matrix& x, double alpha) {
  require_same_shape(y, x, "axpy");
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += alpha * xd[i];
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  axpy(c, b, 1.0);
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  axpy(c, b, -1.0);
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

double frobenius_norm(const Matrix& a) {
  // Scaled accumulation avoids overflow for large entries.
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double v : a.data()) {
    const double t = v / scale;
    sum += t * t;
  }
  return scale * std::sqrt(sum);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "dot");
  return dot(a.data(), b.data());
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void require_finite(const Matrix& a, std::string_view what) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (!std::isfinite(a(i, j))) {
        std::ostringstream os;
        os << what << ": non-finite entry " << a(i, j) << " at (" << i << ", "
           << j << ")";
        throw Error(ErrorCode::kNonFinite, os.str());
      }
    }
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::kDimension, std::string(what) + ": shape " +
                                           shape_str(a) + " vs " + shape_str(b));
}

}  // namespace welore
