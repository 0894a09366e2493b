// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "welore/matrix.hpp"

namespace welore {

/// Thin singular value decomposition w = u * diag(sigma) * vt.
///
/// For an m x n input with p = min(m, n): u is m x p with orthonormal
/// columns, sigma holds p non-negative values in non-increasing order and
/// vt is p x n with orthonormal rows. The largest-magnitude entry of each
/// column of u is positive.
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix vt;
};

/// One-sided (Hestenes) Jacobi SVD, accumulated at 64-bit.
///
/// Deterministic: identical input bits give identical output bits. Throws
/// kNonFinite naming the first NaN/Inf entry, kDimension on an empty input.
SvdResult svd(const Matrix& w);

/// Rank-r factor pair with a * b the best rank-r approximation.
struct LowRankFactors {
  Matrix a;  // m x r
  Matrix b;  // r x n
};

/// Splits the top-r singular triplets symmetrically:
/// a = U_r * Sigma_r^{1/2}, b = Sigma_r^{1/2} * V_r^T.
/// Throws kRange unless 1 <= rank <= min(m, n).
LowRankFactors truncate(const SvdResult& s, std::size_t rank);

/// ||w - a * b||_F. Throws kDimension on incompatible shapes.
double frobenius_error(const Matrix& w, const Matrix& a, const Matrix& b);

/// sqrt(sum_{i >= rank} sigma_i^2), the Eckart-Young optimal error.
double tail_norm(const std::vector<double>& sigma, std::size_t rank);

/// Lower-triangular l with l * l^T = a. Throws kNumerical when a is not
/// numerically positive definite.
Matrix cholesky(const Matrix& a);

/// Inverse of a non-singular lower-triangular matrix.
Matrix inverse_lower_triangular(const Matrix& l);

}  // namespace welore
