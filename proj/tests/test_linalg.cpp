// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "support.hpp"
#include "welore/error.hpp"
#include "welore/svd.hpp"

using namespace welore;
using namespace welore::testing;

namespace {

double orthonormality_defect_cols(const Matrix& u) {
  const Matrix g = matmul_tn(u, u);
  return max_abs_diff(g, Matrix::identity(g.rows()));
}

double orthonormality_defect_rows(const Matrix& vt) {
  const Matrix g = matmul_nt(vt, vt);
  return max_abs_diff(g, Matrix::identity(g.rows()));
}

Matrix reconstruct(const SvdResult& s) {
  Matrix us = s.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= s.sigma[k];
  return matmul(us, s.vt);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kFormat;
}

}  // namespace

TEST_CASE("matrix products agree with naive loops") {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c(i, j) - s) < 1e-12);
    }
  CHECK(max_abs_diff(matmul_nt(a, transpose(b)), c) < 1e-12);
  CHECK(max_abs_diff(matmul_tn(transpose(a), b), c) < 1e-12);
  Matrix acc(5, 3);
  add_matmul(acc, a, b, 2.0);
  CHECK(max_abs_diff(acc, 2.0 * c) < 1e-12);
  CHECK(code_of([&] { matmul(a, a); }) == ErrorCode::kDimension);
}

TEST_CASE("non-finite input is rejected with the entry named") {
  Matrix m(2, 3, 1.0);
  m(1, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    svd(m);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("(1, 2)") != std::string::npos);
  }
}

TEST_CASE("svd of identity and diagonal matrices") {
  const SvdResult id = svd(Matrix::identity(3));
  CHECK(id.sigma == std::vector<double>{1, 1, 1});
  const std::vector<double> d{3, 2, 1};
  const SvdResult s = svd(Matrix::diagonal(d));
  CHECK(s.sigma == d);
  // Unsorted diagonal comes back sorted.
  const std::vector<double> shuffled{1, 3, 2};
  CHECK(svd(Matrix::diagonal(shuffled)).sigma == d);
}

TEST_CASE("sum of squared singular values equals the squared Frobenius norm") {
  std::mt19937_64 rng(85);
  const Matrix w = random_matrix(8, 5, rng);
  const SvdResult s = svd(w);
  double sum = 0.0;
  for (double x : s.sigma) sum += x * x;
  double fro2 = 0.0;  // direct, unscaled
  for (double x : w.data()) fro2 += x * x;
  CHECK(std::abs(sum - fro2) / fro2 < 1e-10);
}

TEST_CASE("svd invariants over random shapes up to 128x128") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 128);
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t m = trial < 4 ? 128 : dim(rng), n = trial < 2 ? 128 : dim(rng);
    const Matrix w = random_matrix(m, n, rng);
    const SvdResult s = svd(w);
    INFO(m << "x" << n);
    REQUIRE(s.sigma.size() == std::min(m, n));
    REQUIRE(s.u.rows() == m);
    REQUIRE(s.vt.cols() == n);
    for (std::size_t i = 0; i < s.sigma.size(); ++i) {
      CHECK(s.sigma[i] >= 0.0);
      if (i) CHECK(s.sigma[i] <= s.sigma[i - 1]);
    }
    CHECK(orthonormality_defect_cols(s.u) < 1e-8);
    CHECK(orthonormality_defect_rows(s.vt) < 1e-8);
    CHECK(frobenius_norm(reconstruct(s) - w) / frobenius_norm(w) < 1e-8);
    // Sign convention: largest-magnitude entry of each u column is positive.
    for (std::size_t k = 0; k < s.u.cols(); ++k) {
      double best = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        if (std::abs(s.u(i, k)) > std::abs(best)) best = s.u(i, k);
      CHECK(best > 0.0);
    }
  }
}

TEST_CASE("rank-deficient inputs still produce orthonormal factors") {
  std::mt19937_64 rng(3);
  const Matrix w = matmul(random_matrix(10, 2, rng), random_matrix(2, 7, rng));
  const SvdResult s = svd(w);
  CHECK(orthonormality_defect_cols(s.u) < 1e-8);
  CHECK(orthonormality_defect_rows(s.vt) < 1e-8);
  CHECK(s.sigma[2] < 1e-10 * s.sigma[0]);
  const SvdResult z = svd(Matrix(3, 4));
  CHECK(z.sigma == std::vector<double>{0, 0, 0});
  CHECK(orthonormality_defect_cols(z.u) < 1e-12);
}

TEST_CASE("svd is deterministic bit for bit") {
  std::mt19937_64 rng(4);
  const Matrix w = random_matrix(40, 33, rng);
  const SvdResult a = svd(w), b = svd(w);
  CHECK(a.u == b.u);
  CHECK(a.sigma == b.sigma);
  CHECK(a.vt == b.vt);
}

TEST_CASE("truncate examples") {
  std::mt19937_64 rng(5);
  const Matrix u = random_matrix(4, 1, rng), v = random_matrix(1, 4, rng);
  const Matrix outer = matmul(u, v);
  LowRankFactors f = truncate(svd(outer), 1);
  CHECK(frobenius_error(outer, f.a, f.b) <= 1e-10 * frobenius_norm(outer));

  const std::vector<double> d{3, 2, 1};
  const Matrix diag = Matrix::diagonal(d);
  f = truncate(svd(diag), 2);
  CHECK(std::abs(frobenius_error(diag, f.a, f.b) - 1.0) < 1e-12);

  const Matrix w = random_matrix(6, 6, rng);
  const SvdResult s = svd(w);
  f = truncate(s, 3);
  const double tail = std::sqrt(s.sigma[3] * s.sigma[3] + s.sigma[4] * s.sigma[4] +
                                s.sigma[5] * s.sigma[5]);
  CHECK(std::abs(frobenius_error(w, f.a, f.b) - tail) / tail < 1e-8);
}

TEST_CASE("truncate splits singular values symmetrically") {
  std::mt19937_64 rng(6);
  const SvdResult s = svd(random_matrix(7, 5, rng));
  const LowRankFactors f = truncate(s, 3);
  CHECK(f.a.rows() == 7);
  CHECK(f.a.cols() == 3);
  CHECK(f.b.rows() == 3);
  CHECK(f.b.cols() == 5);
  for (std::size_t k = 0; k < 3; ++k) {
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < 7; ++i) na += f.a(i, k) * f.a(i, k);
    for (std::size_t j = 0; j < 5; ++j) nb += f.b(k, j) * f.b(k, j);
    CHECK(std::abs(na - s.sigma[k]) < 1e-10);
    CHECK(std::abs(nb - s.sigma[k]) < 1e-10);
  }
}

TEST_CASE("truncate rejects out-of-range ranks") {
  const SvdResult s = svd(Matrix::identity(3));
  CHECK(code_of([&] { truncate(s, 0); }) == ErrorCode::kRange);
  CHECK(code_of([&] { truncate(s, 4); }) == ErrorCode::kRange);
}

TEST_CASE("frobenius_error examples") {
  std::mt19937_64 rng(7);
  const Matrix a = random_matrix(3, 2, rng), b = random_matrix(2, 4, rng);
  CHECK(frobenius_error(matmul(a, b), a, b) < 1e-14);
  CHECK(std::abs(frobenius_error(Matrix(2, 2), Matrix::identity(2), Matrix::identity(2)) -
                 std::sqrt(2.0)) < 1e-15);
  const Matrix w = random_matrix(4, 4, rng);
  const SvdResult s = svd(w);
  const LowRankFactors f = truncate(s, 2);
  CHECK(std::abs(frobenius_error(w, f.a, f.b) - tail_oracle(s.sigma, 2)) <
        1e-8 * tail_oracle(s.sigma, 2));
  CHECK(code_of([&] { frobenius_error(w, a, b); }) == ErrorCode::kDimension);
}

TEST_CASE("truncation beats random rank-r factorizations") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix w = random_matrix(12, 9, rng);
    const SvdResult s = svd(w);
    for (std::size_t r = 1; r <= 9; ++r) {
      const LowRankFactors f = truncate(s, r);
      const double best = frobenius_error(w, f.a, f.b);
      for (int k = 0; k < 100; ++k) {
        const Matrix a = random_matrix(12, r, rng), b = random_matrix(r, 9, rng, 0.3);
        REQUIRE(best <= frobenius_error(w, a, b));
      }
    }
  }
}

TEST_CASE("cholesky and triangular inverse") {
  std::mt19937_64 rng(9);
  const Matrix s = random_spd(6, rng);
  const Matrix l = cholesky(s);
  CHECK(max_abs_diff(matmul_nt(l, l), s) < 1e-12);
  CHECK(max_abs_diff(matmul(l, inverse_lower_triangular(l)), Matrix::identity(6)) < 1e-10);
  Matrix bad = Matrix::identity(2);
  bad(1, 1) = -1.0;
  CHECK(code_of([&] { cholesky(bad); }) == ErrorCode::kNumerical);
}
