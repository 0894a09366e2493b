// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "welore/error.hpp"

namespace welore {

namespace {

constexpr double kJacobiTol = 1e-15;
constexpr int kMaxSweeps = 80;

// Orthogonalizes vec against the first `count` rows of basis (modified
// Gram-Schmidt, applied twice) and returns the remaining norm.
double orthogonalize(std::span<double> vec, const Matrix& basis,
                     std::size_t count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < count; ++k) {
      const auto b = basis.row(k);
      const double proj = dot(b, vec);
      for (std::size_t i = 0; i < vec.size(); ++i) vec[i] -= proj * b[i];
    }
  }
  return std::sqrt(dot(vec, vec));
}

// Thin SVD for m >= n. Works on the transpose so that the Jacobi rotations
// touch contiguous rows: cols holds the columns of w, vrows the columns of V.
SvdResult svd_tall(const Matrix& w) {
  const std::size_t m = w.rows(), n = w.cols();
  Matrix cols = transpose(w);
  Matrix vrows = Matrix::identity(n);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto cp = cols.row(p);
        auto cq = cols.row(q);
        const double alpha = dot(cp, cp);
        const double beta = dot(cq, cq);
        const double gamma = dot(cp, cq);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha) * std::sqrt(beta))
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = cp[i], xq = cq[i];
          cp[i] = c * xp - s * xq;
          cq[i] = s * xp + c * xq;
        }
        auto vp = vrows.row(p);
        auto vq = vrows.row(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double xp = vp[i], xq = vq[i];
          vp[i] = c * xp - s * xq;
          vq[i] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto c = cols.row(j);
    norms[j] = std::sqrt(dot(c, c));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return norms[a] > norms[b];
  });

  SvdResult out;
  out.sigma.resize(n);
  Matrix urows(n, m);  // rows are left singular vectors
  out.vt = Matrix(n, n);
  const double sigma_max = norms[order[0]];
  const double null_cut = sigma_max * 1e-300;
  std::size_t next_basis = 0;  // next canonical vector to try for completion
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    auto u = urows.row(k);
    bool ok = false;
    if (norms[j] > null_cut && norms[j] > 0.0) {
      const auto c = cols.row(j);
      for (std::size_t i = 0; i < m; ++i) u[i] = c[i] / norms[j];
      const double r = orthogonalize(u, urows, k);
      if (r > 0.5) {
        for (double& x : u) x /= r;
        ok = true;
      }
    }
    // Null direction: complete the basis from canonical vectors.
    while (!ok && next_basis < m) {
      std::fill(u.begin(), u.end(), 0.0);
      u[next_basis++] = 1.0;
      const double r = orthogonalize(u, urows, k);
      if (r > 0.5) {
        for (double& x : u) x /= r;
        ok = true;
      }
    }
    const auto v = vrows.row(j);
    std::copy(v.begin(), v.end(), out.vt.row(k).begin());

    // Sign convention: largest-magnitude entry of u is positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (std::abs(u[i]) > std::abs(u[arg])) arg = i;
    if (u[arg] < 0.0) {
      for (double& x : u) x = -x;
      for (double& x : out.vt.row(k)) x = -x;
    }
  }
  out.u = transpose(urows);
  return out;
}

}  // namespace

SvdResult svd(const Matrix& w) {
  if (w.rows() == 0 || w.cols() == 0)
    throw Error(ErrorCode::kDimension, "svd: empty matrix");
  require_finite(w, "svd input");
  if (w.rows() >= w.cols()) return svd_tall(w);

  // w^T = V S U^T; swap roles and re-apply the sign convention on u.
  SvdResult t = svd_tall(transpose(w));
  SvdResult out;
  out.sigma = std::move(t.sigma);
  out.u = transpose(t.vt);
  out.vt = transpose(t.u);
  const std::size_t p = out.sigma.size();
  for (std::size_t k = 0; k < p; ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < out.u.rows(); ++i)
      if (std::abs(out.u(i, k)) > std::abs(out.u(arg, k))) arg = i;
    if (out.u(arg, k) < 0.0) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, k) = -out.u(i, k);
      for (double& x : out.vt.row(k)) x = -x;
    }
  }
  return out;
}

LowRankFactors truncate(const SvdResult& s, std::size_t rank) {
  const std::size_t p = s.sigma.size();
  if (rank == 0 || rank > p) {
    std::ostringstream os;
    os << "truncate: rank " << rank << " outside [1, " << p << "]";
    throw Error(ErrorCode::kRange, os.str());
  }
  const std::size_t m = s.u.rows(), n = s.vt.cols();
  LowRankFactors f{Matrix(m, rank), Matrix(rank, n)};
  for (std::size_t k = 0; k < rank; ++k) {
    const double root = std::sqrt(s.sigma[k]);
    for (std::size_t i = 0; i < m; ++i) f.a(i, k) = s.u(i, k) * root;
    for (std::size_t j = 0; j < n; ++j) f.b(k, j) = root * s.vt(k, j);
  }
  return f;
}

double frobenius_error(const Matrix& w, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows() || a.rows() != w.rows() || b.cols() != w.cols()) {
    std::ostringstream os;
    os << "frobenius_error: w " << w.rows() << "x" << w.cols() << ", a "
       << a.rows() << "x" << a.cols() << ", b " << b.rows() << "x" << b.cols();
    throw Error(ErrorCode::kDimension, os.str());
  }
  return frobenius_norm(w - matmul(a, b));
}

double tail_norm(const std::vector<double>& sigma, std::size_t rank) {
  double s = 0.0;
  for (std::size_t i = rank; i < sigma.size(); ++i) s += sigma[i] * sigma[i];
  return std::sqrt(s);
}

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorCode::kDimension, "cholesky: matrix is not square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      std::ostringstream os;
      os << "cholesky: matrix not positive definite at pivot " << j;
      throw Error(ErrorCode::kNumerical, os.str());
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

Matrix inverse_lower_triangular(const Matrix& l) {
  const std::size_t n = l.rows();
  Matrix inv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    if (l(j, j) == 0.0)
      throw Error(ErrorCode::kNumerical, "inverse_lower_triangular: singular");
    inv(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s += l(i, k) * inv(k, j);
      inv(i, j) = -s / l(i, i);
    }
  }
  return inv;
}

}  // namespace welore
