// Copyright 2026 The gasso Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense linear algebra used throughout the fitter: thin SVD with a fixed
// sign convention, nuclear norm, principal angles, weighted ridge least
// squares, column centering and orthogonal-complement projection.

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gasso/common.hpp"

namespace gasso::numkit {

struct Svd {
  Matrix U;  // n x r, orthonormal columns
  Vector d;  // r, nonincreasing, nonnegative
  Matrix V;  // p x r, orthonormal columns
};

/// Flips each singular pair so the largest-magnitude entry of the V column
/// is positive. Ties in magnitude resolve to the first such entry.
inline void apply_sign_convention(Matrix& U, Matrix& V) {
  for (Index k = 0; k < V.cols(); ++k) {
    if (V.rows() == 0) break;
    Index arg = 0;
    double best = -1.0;
    for (Index j = 0; j < V.rows(); ++j) {
      const double a = std::abs(V(j, k));
      if (a > best) {
        best = a;
        arg = j;
      }
    }
    if (V(arg, k) < 0.0) {
      V.col(k) *= -1.0;
      if (k < U.cols()) U.col(k) *= -1.0;
    }
  }
}

/// Rank-r truncated SVD of a dense matrix.
inline Svd thin_svd(const Matrix& M, Index r) {
  if (r < 0 || r > std::min(M.rows(), M.cols())) {
    throw std::invalid_argument("thin_svd: rank " + std::to_string(r) +
                                " outside [0, min(rows, cols)]");
  }
  Svd out;
  if (r == 0) {
    out.U = Matrix::Zero(M.rows(), 0);
    out.d = Vector::Zero(0);
    out.V = Matrix::Zero(M.cols(), 0);
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.U = svd.matrixU().leftCols(r);
  out.d = svd.singularValues().head(r);
  out.V = svd.matrixV().leftCols(r);
  apply_sign_convention(out.U, out.V);
  return out;
}

/// Rank-r SVD of the product L * R^T without forming it. Exact for any
/// factor sizes; costs O((rows(L) + rows(R)) k^2) with k the inner width.
inline Svd lowrank_svd(const Matrix& L, const Matrix& R, Index r) {
  if (L.cols() != R.cols()) {
    throw std::invalid_argument("lowrank_svd: inner dimensions differ");
  }
  const Index k = L.cols();
  if (r < 0 || r > std::min(L.rows(), R.rows())) {
    throw std::invalid_argument("lowrank_svd: rank out of range");
  }
  Svd out;
  out.U = Matrix::Zero(L.rows(), r);
  out.d = Vector::Zero(r);
  out.V = Matrix::Zero(R.rows(), r);
  if (r == 0) return out;
  if (k == 0) {
    // Zero product: any orthonormal pair with zero singular values.
    out.U = Matrix::Identity(L.rows(), r);
    out.V = Matrix::Identity(R.rows(), r);
    return out;
  }
  const Index kl = std::min(L.rows(), k);
  const Index kr = std::min(R.rows(), k);
  Eigen::HouseholderQR<Matrix> ql(L);
  Eigen::HouseholderQR<Matrix> qr(R);
  const Matrix Ql = ql.householderQ() * Matrix::Identity(L.rows(), kl);
  const Matrix Qr = qr.householderQ() * Matrix::Identity(R.rows(), kr);
  const Matrix Rl = ql.matrixQR().topRows(kl).template triangularView<Eigen::Upper>();
  const Matrix Rr = qr.matrixQR().topRows(kr).template triangularView<Eigen::Upper>();
  const Matrix core = Rl * Rr.transpose();  // kl x kr
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Index avail = std::min(kl, kr);
  const Index take = std::min(avail, r);
  out.U.leftCols(take) = Ql * svd.matrixU().leftCols(take);
  out.V.leftCols(take) = Qr * svd.matrixV().leftCols(take);
  out.d.head(take) = svd.singularValues().head(take);
  if (take < r) {
    // Requested rank exceeds the product's inner width: complete both
    // bases with orthonormal directions carrying zero singular values.
    auto complete = [](const Matrix& Q, Index have, Index want) {
      Matrix full = Matrix::Zero(Q.rows(), want);
      full.leftCols(have) = Q.leftCols(have);
      Matrix cand = Matrix::Identity(Q.rows(), Q.rows());
      Index filled = have;
      for (Index j = 0; j < cand.cols() && filled < want; ++j) {
        Vector v = cand.col(j);
        for (int pass = 0; pass < 2; ++pass) {
          v -= full.leftCols(filled) * (full.leftCols(filled).transpose() * v);
        }
        const double nv = v.norm();
        if (nv > 1e-8) full.col(filled++) = v / nv;
      }
      return full;
    };
    out.U = complete(out.U, take, r);
    out.V = complete(out.V, take, r);
  }
  apply_sign_convention(out.U, out.V);
  return out;
}

inline Vector singular_values(const Matrix& M) {
  if (M.size() == 0) return Vector::Zero(0);
  Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues();
}

inline double nuclear_norm(const Matrix& M) { return singular_values(M).sum(); }

/// Orthonormal basis of col(M) via column-pivoted QR. Columns whose pivot
/// falls below rel_tol * largest pivot are treated as dependent.
inline Matrix orthonormal_basis(const Matrix& M, double rel_tol = 1e-10) {
  if (M.cols() == 0) return Matrix::Zero(M.rows(), 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  qr.setThreshold(rel_tol);
  const Index rank = qr.rank();
  return qr.householderQ() * Matrix::Identity(M.rows(), rank);
}

/// Largest principal angle between col(A) and col(B), in degrees. When the
/// dimensions differ, the angle is taken over the min(dim) canonical pairs.
inline double principal_angle(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows()) {
    throw std::invalid_argument("principal_angle: row counts differ");
  }
  if (A.cols() == 0 || B.cols() == 0) {
    throw std::invalid_argument("principal_angle: empty subspace");
  }
  Eigen::ColPivHouseholderQR<Matrix> qa(A), qb(B);
  qa.setThreshold(1e-10);
  qb.setThreshold(1e-10);
  if (qa.rank() < A.cols() || qb.rank() < B.cols()) {
    throw std::invalid_argument("principal_angle: rank-deficient input");
  }
  Matrix Qa = qa.householderQ() * Matrix::Identity(A.rows(), A.cols());
  Matrix Qb = qb.householderQ() * Matrix::Identity(B.rows(), B.cols());
  if (Qa.cols() < Qb.cols()) std::swap(Qa, Qb);
  // Qb spans the smaller subspace. cos = smallest singular value of Qa'Qb,
  // sin = largest singular value of the residual of Qb off col(Qa).
  const Vector c = singular_values(Qa.transpose() * Qb);
  const Matrix resid = Qb - Qa * (Qa.transpose() * Qb);
  const Vector s = singular_values(resid);
  const double cosv = std::clamp(c.minCoeff(), 0.0, 1.0);
  const double sinv = std::clamp(s.size() ? s.maxCoeff() : 0.0, 0.0, 1.0);
  return std::atan2(sinv, cosv) * 180.0 / std::numbers::pi;
}

/// argmin_b ||W^{1/2}(y - X b)||^2 + n * lambda * ||b||^2 with n = rows(X).
/// Solved through the normal equations; with a numerically singular system
/// the minimum-norm solution is returned.
inline Vector weighted_ridge_ls(const Matrix& X, const Vector& y,
                                const Vector& w, double lambda) {
  if (X.rows() != y.size() || X.rows() != w.size()) {
    throw std::invalid_argument("weighted_ridge_ls: dimension mismatch");
  }
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw std::invalid_argument("weighted_ridge_ls: lambda must be >= 0");
  }
  if ((w.array() < 0.0).any()) {
    throw std::invalid_argument("weighted_ridge_ls: negative weight");
  }
  if (!(w.array() > 0.0).any()) {
    throw std::domain_error("weighted_ridge_ls: all weights are zero");
  }
  const Index q = X.cols();
  if (q == 0) return Vector::Zero(0);
  Matrix G = X.transpose() * w.asDiagonal() * X;
  G.diagonal().array() += static_cast<double>(X.rows()) * lambda;
  const Vector rhs = X.transpose() * (w.array() * y.array()).matrix();
  Eigen::LDLT<Matrix> ldlt(G);
  const Vector piv = ldlt.vectorD().cwiseAbs();
  const double dmax = piv.maxCoeff();
  if (ldlt.info() == Eigen::Success && dmax > 0.0 &&
      piv.minCoeff() >= 1e-12 * dmax && (ldlt.vectorD().array() > 0.0).all()) {
    return ldlt.solve(rhs);
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(G);
  cod.setThreshold(1e-12);
  return cod.solve(rhs);
}

struct Centered {
  Matrix Mc;
  Vector means;
};

inline Centered center_columns(const Matrix& M) {
  if (M.rows() < 1) throw std::invalid_argument("center_columns: no rows");
  Centered c;
  c.means = M.colwise().mean().transpose();
  c.Mc = M.rowwise() - c.means.transpose();
  return c;
}

/// (I - Q Q^T) M with Q an orthonormal basis of col(basis).
inline Matrix project_complement(const Matrix& M, const Matrix& basis) {
  if (M.rows() != basis.rows()) {
    throw std::invalid_argument("project_complement: row counts differ");
  }
  const Matrix Q = orthonormal_basis(basis);
  Matrix out = M - Q * (Q.transpose() * M);
  // Second pass removes the rounding residue of the first.
  out -= Q * (Q.transpose() * out);
  return out;
}

}  // namespace gasso::numkit
