#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "stark/common.hpp"

namespace stark {

/// Dense symmetric matrix, validated on construction: for every mirrored pair
/// the difference must stay within 1e-10 of the larger magnitude.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw validation_error("SymmetricMatrix: matrix is not square");
    for (Index i = 0; i < m_.rows(); ++i) {
      for (Index j = i + 1; j < m_.cols(); ++j) {
        const double a = m_(i, j);
        const double b = m_(j, i);
        const double tol = 1e-10 * std::max(std::abs(a), std::abs(b));
        if (std::abs(a - b) > tol) {
          throw validation_error("SymmetricMatrix: entries (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") differ by " + std::to_string(a - b));
        }
      }
    }
  }

  const Matrix& mat() const { return m_; }
  Index n() const { return m_.rows(); }

 private:
  Matrix m_;
};

/// Eigenvalues in descending order, eigenvectors as matching orthonormal columns.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
};

inline EigenDecomposition eig_sym(const SymmetricMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.mat());
  if (solver.info() != Eigen::Success) throw numerical_error("eig_sym: eigensolver failed");
  EigenDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// M^+ B from a precomputed decomposition; eigenvalues at or below
/// rel_tol * lambda_max count as zero, matching Moore-Penrose semantics on the
/// numerical range of M.
inline Matrix psd_pinv_apply(const EigenDecomposition& ed, const Matrix& b, double rel_tol = 1e-10) {
  const Index n = ed.eigenvalues.size();
  if (b.rows() != n) throw validation_error("psd_pinv_apply: dimension mismatch");
  const double lam_max = n > 0 ? ed.eigenvalues(0) : 0.0;
  if (lam_max <= 0.0) return Matrix::Zero(n, b.cols());
  Index rank = 0;
  while (rank < n && ed.eigenvalues(rank) > rel_tol * lam_max) ++rank;
  const auto vr = ed.eigenvectors.leftCols(rank);
  const Matrix proj = vr.transpose() * b;
  return vr * (ed.eigenvalues.head(rank).cwiseInverse().asDiagonal() * proj);
}

inline Matrix psd_pinv_apply(const SymmetricMatrix& m, const Matrix& b, double rel_tol = 1e-10) {
  const EigenDecomposition ed = eig_sym(m);
  const Index n = ed.eigenvalues.size();
  if (n > 0) {
    const double op_norm =
        std::max(std::abs(ed.eigenvalues(0)), std::abs(ed.eigenvalues(n - 1)));
    if (ed.eigenvalues(n - 1) < -1e-10 * op_norm) {
      throw numerical_error("psd_pinv_apply: matrix is not PSD, eigenvalue " +
                            std::to_string(ed.eigenvalues(n - 1)));
    }
  }
  return psd_pinv_apply(ed, b, rel_tol);
}

/// Column mean plus top-r right singular directions of the centered data.
struct PcaBasis {
  Vector mean;
  Matrix components;  // d x r, orthonormal columns
  Index r = 0;
};

/// Thin SVD of the centered matrix. Sign convention: the largest-magnitude
/// entry of each component is positive.
inline PcaBasis pca_fit(const Matrix& x, Index r) {
  const Index m = x.rows();
  const Index d = x.cols();
  if (r < 1 || r > std::min(m, d))
    throw validation_error("pca_fit: component count out of range");
  PcaBasis basis;
  basis.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - basis.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  basis.components = svd.matrixV().leftCols(r);
  basis.r = r;
  for (Index j = 0; j < r; ++j) {
    Index arg = 0;
    basis.components.col(j).cwiseAbs().maxCoeff(&arg);
    if (basis.components(arg, j) < 0.0) basis.components.col(j) = -basis.components.col(j);
  }
  return basis;
}

/// Scores of X against the basis, centered by the basis mean.
inline Matrix pca_project(const PcaBasis& basis, const Matrix& x) {
  if (x.cols() != basis.mean.size())
    throw validation_error("pca_project: column count does not match basis dimension");
  return (x.rowwise() - basis.mean.transpose()) * basis.components;
}

namespace detail {

inline std::vector<Index> knn_row(const Matrix& points, const Eigen::RowVectorXd& query, Index k,
                                  Index exclude) {
  const Index n = points.rows();
  std::vector<std::pair<double, Index>> dist;
  dist.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    if (j == exclude) continue;
    dist.emplace_back((points.row(j) - query).squaredNorm(), j);
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::vector<Index> out(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) out[static_cast<std::size_t>(j)] = dist[static_cast<std::size_t>(j)].second;
  return out;
}

}  // namespace detail

/// Exact brute-force k-nearest neighbors of each query among `points`
/// (distinct sets; a query equal to a point matches it at distance zero).
/// Ties break toward the smaller index.
inline std::vector<std::vector<Index>> knn_search(const Matrix& points, const Matrix& queries,
                                                  Index k) {
  if (k < 1) throw validation_error("knn_search: k must be at least 1");
  if (k > points.rows()) throw validation_error("knn_search: k exceeds candidate count");
  if (points.cols() != queries.cols()) throw validation_error("knn_search: dimension mismatch");
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(queries.rows()));
  for (Index i = 0; i < queries.rows(); ++i)
    out[static_cast<std::size_t>(i)] = detail::knn_row(points, queries.row(i), k, -1);
  return out;
}

/// Self-query variant: neighbors of each point within its own set, self excluded.
inline std::vector<std::vector<Index>> knn_search(const Matrix& points, Index k) {
  if (k < 1) throw validation_error("knn_search: k must be at least 1");
  if (k > points.rows() - 1) throw validation_error("knn_search: k exceeds candidate count");
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i)
    out[static_cast<std::size_t>(i)] = detail::knn_row(points, points.row(i), k, i);
  return out;
}

}  // namespace stark
