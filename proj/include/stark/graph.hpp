#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <memory>
#include <vector>

#include "stark/common.hpp"

namespace stark {

/// Edge set of the tau-ball graph: all ordered pairs (i,k) with
/// |q_i - q_k| <= tau, self-loops included. Neighbor lists are sorted
/// ascending, which fixes a deterministic row-major edge order.
struct EdgeSet {
  double tau = 0.0;
  Index m = 0;
  std::vector<std::vector<Index>> neighbors;

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& row : neighbors) n += row.size();
    return n;
  }
};

inline EdgeSet build_edge_set(const PixelSet& pixels, double tau) {
  if (!(tau > 0.0)) throw validation_error("build_edge_set: tau must be positive");
  EdgeSet out;
  out.tau = tau;
  out.m = static_cast<Index>(pixels.size());
  out.neighbors.resize(pixels.size());
  for (Index i = 0; i < out.m; ++i) {
    auto& row = out.neighbors[static_cast<std::size_t>(i)];
    for (Index k = 0; k < out.m; ++k) {
      const double d = (pixels[static_cast<std::size_t>(i)] - pixels[static_cast<std::size_t>(k)]).norm();
      if (d <= tau) row.push_back(k);
    }
  }
  return out;
}

/// Row-stochastic weights supported on an EdgeSet (membership in the
/// constraint set: nonnegative, every row sums to one).
struct WeightMatrix {
  std::shared_ptr<const EdgeSet> edges;
  std::vector<std::vector<double>> values;

  Index m() const { return edges ? edges->m : 0; }

  double at(Index i, Index k) const {
    const auto& row = edges->neighbors[static_cast<std::size_t>(i)];
    const auto it = std::lower_bound(row.begin(), row.end(), k);
    if (it == row.end() || *it != k) return 0.0;
    return values[static_cast<std::size_t>(i)][static_cast<std::size_t>(it - row.begin())];
  }

  Matrix dense() const {
    Matrix out = Matrix::Zero(m(), m());
    for (Index i = 0; i < m(); ++i) {
      const auto& row = edges->neighbors[static_cast<std::size_t>(i)];
      for (std::size_t a = 0; a < row.size(); ++a)
        out(i, row[a]) = values[static_cast<std::size_t>(i)][a];
    }
    return out;
  }
};

/// Builds a WeightMatrix from a dense matrix that must vanish off the edge set.
inline WeightMatrix weights_from_dense(std::shared_ptr<const EdgeSet> edges, const Matrix& w) {
  if (w.rows() != edges->m || w.cols() != edges->m)
    throw validation_error("weights_from_dense: shape mismatch");
  WeightMatrix out;
  out.edges = std::move(edges);
  out.values.resize(static_cast<std::size_t>(w.rows()));
  Matrix seen = Matrix::Zero(w.rows(), w.cols());
  for (Index i = 0; i < w.rows(); ++i) {
    const auto& row = out.edges->neighbors[static_cast<std::size_t>(i)];
    auto& vals = out.values[static_cast<std::size_t>(i)];
    vals.reserve(row.size());
    for (const Index k : row) {
      vals.push_back(w(i, k));
      seen(i, k) = 1.0;
    }
  }
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index k = 0; k < w.cols(); ++k) {
      if (seen(i, k) == 0.0 && w(i, k) != 0.0)
        throw validation_error("weights_from_dense: nonzero entry off the edge set");
    }
  }
  return out;
}

namespace detail {

/// Gaussian edge weights, row-normalized. Passing a null expression pointer
/// drops the expression factor (the purely spatial initialization). Exponents
/// are clamped at -700 before exponentiation.
inline WeightMatrix gaussian_weights(std::shared_ptr<const EdgeSet> edges, const PixelSet& pixels,
                                     const Matrix* f, double s1, double s2) {
  WeightMatrix out;
  out.edges = std::move(edges);
  const Index m = out.edges->m;
  out.values.resize(static_cast<std::size_t>(m));
  const double inv_s2 = 1.0 / (s2 * s2);
  const double inv_s1 = f != nullptr ? 1.0 / (s1 * s1) : 0.0;
  for (Index i = 0; i < m; ++i) {
    const auto& row = out.edges->neighbors[static_cast<std::size_t>(i)];
    auto& vals = out.values[static_cast<std::size_t>(i)];
    vals.resize(row.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < row.size(); ++a) {
      const Index k = row[a];
      double expo = -(pixels[static_cast<std::size_t>(i)] - pixels[static_cast<std::size_t>(k)]).squaredNorm() * inv_s2;
      if (f != nullptr) expo -= (f->row(i) - f->row(k)).squaredNorm() * inv_s1;
      if (expo < -700.0) expo = -700.0;
      vals[a] = std::exp(expo);
      sum += vals[a];
    }
    for (auto& v : vals) v /= sum;
  }
  return out;
}

}  // namespace detail

/// Spatial-only weights: exp(-|q_k - q_i|^2 / s2^2) on edges, row-normalized.
/// This is both the iteration start and the fixed weights of the spatial variant.
inline WeightMatrix spatial_weights(std::shared_ptr<const EdgeSet> edges, const PixelSet& pixels,
                                    double s2) {
  if (!(s2 > 0.0)) throw validation_error("spatial_weights: s2 must be positive");
  return detail::gaussian_weights(std::move(edges), pixels, nullptr, 0.0, s2);
}

/// Closed-form weight update: exp(-|F_k - F_i|^2/s1^2) exp(-|q_k - q_i|^2/s2^2)
/// on edges, row-normalized. This is the exact minimizer of the weight block
/// of the objective over the constraint set.
inline WeightMatrix update_weights(const Matrix& f_values, std::shared_ptr<const EdgeSet> edges,
                                   const PixelSet& pixels, double s1, double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw validation_error("update_weights: scales must be positive");
  if (f_values.rows() != edges->m) throw validation_error("update_weights: row count mismatch");
  return detail::gaussian_weights(std::move(edges), pixels, &f_values, s1, s2);
}

/// Effective graph Laplacian (I + Diag(W^T e))/2 - (W + W^T)/2: the
/// unnormalized Laplacian of the symmetrized weights. Stored sparse; dense
/// materialization happens only on request.
struct EffectiveLaplacian {
  Eigen::SparseMatrix<double> matrix;

  Matrix dense() const { return Matrix(matrix); }

  /// tr(F^T L F)
  double quad_form(const Matrix& f) const {
    return (f.transpose() * (matrix * f)).trace();
  }
};

inline EffectiveLaplacian effective_laplacian(const WeightMatrix& w) {
  const Index m = w.m();
  Vector col_sums = Vector::Zero(m);
  for (Index i = 0; i < m; ++i) {
    const auto& row = w.edges->neighbors[static_cast<std::size_t>(i)];
    double row_sum = 0.0;
    for (std::size_t a = 0; a < row.size(); ++a) {
      const double v = w.values[static_cast<std::size_t>(i)][a];
      if (v < 0.0) throw validation_error("effective_laplacian: negative weight");
      row_sum += v;
      col_sums(row[a]) += v;
    }
    if (std::abs(row_sum - 1.0) > 1e-8)
      throw validation_error("effective_laplacian: row " + std::to_string(i) +
                             " sums to " + std::to_string(row_sum));
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(w.edges->edge_count() + static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const auto& row = w.edges->neighbors[static_cast<std::size_t>(i)];
    for (std::size_t a = 0; a < row.size(); ++a) {
      const Index k = row[a];
      const double v = w.values[static_cast<std::size_t>(i)][a];
      if (v != 0.0) {
        triplets.emplace_back(i, k, -0.5 * v);
        triplets.emplace_back(k, i, -0.5 * v);
      }
    }
    triplets.emplace_back(i, i, 0.5 * (1.0 + col_sums(i)));
  }
  EffectiveLaplacian out;
  out.matrix.resize(m, m);
  out.matrix.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

/// Graph entropy E(W): (1/2m) sum over edges of
/// s1^2 W (log W - 1) + (s1^2/s2^2) W |q_i - q_k|^2, with 0 log 0 = 0.
inline double graph_entropy(const WeightMatrix& w, const PixelSet& pixels, double s1, double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw validation_error("graph_entropy: scales must be positive");
  const Index m = w.m();
  if (static_cast<Index>(pixels.size()) != m) throw validation_error("graph_entropy: pixel count mismatch");
  const double s1sq = s1 * s1;
  const double ratio = s1sq / (s2 * s2);
  double sum = 0.0;
  for (Index i = 0; i < m; ++i) {
    const auto& row = w.edges->neighbors[static_cast<std::size_t>(i)];
    for (std::size_t a = 0; a < row.size(); ++a) {
      const double v = w.values[static_cast<std::size_t>(i)][a];
      if (v < 0.0) throw validation_error("graph_entropy: negative weight");
      const Index k = row[a];
      const double d2 =
          (pixels[static_cast<std::size_t>(i)] - pixels[static_cast<std::size_t>(k)]).squaredNorm();
      if (v > 0.0) sum += s1sq * v * (std::log(v) - 1.0);
      sum += ratio * v * d2;
    }
  }
  return sum / (2.0 * static_cast<double>(m));
}

}  // namespace stark
