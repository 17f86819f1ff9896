#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "stark/common.hpp"
#include "stark/numerics.hpp"

namespace stark {

struct MetricConfig {
  Index pca_components = 30;
  Index classifier_k = 9;
  Index overlap_k = 50;
  double log_scale = 1e4;

  void validate() const {
    if (pca_components < 1 || classifier_k < 1 || overlap_k < 1)
      throw validation_error("MetricConfig: counts must be at least 1");
    if (!(log_scale > 0.0)) throw validation_error("MetricConfig: log scale must be positive");
  }
};

/// Elementwise t -> log(1 + scale * t) on a nonnegative matrix.
inline Matrix log1p_scale(const Matrix& x, double scale) {
  if (x.size() > 0 && x.minCoeff() < 0.0)
    throw validation_error("log1p_scale: negative entries");
  return (x.array() * scale).log1p();
}

namespace detail {

/// Shared preprocessing for both graph metrics: log-transform each matrix,
/// fit PCA on the reference side, project both with the reference
/// eigenvectors while centering each matrix by its own mean.
inline std::pair<Matrix, Matrix> shared_pca_scores(const Matrix& f0, const Matrix& f_bar, Index r,
                                                   double scale) {
  const Matrix t0 = log1p_scale(f0, scale);
  const Matrix tb = log1p_scale(f_bar, scale);
  const Index r_eff = std::min(r, std::min(t0.rows(), t0.cols()));
  const PcaBasis basis = pca_fit(t0, r_eff);
  const Matrix z0 = pca_project(basis, t0);
  PcaBasis own_mean = basis;
  own_mean.mean = tb.colwise().mean();
  const Matrix zb = pca_project(own_mean, tb);
  return {z0, zb};
}

}  // namespace detail

/// Labels transferred from the original scores onto the denoised scores by a
/// k-nearest-neighbor majority vote. Vote ties break toward the label of the
/// nearest neighbor among the tied classes.
inline std::vector<int> label_transfer_predictions(const Matrix& f0, const std::vector<int>& labels,
                                                   const Matrix& f_bar,
                                                   const MetricConfig& cfg = {}) {
  cfg.validate();
  if (f0.rows() != f_bar.rows() || f0.cols() != f_bar.cols())
    throw validation_error("label_transfer: shape mismatch");
  if (static_cast<Index>(labels.size()) != f0.rows())
    throw validation_error("label_transfer: label count mismatch");
  const auto [z0, zb] = detail::shared_pca_scores(f0, f_bar, cfg.pca_components, cfg.log_scale);
  const Index k = std::min(cfg.classifier_k, z0.rows());
  const auto neighbors = knn_search(z0, zb, k);
  std::vector<int> predicted(static_cast<std::size_t>(zb.rows()), 0);
  for (Index i = 0; i < zb.rows(); ++i) {
    const auto& nn = neighbors[static_cast<std::size_t>(i)];
    std::map<int, Index> votes;
    for (const Index j : nn) ++votes[labels[static_cast<std::size_t>(j)]];
    Index best = 0;
    for (const auto& [label, count] : votes) best = std::max(best, count);
    for (const Index j : nn) {  // nearest-first scan among tied classes
      if (votes[labels[static_cast<std::size_t>(j)]] == best) {
        predicted[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(j)];
        break;
      }
    }
  }
  return predicted;
}

/// Fraction of pixels whose transferred label matches their own.
inline double label_transfer_accuracy(const Matrix& f0, const std::vector<int>& labels,
                                      const Matrix& f_bar, const MetricConfig& cfg = {}) {
  const auto predicted = label_transfer_predictions(f0, labels, f_bar, cfg);
  Index correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(f0.rows());
}

/// (1/m) <A0, Abar>_F for the directed k-NN adjacency matrices of the two
/// score sets; between 0 and overlap_k.
inline double knn_overlap(const Matrix& f0, const Matrix& f_bar, const MetricConfig& cfg = {}) {
  cfg.validate();
  if (f0.rows() != f_bar.rows() || f0.cols() != f_bar.cols())
    throw validation_error("knn_overlap: shape mismatch");
  if (cfg.overlap_k >= f0.rows())
    throw validation_error("knn_overlap: overlap_k must be below the pixel count");
  const auto [z0, zb] = detail::shared_pca_scores(f0, f_bar, cfg.pca_components, cfg.log_scale);
  const auto a0 = knn_search(z0, cfg.overlap_k);
  const auto ab = knn_search(zb, cfg.overlap_k);
  std::int64_t common = 0;
  std::vector<Index> row0, rowb;
  for (std::size_t i = 0; i < a0.size(); ++i) {
    row0 = a0[i];
    rowb = ab[i];
    std::sort(row0.begin(), row0.end());
    std::sort(rowb.begin(), rowb.end());
    std::vector<Index> inter;
    std::set_intersection(row0.begin(), row0.end(), rowb.begin(), rowb.end(),
                          std::back_inserter(inter));
    common += static_cast<std::int64_t>(inter.size());
  }
  return static_cast<double>(common) / static_cast<double>(f0.rows());
}

/// Frobenius ratio |F_bar - F0|_F / |F0|_F on the raw matrices.
inline double relative_error(const Matrix& f0, const Matrix& f_bar) {
  if (f0.rows() != f_bar.rows() || f0.cols() != f_bar.cols())
    throw validation_error("relative_error: shape mismatch");
  const double denom = f0.norm();
  if (denom <= 0.0) throw validation_error("relative_error: reference matrix has zero norm");
  return (f_bar - f0).norm() / denom;
}

}  // namespace stark
