#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stark/common.hpp"
#include "stark/graph.hpp"
#include "stark/kernel.hpp"
#include "stark/numerics.hpp"

namespace stark {

struct Hyperparameters {
  double length_scale = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double tau = 0.0;
  double lambda = 0.0;
  double omega = 0.0;
  // Decomposition lambda = alpha * lambda_rel, omega = alpha * omega_rel as
  // resolved by autotune; informational when lambda/omega were set directly.
  double alpha = 0.0;
  double lambda_rel = 0.0;
  double omega_rel = 0.0;
  double p_target = 0.7;
  int iterations = 7;

  void validate() const {
    if (!(length_scale > 0.0)) throw validation_error("Hyperparameters: length scale must be positive");
    if (!(s1 > 0.0) || !(s2 > 0.0)) throw validation_error("Hyperparameters: s1 and s2 must be positive");
    if (!(tau > 0.0)) throw validation_error("Hyperparameters: tau must be positive");
    if (!(lambda > 0.0)) throw validation_error("Hyperparameters: lambda must be positive");
    if (!(omega >= 0.0)) throw validation_error("Hyperparameters: omega must be nonnegative");
    if (iterations < 1) throw validation_error("Hyperparameters: iteration count must be at least 1");
  }
};

struct HyperparameterOverrides {
  std::optional<double> length_scale;
  std::optional<double> s1;
  std::optional<double> s2;
  std::optional<double> tau;
  std::optional<double> lambda;
  std::optional<double> omega;
  std::optional<double> alpha;
  std::optional<double> lambda_rel;
  std::optional<double> omega_rel;
  std::optional<double> p_target;
  std::optional<int> iterations;
};

namespace detail {

/// Positive-eigenvalue subspace of the kernel matrix; eigenvalues at or below
/// rel_tol * lambda_max count as zero, mirroring pseudoinverse semantics.
struct KernelRange {
  Matrix vr;   // m x r orthonormal columns
  Vector lam;  // r positive eigenvalues, descending
};

inline KernelRange kernel_range(const EigenDecomposition& eig, double rel_tol = 1e-10) {
  const Index n = eig.eigenvalues.size();
  const double lam_max = n > 0 ? eig.eigenvalues(0) : 0.0;
  Index rank = 0;
  while (rank < n && eig.eigenvalues(rank) > rel_tol * lam_max) ++rank;
  KernelRange out;
  out.vr = eig.eigenvectors.leftCols(rank);
  out.lam = eig.eigenvalues.head(rank);
  return out;
}

/// Coefficient solve on the range of K: minimizes the finite objective at
/// fixed weights. In the eigenbasis the system matrix is
/// Lam^2 + lambda Lam + omega Lam (Vr^T L Vr) Lam, symmetric positive definite.
/// Returns the reduced solution A with theta = Vr A and F = sqrt(m) Vr Lam A.
inline Matrix solve_theta_reduced(const KernelRange& kr, const Matrix& y,
                                  const EffectiveLaplacian& lap, double lambda, double omega) {
  const Index r = kr.lam.size();
  Matrix system = Matrix::Zero(r, r);
  system.diagonal() = kr.lam.array().square() + lambda * kr.lam.array();
  if (omega != 0.0) {
    Matrix g = kr.vr.transpose() * (lap.matrix * kr.vr);
    g = 0.5 * (g + g.transpose()).eval();
    system.noalias() += omega * (kr.lam.asDiagonal() * g * kr.lam.asDiagonal());
  }
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(kr.vr.rows()));
  const Matrix rhs = inv_sqrt_m * (kr.lam.asDiagonal() * (kr.vr.transpose() * y));
  Eigen::LDLT<Matrix> ldlt(system);
  if (ldlt.info() != Eigen::Success)
    throw numerical_error("theta update: system factorization failed");
  Matrix a = ldlt.solve(rhs);
  const double grad_norm = 2.0 * (system * a - rhs).norm();
  if (grad_norm > 1e-6 * (1.0 + y.norm()))
    throw numerical_error("theta update: projected gradient norm " + std::to_string(grad_norm) +
                          " exceeds tolerance");
  return a;
}

}  // namespace detail

/// Finite-dimensional objective
///   (1/m) |Y - sqrt(m) K theta|_F^2 + lambda tr(theta^T K theta)
///   + omega [ tr(theta^T K L K theta) + E(W) ].
inline double objective(const Matrix& theta, const WeightMatrix& w, const Matrix& y,
                        const KernelMatrix& k, const Hyperparameters& hp) {
  const Index m = k.m();
  if (theta.rows() != m || y.rows() != m || theta.cols() != y.cols() || w.m() != m)
    throw validation_error("objective: shape mismatch");
  const Matrix kt = k.k * theta;
  const double sqrt_m = std::sqrt(static_cast<double>(m));
  const double data = (y - sqrt_m * kt).squaredNorm() / static_cast<double>(m);
  const double ridge = hp.lambda * theta.cwiseProduct(kt).sum();
  if (hp.omega == 0.0) return data + ridge;
  const EffectiveLaplacian lap = effective_laplacian(w);
  const double smooth = lap.quad_form(kt);
  const double entropy = graph_entropy(w, k.pixels, hp.s1, hp.s2);
  return data + ridge + hp.omega * (smooth + entropy);
}

/// Closed-form coefficient update: the unique minimizer of the finite
/// objective at fixed weights over the column space of K, computed as in the
/// pseudoinverse formula but factored on the cached kernel eigenbasis.
inline Matrix theta_update(const Matrix& y, const KernelMatrix& k, const WeightMatrix& w,
                           const Hyperparameters& hp) {
  hp.validate();
  if (y.rows() != k.m() || w.m() != k.m()) throw validation_error("theta_update: shape mismatch");
  const detail::KernelRange kr = detail::kernel_range(k.eig);
  const EffectiveLaplacian lap = effective_laplacian(w);
  const Matrix a = detail::solve_theta_reduced(kr, y, lap, hp.lambda, hp.omega);
  return kr.vr * a;
}

struct FitTrace {
  std::vector<double> objective_values;  // J at (theta^t, W^t), t = 1..N
  std::vector<double> iterate_shift;     // |F^{t+1} - F^t| in the RKHS norm, F^0 = 0
};

/// Result of a fit: an image evaluable anywhere through its kernel expansion.
struct DenoisedModel {
  Matrix coefficients;  // m x d
  PixelSet pixels;
  KernelConfig kernel;
  WeightMatrix weights;  // final iterate
  FitTrace trace;
};

struct FitVariant {
  enum class Kind { kAdaptive, kSpatial, kOracle };
  Kind kind = Kind::kAdaptive;
  Matrix oracle_truth;  // ground-truth rows at the pixels, oracle variant only

  static FitVariant adaptive() { return {Kind::kAdaptive, {}}; }
  static FitVariant spatial() { return {Kind::kSpatial, {}}; }
  static FitVariant oracle(Matrix f_star) { return {Kind::kOracle, std::move(f_star)}; }
};

/// Precomputed per-pixel-set state shared across fits: kernel matrix with its
/// eigendecomposition, edge set, and the kernel range factorization.
struct FitContext {
  PixelSet pixels;
  KernelConfig kernel;
  KernelMatrix k;
  std::shared_ptr<const EdgeSet> edges;
  detail::KernelRange range;

  Index m() const { return k.m(); }
};

inline FitContext make_fit_context(const PixelSet& pixels, const KernelConfig& cfg, double tau) {
  FitContext ctx;
  ctx.pixels = pixels;
  ctx.kernel = cfg;
  ctx.k = kernel_matrix(cfg, pixels);
  ctx.edges = std::make_shared<const EdgeSet>(build_edge_set(pixels, tau));
  ctx.range = detail::kernel_range(ctx.k.eig);
  return ctx;
}

namespace detail {

inline double rkhs_norm_sq(const Matrix& delta_theta, const Matrix& k) {
  return std::max(0.0, delta_theta.cwiseProduct(k * delta_theta).sum());
}

}  // namespace detail

inline DenoisedModel fit_with_context(const FitContext& ctx, const Matrix& y,
                                      const Hyperparameters& hp, const FitVariant& variant) {
  hp.validate();
  const Index m = ctx.m();
  if (y.rows() != m) throw validation_error("fit: Y row count does not match pixel count");
  if (y.size() > 0 && y.minCoeff() < 0.0) throw validation_error("fit: Y has negative entries");
  const double sqrt_m = std::sqrt(static_cast<double>(m));

  DenoisedModel model;
  model.pixels = ctx.pixels;
  model.kernel = ctx.kernel;

  const WeightMatrix w0 = spatial_weights(ctx.edges, ctx.pixels, hp.s2);
  const auto solve_f = [&](const WeightMatrix& w) {
    const EffectiveLaplacian lap = effective_laplacian(w);
    const Matrix a = detail::solve_theta_reduced(ctx.range, y, lap, hp.lambda, hp.omega);
    Matrix theta = ctx.range.vr * a;
    Matrix f = sqrt_m * (ctx.range.vr * (ctx.range.lam.asDiagonal() * a));
    return std::make_pair(std::move(theta), std::move(f));
  };

  if (variant.kind == FitVariant::Kind::kSpatial || variant.kind == FitVariant::Kind::kOracle) {
    WeightMatrix w = w0;
    if (variant.kind == FitVariant::Kind::kOracle) {
      if (variant.oracle_truth.rows() != m || variant.oracle_truth.cols() != y.cols())
        throw validation_error("fit: oracle truth shape mismatch");
      w = update_weights(variant.oracle_truth, ctx.edges, ctx.pixels, hp.s1, hp.s2);
    }
    auto [theta, f] = solve_f(w);
    model.trace.objective_values.push_back(objective(theta, w, y, ctx.k, hp));
    model.trace.iterate_shift.push_back(std::sqrt(detail::rkhs_norm_sq(theta, ctx.k.k)));
    model.coefficients = std::move(theta);
    model.weights = std::move(w);
    return model;
  }

  WeightMatrix w = w0;
  Matrix theta_prev = Matrix::Zero(m, y.cols());
  Matrix theta;
  for (int t = 0; t < hp.iterations; ++t) {
    auto [theta_next, f] = solve_f(w);
    theta = std::move(theta_next);
    w = update_weights(f, ctx.edges, ctx.pixels, hp.s1, hp.s2);
    model.trace.objective_values.push_back(objective(theta, w, y, ctx.k, hp));
    model.trace.iterate_shift.push_back(
        std::sqrt(detail::rkhs_norm_sq(theta - theta_prev, ctx.k.k)));
    theta_prev = theta;
  }
  model.coefficients = std::move(theta);
  model.weights = std::move(w);
  return model;
}

inline DenoisedModel fit(const Matrix& y, const PixelSet& pixels, const Hyperparameters& hp,
                         const FitVariant& variant,
                         KernelFamily family = KernelFamily::kExponential, double nu = 0.5) {
  hp.validate();
  const FitContext ctx = make_fit_context(pixels, KernelConfig{family, hp.length_scale, nu}, hp.tau);
  return fit_with_context(ctx, y, hp, variant);
}

/// Kernel expansion at arbitrary planar points; no simplex thresholding.
inline Matrix evaluate(const DenoisedModel& model, const PixelSet& queries) {
  const Index m = model.coefficients.rows();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix out(static_cast<Index>(queries.size()), model.coefficients.cols());
  Eigen::RowVectorXd kvec(m);
  for (Index j = 0; j < out.rows(); ++j) {
    for (Index i = 0; i < m; ++i) {
      kvec(i) = kernel_eval(model.kernel, model.pixels[static_cast<std::size_t>(i)],
                            queries[static_cast<std::size_t>(j)]);
    }
    out.row(j) = inv_sqrt_m * (kvec * model.coefficients);
  }
  return out;
}

struct SimplexDiagnostics {
  Index degenerate_rows = 0;  // rows with no positive entry, mapped to uniform
};

/// Rowwise map onto the simplex: clamp negatives to zero, divide by the l1
/// norm. Rows with no positive mass become uniform and are counted.
inline Matrix simplex_threshold(const Matrix& x, SimplexDiagnostics* diag = nullptr) {
  Matrix out = x.cwiseMax(0.0);
  const double uniform = 1.0 / static_cast<double>(x.cols());
  for (Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0.0) {
      out.row(i) /= s;
    } else {
      out.row(i).setConstant(uniform);
      if (diag != nullptr) ++diag->degenerate_rows;
    }
  }
  return out;
}

/// Hyperparameter heuristics: s2 = l, tau = 1.5 l, lambda_rel = |K|_op,
/// omega_rel = 6, N = 7; the overall strength alpha is found by bisection so
/// the spatial first iterate reaches the depth-matched fit level
/// p * mean(min(1/R_i, 1)); s1 is the 0.75 quantile of expression distances
/// across edges of that first iterate.
inline Hyperparameters autotune(const FitContext& ctx, const Matrix& y, const Vector& reads,
                                const HyperparameterOverrides& ov = {}) {
  const Index m = ctx.m();
  if (y.rows() != m) throw validation_error("autotune: Y row count does not match pixel count");
  if (reads.size() != m) throw validation_error("autotune: read count vector has wrong length");
  if (reads.size() > 0 && reads.minCoeff() < 0.0)
    throw validation_error("autotune: negative read count");

  Hyperparameters hp;
  hp.length_scale = ctx.kernel.length_scale;
  hp.s2 = ov.s2.value_or(hp.length_scale);
  hp.tau = ctx.edges->tau;
  hp.lambda_rel = ov.lambda_rel.value_or(ctx.k.operator_norm());
  hp.omega_rel = ov.omega_rel.value_or(6.0);
  hp.p_target = ov.p_target.value_or(0.7);
  hp.iterations = ov.iterations.value_or(7);
  if (!(hp.lambda_rel > 0.0)) throw numerical_error("autotune: kernel operator norm is not positive");
  if (!(hp.omega_rel >= 0.0)) throw validation_error("autotune: omega_rel must be nonnegative");

  const WeightMatrix w0 = spatial_weights(ctx.edges, ctx.pixels, hp.s2);
  const EffectiveLaplacian lap0 = effective_laplacian(w0);
  const double sqrt_m = std::sqrt(static_cast<double>(m));
  const auto first_iterate = [&](double lambda, double omega) {
    const Matrix a = detail::solve_theta_reduced(ctx.range, y, lap0, lambda, omega);
    return Matrix(sqrt_m * (ctx.range.vr * (ctx.range.lam.asDiagonal() * a)));
  };
  const auto fit_level = [&](const Matrix& f) {
    return (y - f).squaredNorm() / static_cast<double>(m);
  };

  if (ov.lambda && ov.omega) {
    hp.lambda = *ov.lambda;
    hp.omega = *ov.omega;
    hp.alpha = hp.lambda / hp.lambda_rel;
  } else if (ov.alpha) {
    hp.alpha = *ov.alpha;
    hp.lambda = hp.alpha * hp.lambda_rel;
    hp.omega = hp.alpha * hp.omega_rel;
  } else if (ov.lambda) {
    hp.lambda = *ov.lambda;
    hp.alpha = hp.lambda / hp.lambda_rel;
    hp.omega = hp.alpha * hp.omega_rel;
  } else if (ov.omega) {
    hp.omega = *ov.omega;
    hp.alpha = hp.omega_rel > 0.0 ? hp.omega / hp.omega_rel : 0.0;
    if (!(hp.alpha > 0.0)) throw validation_error("autotune: cannot infer alpha from omega alone");
    hp.lambda = hp.alpha * hp.lambda_rel;
  } else {
    double base = 0.0;
    for (Index i = 0; i < m; ++i)
      base += reads(i) >= 1.0 ? std::min(1.0 / reads(i), 1.0) : 1.0;
    base /= static_cast<double>(m);
    const double target = hp.p_target * base;
    const double tol = 0.01 * target;
    const auto fit_at = [&](double alpha) {
      return fit_level(first_iterate(alpha * hp.lambda_rel, alpha * hp.omega_rel));
    };
    double lo = 1e-6, hi = 1e6;
    double f_lo = fit_at(lo), f_hi = fit_at(hi);
    for (int tries = 0; f_lo > target && tries < 3; ++tries) {
      lo /= 10.0;
      f_lo = fit_at(lo);
    }
    for (int tries = 0; f_hi < target && tries < 3; ++tries) {
      hi *= 10.0;
      f_hi = fit_at(hi);
    }
    if (f_lo > target || f_hi < target) {
      throw numerical_error("autotune: bisection bracket failure, achieved fit range [" +
                            std::to_string(f_lo) + ", " + std::to_string(f_hi) + "] for target " +
                            std::to_string(target));
    }
    double alpha = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
      alpha = 0.5 * (lo + hi);
      const double f_mid = fit_at(alpha);
      if (std::abs(f_mid - target) <= tol) break;
      if (f_mid < target)
        lo = alpha;
      else
        hi = alpha;
    }
    hp.alpha = alpha;
    hp.lambda = alpha * hp.lambda_rel;
    hp.omega = alpha * hp.omega_rel;
  }

  if (ov.s1) {
    hp.s1 = *ov.s1;
  } else {
    const Matrix f1 = first_iterate(hp.lambda, hp.omega);
    std::vector<double> dists;
    for (Index i = 0; i < m; ++i) {
      for (const Index k : ctx.edges->neighbors[static_cast<std::size_t>(i)]) {
        if (k == i) continue;
        dists.push_back((f1.row(i) - f1.row(k)).norm());
      }
    }
    std::sort(dists.begin(), dists.end());
    double q = 0.0;
    if (!dists.empty()) {
      const double h = 0.75 * static_cast<double>(dists.size() - 1);
      const auto idx = static_cast<std::size_t>(h);
      q = dists[idx];
      if (idx + 1 < dists.size()) q += (h - static_cast<double>(idx)) * (dists[idx + 1] - dists[idx]);
    }
    hp.s1 = q > 0.0 ? q : 1.0;
  }

  Hyperparameters resolved = hp;
  resolved.validate();
  return resolved;
}

inline double resolve_length_scale(const PixelSet& pixels, const HyperparameterOverrides& ov) {
  return ov.length_scale ? *ov.length_scale : auto_length_scale(pixels, 7);
}

inline Hyperparameters autotune(const Matrix& y, const Vector& reads, const PixelSet& pixels,
                                const HyperparameterOverrides& ov = {},
                                KernelFamily family = KernelFamily::kExponential, double nu = 0.5) {
  const double l = resolve_length_scale(pixels, ov);
  const double tau = ov.tau.value_or(1.5 * l);
  const FitContext ctx = make_fit_context(pixels, KernelConfig{family, l, nu}, tau);
  return autotune(ctx, y, reads, ov);
}

}  // namespace stark
