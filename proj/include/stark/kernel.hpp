#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stark/common.hpp"
#include "stark/numerics.hpp"

namespace stark {

enum class KernelFamily { kExponential, kMatern };

/// Kernel family and length scale. Matern smoothness 1/2, 3/2 and 5/2 use
/// closed forms; other values go through the modified Bessel function and are
/// considered experimental.
struct KernelConfig {
  KernelFamily family = KernelFamily::kExponential;
  double length_scale = 1.0;
  double nu = 0.5;

  void validate() const {
    if (!(length_scale > 0.0)) throw validation_error("KernelConfig: length scale must be positive");
    if (family == KernelFamily::kMatern && !(nu > 0.0))
      throw validation_error("KernelConfig: Matern smoothness must be positive");
  }
};

inline double kernel_eval(const KernelConfig& cfg, const Point& a, const Point& b) {
  cfg.validate();
  const double r = (a - b).norm();
  if (cfg.family == KernelFamily::kExponential) return std::exp(-r / cfg.length_scale);
  if (r == 0.0) return 1.0;
  const double nu = cfg.nu;
  const double s = r / cfg.length_scale;
  if (nu == 0.5) return std::exp(-s);
  if (nu == 1.5) {
    const double x = std::sqrt(3.0) * s;
    return (1.0 + x) * std::exp(-x);
  }
  if (nu == 2.5) {
    const double x = std::sqrt(5.0) * s;
    return (1.0 + x + x * x / 3.0) * std::exp(-x);
  }
  const double x = std::sqrt(2.0 * nu) * s;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

/// Cached kernel matrix [K(q_i,q_k)/m] together with its eigendecomposition.
/// The decomposition backs both the PSD invariant check and the solver, which
/// factors the system on the numerical range of this matrix.
struct KernelMatrix {
  Matrix k;
  PixelSet pixels;
  EigenDecomposition eig;

  Index m() const { return k.rows(); }
  double operator_norm() const { return eig.eigenvalues.size() > 0 ? eig.eigenvalues(0) : 0.0; }
};

inline KernelMatrix kernel_matrix(const KernelConfig& cfg, const PixelSet& pixels) {
  cfg.validate();
  const Index m = static_cast<Index>(pixels.size());
  if (m < 1) throw validation_error("kernel_matrix: empty pixel set");
  for (const auto& q : pixels) {
    if (!q.allFinite()) throw validation_error("kernel_matrix: non-finite pixel coordinate");
  }
  KernelMatrix out;
  out.pixels = pixels;
  out.k.resize(m, m);
  const double scale = 1.0 / static_cast<double>(m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = i; j < m; ++j) {
      const double v =
          scale * kernel_eval(cfg, pixels[static_cast<std::size_t>(i)], pixels[static_cast<std::size_t>(j)]);
      out.k(i, j) = v;
      out.k(j, i) = v;
    }
  }
  out.eig = eig_sym(SymmetricMatrix(out.k));
  const double lam_max = out.eig.eigenvalues(0);
  const double lam_min = out.eig.eigenvalues(m - 1);
  if (lam_min < -1e-8 * lam_max)
    throw numerical_error("kernel_matrix: matrix is not PSD, eigenvalue " + std::to_string(lam_min));
  return out;
}

/// Radius at which pixels have `target_neighbors` other pixels within reach on
/// average. The neighbor count uses strictly positive distances and <=; the
/// radius comes from bisection over the sorted pairwise distances, returning
/// the exact jump distance whenever the average is attained exactly there.
inline double auto_length_scale(const PixelSet& pixels, int target_neighbors = 7) {
  const Index m = static_cast<Index>(pixels.size());
  if (m < 2) throw validation_error("auto_length_scale: need at least two pixels");
  if (target_neighbors < 1) throw validation_error("auto_length_scale: target must be at least 1");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(m) * (static_cast<std::size_t>(m) - 1) / 2);
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) {
      const double d = (pixels[static_cast<std::size_t>(i)] - pixels[static_cast<std::size_t>(j)]).norm();
      if (d > 0.0) dists.push_back(d);
    }
  }
  if (dists.empty()) throw validation_error("auto_length_scale: all pixels coincide");
  std::sort(dists.begin(), dists.end());
  const double d_max = dists.back();
  // 2 * (pairs within radius) == target * m  <=>  mean neighbor count == target
  const auto scaled_count = [&](double radius) {
    const auto it = std::upper_bound(dists.begin(), dists.end(), radius);
    return 2 * static_cast<std::int64_t>(it - dists.begin());
  };
  const std::int64_t want = static_cast<std::int64_t>(target_neighbors) * m;
  if (scaled_count(d_max) < want)
    throw validation_error("auto_length_scale: target neighbor count is unattainable");
  double lo = 0.0;
  double hi = d_max;
  const double tol = 1e-9 * d_max;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (scaled_count(mid) >= want)
      hi = mid;
    else
      lo = mid;
  }
  return scaled_count(hi) == want ? hi : lo;
}

}  // namespace stark
