#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "stark/common.hpp"
#include "stark/rng.hpp"

namespace stark {

enum class NoiseFamily { kMultinomial, kPoisson };

/// Two-step sequencing noise model: reads per pixel are Multinomial(R, u)
/// (or independent Poisson(u_i R)), then each pixel's expression is the
/// empirical frequency vector of R_i draws from its ground-truth profile.
struct NoiseModelConfig {
  std::int64_t total_reads = 0;
  Vector sampling_frequencies;  // length m, simplex
  NoiseFamily family = NoiseFamily::kMultinomial;
  std::uint64_t seed = 0;

  void validate() const {
    if (total_reads < 0) throw validation_error("NoiseModelConfig: total reads must be nonnegative");
    if (sampling_frequencies.size() < 1)
      throw validation_error("NoiseModelConfig: sampling frequencies are empty");
    if (sampling_frequencies.minCoeff() < 0.0)
      throw validation_error("NoiseModelConfig: negative sampling frequency");
    if (std::abs(sampling_frequencies.sum() - 1.0) > 1e-12)
      throw validation_error("NoiseModelConfig: sampling frequencies must sum to 1");
  }

  static Vector uniform_frequencies(Index m) {
    return Vector::Constant(m, 1.0 / static_cast<double>(m));
  }
};

struct SyntheticImage {
  PixelSet pixels;
  Matrix f_star;            // rows in the simplex
  std::vector<int> labels;  // region id per pixel
};

/// Piecewise-smooth ground truth on a regular grid: regions are Voronoi cells
/// of seeded random centers, each carrying a Dirichlet-sampled profile;
/// profiles blend across boundaries with a logistic transition of width
/// 1/sharpness.
inline SyntheticImage make_synthetic(Index width, Index height, Index genes, Index regions,
                                     double sharpness, std::uint64_t seed) {
  if (width < 1 || height < 1) throw validation_error("make_synthetic: grid must be nonempty");
  if (regions < 1 || genes < regions)
    throw validation_error("make_synthetic: need d >= regions >= 1");
  if (!(sharpness > 0.0)) throw validation_error("make_synthetic: sharpness must be positive");
  Rng root(seed);
  Rng center_rng = root.stream(0);
  Rng profile_rng = root.stream(1);

  std::vector<Point> centers(static_cast<std::size_t>(regions));
  for (auto& c : centers) {
    c.x() = center_rng.next_double() * static_cast<double>(width - 1);
    c.y() = center_rng.next_double() * static_cast<double>(height - 1);
  }
  Matrix profiles(regions, genes);
  for (Index j = 0; j < regions; ++j)
    profiles.row(j) = profile_rng.dirichlet(genes, 0.5).transpose();

  SyntheticImage out;
  out.pixels.reserve(static_cast<std::size_t>(width * height));
  out.f_star.resize(width * height, genes);
  out.labels.resize(static_cast<std::size_t>(width * height));
  Index p = 0;
  for (Index yy = 0; yy < height; ++yy) {
    for (Index xx = 0; xx < width; ++xx, ++p) {
      const Point q(static_cast<double>(xx), static_cast<double>(yy));
      out.pixels.push_back(q);
      double d_min = std::numeric_limits<double>::infinity();
      Index nearest = 0;
      Vector dist(regions);
      for (Index j = 0; j < regions; ++j) {
        dist(j) = (q - centers[static_cast<std::size_t>(j)]).norm();
        if (dist(j) < d_min) {
          d_min = dist(j);
          nearest = j;
        }
      }
      out.labels[static_cast<std::size_t>(p)] = static_cast<int>(nearest);
      Vector blend(regions);
      double sum = 0.0;
      for (Index j = 0; j < regions; ++j) {
        blend(j) = std::exp(-sharpness * (dist(j) - d_min));
        sum += blend(j);
      }
      out.f_star.row(p) = (blend / sum).transpose() * profiles;
    }
  }
  return out;
}

/// Reads per pixel under the configured family; deterministic in the seed.
inline std::vector<std::int64_t> sample_reads(const NoiseModelConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).stream(0x52454144u);  // reads stream
  if (cfg.family == NoiseFamily::kMultinomial)
    return rng.multinomial(cfg.total_reads, cfg.sampling_frequencies);
  std::vector<std::int64_t> out(static_cast<std::size_t>(cfg.sampling_frequencies.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng pixel = rng.stream(i);
    out[i] = pixel.poisson(cfg.sampling_frequencies(static_cast<Index>(i)) *
                           static_cast<double>(cfg.total_reads));
  }
  return out;
}

namespace detail {

inline void check_simplex_rows(const Matrix& f_star, double tol) {
  for (Index i = 0; i < f_star.rows(); ++i) {
    if (f_star.row(i).minCoeff() < -tol || std::abs(f_star.row(i).sum() - 1.0) > tol)
      throw validation_error("sample_expression: row " + std::to_string(i) +
                             " of the profile matrix is not in the simplex");
  }
}

}  // namespace detail

/// Integer gene counts: pixel i receives reads[i] multinomial draws from its
/// profile row, sampled on a per-pixel derived stream so scheduling cannot
/// change the result.
inline CountsMatrix sample_counts(const Matrix& f_star, const std::vector<std::int64_t>& reads,
                                  std::uint64_t seed) {
  if (static_cast<Index>(reads.size()) != f_star.rows())
    throw validation_error("sample_counts: read vector length mismatch");
  detail::check_simplex_rows(f_star, 1e-9);
  Rng root(seed);
  CountsMatrix out;
  out.rows = f_star.rows();
  out.cols = f_star.cols();
  for (Index i = 0; i < f_star.rows(); ++i) {
    const std::int64_t r = reads[static_cast<std::size_t>(i)];
    if (r < 0) throw validation_error("sample_counts: negative read count");
    if (r == 0) continue;
    Rng pixel = root.stream(static_cast<std::uint64_t>(i));
    const auto counts = pixel.multinomial(r, f_star.row(i).transpose());
    for (Index j = 0; j < f_star.cols(); ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0)
        out.entries.push_back({i, j, counts[static_cast<std::size_t>(j)]});
    }
  }
  return out;
}

/// Empirical frequency vectors: counts normalized per pixel, zero rows for
/// zero-read pixels.
inline Matrix sample_expression(const Matrix& f_star, const std::vector<std::int64_t>& reads,
                                std::uint64_t seed) {
  const CountsMatrix counts = sample_counts(f_star, reads, seed);
  Matrix out = Matrix::Zero(f_star.rows(), f_star.cols());
  for (const auto& e : counts.entries) {
    out(e.row, e.col) =
        static_cast<double>(e.value) / static_cast<double>(reads[static_cast<std::size_t>(e.row)]);
  }
  return out;
}

/// Retains exactly `r` reads chosen uniformly without replacement from the
/// multiset of reads: entries are processed in the stored row-major order and
/// each receives a draw from the hypergeometric conditional distribution of
/// the shrinking population.
inline CountsMatrix downsample_counts(const CountsMatrix& c0, std::int64_t r, std::uint64_t seed) {
  const std::int64_t total = c0.total();
  if (r < 0 || r > total)
    throw validation_error("downsample_counts: requested reads exceed available total");
  Rng rng = Rng(seed).stream(0x444f574eu);  // downsample stream
  CountsMatrix out;
  out.rows = c0.rows;
  out.cols = c0.cols;
  std::int64_t remaining_sample = r;
  std::int64_t remaining_population = total;
  for (const auto& e : c0.entries) {
    if (e.value < 0) throw validation_error("downsample_counts: negative count entry");
    if (remaining_sample == 0) break;
    const std::int64_t x = rng.hypergeometric(remaining_sample, e.value, remaining_population);
    if (x > 0) out.entries.push_back({e.row, e.col, x});
    remaining_sample -= x;
    remaining_population -= e.value;
  }
  return out;
}

struct Subsample {
  Matrix y;
  PixelSet pixels;
  std::vector<Index> indices;  // retained indices, ascending
};

/// Uniform without-replacement pixel subset; retained rows keep their
/// original relative order.
inline Subsample subsample_pixels(const Matrix& y, const PixelSet& pixels, Index m_keep,
                                  std::uint64_t seed) {
  const Index m = static_cast<Index>(pixels.size());
  if (y.rows() != m) throw validation_error("subsample_pixels: shape mismatch");
  if (m_keep < 1 || m_keep > m) throw validation_error("subsample_pixels: subset size out of range");
  Rng rng = Rng(seed).stream(0x53554253u);  // subsample stream
  std::vector<Index> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < m_keep; ++i) {
    const Index j = i + static_cast<Index>(rng.next_below(m - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  Subsample out;
  out.indices.assign(pool.begin(), pool.begin() + m_keep);
  std::sort(out.indices.begin(), out.indices.end());
  out.y.resize(m_keep, y.cols());
  out.pixels.reserve(static_cast<std::size_t>(m_keep));
  for (Index i = 0; i < m_keep; ++i) {
    out.y.row(i) = y.row(out.indices[static_cast<std::size_t>(i)]);
    out.pixels.push_back(pixels[static_cast<std::size_t>(out.indices[static_cast<std::size_t>(i)])]);
  }
  return out;
}

}  // namespace stark
