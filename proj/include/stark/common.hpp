#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stark {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Point = Eigen::Vector2d;

/// Ordered list of planar measurement sites.
using PixelSet = std::vector<Point>;

/// Malformed input, bad configuration, violated precondition. CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure (non-PSD system, bracket failure, ...). CLI maps this to exit code 1.
class numerical_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CountEntry {
  Index row = 0;
  Index col = 0;
  std::int64_t value = 0;
};

/// Sparse pixels-by-genes UMI counts. Entries are strictly positive and kept
/// sorted row-major; that order is the canonical one for serialization and
/// for sequential sampling.
struct CountsMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<CountEntry> entries;

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& e : entries) t += e.value;
    return t;
  }

  Matrix dense() const {
    Matrix out = Matrix::Zero(rows, cols);
    for (const auto& e : entries) out(e.row, e.col) += static_cast<double>(e.value);
    return out;
  }

  Vector row_sums() const {
    Vector out = Vector::Zero(rows);
    for (const auto& e : entries) out(e.row) += static_cast<double>(e.value);
    return out;
  }

  static CountsMatrix from_dense(const Matrix& m) {
    CountsMatrix c;
    c.rows = m.rows();
    c.cols = m.cols();
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        if (v == 0.0) continue;
        if (v < 0.0) throw validation_error("counts matrix has a negative entry");
        c.entries.push_back({i, j, static_cast<std::int64_t>(std::llround(v))});
      }
    }
    return c;
  }
};

inline Matrix pixels_to_matrix(const PixelSet& pixels) {
  Matrix out(static_cast<Index>(pixels.size()), 2);
  for (Index i = 0; i < out.rows(); ++i) out.row(i) = pixels[static_cast<std::size_t>(i)].transpose();
  return out;
}

}  // namespace stark
