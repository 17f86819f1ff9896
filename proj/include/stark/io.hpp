#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stark/common.hpp"

namespace stark {

/// Zero rows stay zero; every other row is scaled to sum to one.
inline Matrix row_normalize(const Matrix& x) {
  Matrix out = x;
  for (Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s != 0.0) out.row(i) /= s;
  }
  return out;
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  if (b == e) return false;
  char* end = nullptr;
  std::string trimmed(b, e);
  out = std::strtod(trimmed.c_str(), &end);
  return end == trimmed.c_str() + trimmed.size();
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open file: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write file: " + path);
  return out;
}

struct MmHeader {
  bool coordinate = true;
  bool integer_field = false;
  bool pattern = false;
};

inline MmHeader parse_mm_banner(const std::string& line, const std::string& path) {
  std::istringstream ss(line);
  std::string banner, object, format, field, symmetry;
  ss >> banner >> object >> format >> field >> symmetry;
  if (lower(banner) != "%%matrixmarket" || lower(object) != "matrix")
    throw validation_error(path + ":1: not a Matrix Market file");
  MmHeader h;
  const std::string fmt = lower(format);
  if (fmt == "coordinate")
    h.coordinate = true;
  else if (fmt == "array")
    h.coordinate = false;
  else
    throw validation_error(path + ":1: unsupported Matrix Market format '" + format + "'");
  const std::string fld = lower(field);
  if (fld == "integer")
    h.integer_field = true;
  else if (fld == "real")
    h.integer_field = false;
  else
    throw validation_error(path + ":1: unsupported Matrix Market field '" + field + "'");
  if (lower(symmetry) != "general")
    throw validation_error(path + ":1: only general symmetry is supported");
  return h;
}

}  // namespace detail

/// Reads integer counts from Matrix Market coordinate format or a headered
/// CSV (one row of column names, then one line of d nonnegative integers per
/// pixel). Errors carry line numbers.
inline CountsMatrix load_counts(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw validation_error(path + ": empty file");
  CountsMatrix c;
  if (line.rfind("%%", 0) == 0) {
    const auto header = detail::parse_mm_banner(line, path);
    if (!header.coordinate || !header.integer_field)
      throw validation_error(path + ":1: counts must be coordinate integer");
    std::size_t line_no = 1;
    std::int64_t nnz = -1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '%') continue;
      std::istringstream ss(line);
      if (nnz < 0) {
        if (!(ss >> c.rows >> c.cols >> nnz) || c.rows < 0 || c.cols < 0 || nnz < 0)
          throw validation_error(path + ":" + std::to_string(line_no) + ": malformed size line");
        c.entries.reserve(static_cast<std::size_t>(nnz));
        continue;
      }
      std::int64_t i = 0, j = 0, v = 0;
      if (!(ss >> i >> j >> v))
        throw validation_error(path + ":" + std::to_string(line_no) + ": malformed entry");
      if (i < 1 || i > c.rows || j < 1 || j > c.cols)
        throw validation_error(path + ":" + std::to_string(line_no) + ": index out of range");
      if (v < 0)
        throw validation_error(path + ":" + std::to_string(line_no) + ": negative count");
      if (v > 0) c.entries.push_back({static_cast<Index>(i - 1), static_cast<Index>(j - 1), v});
    }
    if (nnz < 0) throw validation_error(path + ": missing size line");
  } else {
    const auto header_fields = detail::split_fields(line, ',');
    c.cols = static_cast<Index>(header_fields.size());
    double probe = 0.0;
    if (c.cols == 0 || detail::parse_double(header_fields[0], probe))
      throw validation_error(path + ":1: expected a CSV header row");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = detail::split_fields(line, ',');
      if (static_cast<Index>(fields.size()) != c.cols)
        throw validation_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(c.cols) + " fields");
      const Index row = c.rows++;
      for (Index j = 0; j < c.cols; ++j) {
        double v = 0.0;
        if (!detail::parse_double(fields[static_cast<std::size_t>(j)], v) || v != std::floor(v))
          throw validation_error(path + ":" + std::to_string(line_no) + ": not an integer count");
        if (v < 0)
          throw validation_error(path + ":" + std::to_string(line_no) + ": negative count");
        if (v > 0) c.entries.push_back({row, j, static_cast<std::int64_t>(v)});
      }
    }
  }
  std::sort(c.entries.begin(), c.entries.end(), [](const CountEntry& a, const CountEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t e = 1; e < c.entries.size(); ++e) {
    if (c.entries[e - 1].row == c.entries[e].row && c.entries[e - 1].col == c.entries[e].col)
      throw validation_error(path + ": duplicate entry at (" + std::to_string(c.entries[e].row + 1) +
                             "," + std::to_string(c.entries[e].col + 1) + ")");
  }
  return c;
}

inline void save_counts(const CountsMatrix& c, const std::string& path) {
  auto out = detail::open_output(path);
  out << "%%MatrixMarket matrix coordinate integer general\n";
  out << c.rows << " " << c.cols << " " << c.entries.size() << "\n";
  for (const auto& e : c.entries)
    out << (e.row + 1) << " " << (e.col + 1) << " " << e.value << "\n";
  if (!out) throw validation_error("write failed: " + path);
}

/// Dense real matrix as Matrix Market coordinate real general, nonzero
/// entries in row-major order with round-trip precision.
inline void save_dense_matrix(const Matrix& m, const std::string& path) {
  auto out = detail::open_output(path);
  std::int64_t nnz = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) ++nnz;
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << " " << m.cols() << " " << nnz << "\n";
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%" PRId64 " %" PRId64 " %.17g\n",
                    static_cast<std::int64_t>(i + 1), static_cast<std::int64_t>(j + 1), m(i, j));
      out << buf;
    }
  }
  if (!out) throw validation_error("write failed: " + path);
}

/// Matrix Market real matrix, coordinate (sparse) or array (dense column-major).
inline Matrix load_dense_matrix(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw validation_error(path + ": empty file");
  const auto header = detail::parse_mm_banner(line, path);
  std::size_t line_no = 1;
  Matrix m;
  Index rows = -1, cols = -1;
  std::int64_t expected = -1, seen = 0;
  Index array_cursor = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    if (rows < 0) {
      if (header.coordinate) {
        if (!(ss >> rows >> cols >> expected) || rows < 0 || cols < 0 || expected < 0)
          throw validation_error(path + ":" + std::to_string(line_no) + ": malformed size line");
      } else {
        if (!(ss >> rows >> cols) || rows < 0 || cols < 0)
          throw validation_error(path + ":" + std::to_string(line_no) + ": malformed size line");
        expected = static_cast<std::int64_t>(rows) * cols;
      }
      m = Matrix::Zero(rows, cols);
      continue;
    }
    if (header.coordinate) {
      std::int64_t i = 0, j = 0;
      double v = 0.0;
      if (!(ss >> i >> j >> v))
        throw validation_error(path + ":" + std::to_string(line_no) + ": malformed entry");
      if (i < 1 || i > rows || j < 1 || j > cols)
        throw validation_error(path + ":" + std::to_string(line_no) + ": index out of range");
      m(i - 1, j - 1) = v;
      ++seen;
    } else {
      double v = 0.0;
      while (ss >> v) {
        if (array_cursor >= rows * cols)
          throw validation_error(path + ":" + std::to_string(line_no) + ": too many array values");
        m(array_cursor % rows, array_cursor / rows) = v;
        ++array_cursor;
        ++seen;
      }
    }
  }
  if (rows < 0) throw validation_error(path + ": missing size line");
  if (seen != expected)
    throw validation_error(path + ": expected " + std::to_string(expected) + " values, found " +
                           std::to_string(seen));
  return m;
}

/// CSV with x,y columns, one pixel per row, in the row order of the counts file.
inline PixelSet load_coordinates(const std::string& path) {
  auto in = detail::open_input(path);
  PixelSet pixels;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line, ',');
    if (fields.size() != 2)
      throw validation_error(path + ":" + std::to_string(line_no) + ": expected two columns x,y");
    double x = 0.0, y = 0.0;
    const bool ok = detail::parse_double(fields[0], x) && detail::parse_double(fields[1], y);
    if (!ok) {
      if (first) {
        first = false;  // header row
        continue;
      }
      throw validation_error(path + ":" + std::to_string(line_no) + ": malformed coordinate");
    }
    first = false;
    pixels.emplace_back(x, y);
  }
  if (pixels.empty()) throw validation_error(path + ": no coordinates found");
  return pixels;
}

inline void save_coordinates(const PixelSet& pixels, const std::string& path) {
  auto out = detail::open_output(path);
  out << "x,y\n";
  char buf[80];
  for (const auto& q : pixels) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", q.x(), q.y());
    out << buf;
  }
  if (!out) throw validation_error("write failed: " + path);
}

/// Single-column CSV of per-pixel labels; an optional first line "label" is
/// treated as a header.
inline std::vector<std::string> load_labels(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> labels;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && detail::lower(line) == "label") {
      first = false;
      continue;
    }
    first = false;
    labels.push_back(line);
  }
  if (labels.empty()) throw validation_error(path + ": no labels found");
  return labels;
}

inline void save_labels(const std::vector<std::string>& labels, const std::string& path) {
  auto out = detail::open_output(path);
  out << "label\n";
  for (const auto& l : labels) out << l << "\n";
  if (!out) throw validation_error("write failed: " + path);
}

/// Per-pixel read counts, single-column CSV (optional "reads" header).
inline Vector load_reads(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<double> vals;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    double v = 0.0;
    if (!detail::parse_double(line, v)) {
      if (first) {
        first = false;
        continue;
      }
      throw validation_error(path + ":" + std::to_string(line_no) + ": malformed read count");
    }
    first = false;
    if (v < 0) throw validation_error(path + ":" + std::to_string(line_no) + ": negative read count");
    vals.push_back(v);
  }
  Vector out(static_cast<Index>(vals.size()));
  for (Index i = 0; i < out.size(); ++i) out(i) = vals[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace stark
