#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "stark/common.hpp"
#include "stark/io.hpp"

namespace stark {

namespace detail {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
      "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896",
      "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5"};
  return colors;
}

}  // namespace detail

/// One colored dot per pixel at its coordinate; colors follow the
/// lexicographic order of the distinct labels.
inline void save_label_map_svg(const std::string& path, const PixelSet& pixels,
                               const std::vector<std::string>& labels) {
  if (pixels.size() != labels.size())
    throw validation_error("save_label_map_svg: label count mismatch");
  if (pixels.empty()) throw validation_error("save_label_map_svg: empty pixel set");
  std::map<std::string, std::size_t> color_of;
  for (const auto& l : labels) color_of.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, idx] : color_of) idx = next++;

  double min_x = pixels[0].x(), max_x = pixels[0].x();
  double min_y = pixels[0].y(), max_y = pixels[0].y();
  for (const auto& q : pixels) {
    min_x = std::min(min_x, q.x());
    max_x = std::max(max_x, q.x());
    min_y = std::min(min_y, q.y());
    max_y = std::max(max_y, q.y());
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1.0});
  const double radius = 0.45 * span / std::max(1.0, std::sqrt(static_cast<double>(pixels.size())));
  const double pad = 2.0 * radius;

  auto out = detail::open_output(path);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.6f %.6f %.6f %.6f\">\n",
                min_x - pad, min_y - pad, (max_x - min_x) + 2 * pad, (max_y - min_y) + 2 * pad);
  out << buf;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto& color =
        detail::palette()[color_of[labels[i]] % detail::palette().size()];
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.6f\" cy=\"%.6f\" r=\"%.6f\" fill=\"%s\"/>\n",
                  pixels[i].x(), pixels[i].y(), radius, color.c_str());
    out << buf;
  }
  out << "</svg>\n";
  if (!out) throw validation_error("write failed: " + path);
}

}  // namespace stark
