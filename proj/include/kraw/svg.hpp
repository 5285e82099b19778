#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kraw::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
  /// Draw a marker at every point (useful when a series has one point).
  bool markers = true;
};

/// Standalone SVG document with one polyline per series, axes with ticks,
/// and a legend. Non-finite points break the line and are not drawn.
std::string line_plot(std::span<const Series> series, const PlotOptions& options);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace kraw::svg
