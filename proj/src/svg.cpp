#include "kraw/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kraw::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 0.5);
      lo -= pad;
      hi += pad;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

std::string line_plot(std::span<const Series> series, const PlotOptions& opt) {
  const double left = 70, right = 150, top = 40, bottom = 55;
  const double pw = opt.width - left - right;
  const double ph = opt.height - top - bottom;

  Range rx, ry;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("line_plot: x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      rx.add(s.x[i]);
      ry.add(s.y[i]);
    }
  }
  rx.finish();
  ry.finish();
  auto px = [&](double x) { return left + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double y) { return top + ph - (y - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << opt.width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << escape(opt.title) << "</text>\n";

  // Axes and ticks.
  out << "<g stroke=\"black\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + ph << "\"/>\n";
  out << "</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = rx.lo + (rx.hi - rx.lo) * i / kTicks;
    const double fy = ry.lo + (ry.hi - ry.lo) * i / kTicks;
    out << "<line x1=\"" << px(fx) << "\" y1=\"" << top + ph << "\" x2=\"" << px(fx) << "\" y2=\""
        << top + ph + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(fx) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
        << fmt(fx) << "</text>\n";
    out << "<line x1=\"" << left - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << left << "\" y2=\""
        << py(fy) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">"
        << fmt(fy) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(opt.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << top + ph / 2 << ")\">" << escape(opt.y_label)
      << "</text>\n";
  out << "</g>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    out << "<g stroke=\"" << color << "\" fill=\"" << color << "\">\n";
    std::vector<std::string> segments;
    std::ostringstream seg;
    bool open = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        if (open) segments.push_back(seg.str());
        seg.str("");
        open = false;
        continue;
      }
      seg << (open ? " " : "") << px(s.x[i]) << ',' << py(s.y[i]);
      open = true;
    }
    if (open) segments.push_back(seg.str());
    for (const auto& pts : segments) {
      out << "<polyline fill=\"none\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    }
    if (opt.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\"/>\n";
      }
    }
    out << "</g>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(si);
    out << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 40
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + pw + 45 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace kraw::svg
