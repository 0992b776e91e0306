#pragma once

// Fixed-geometry SVG charts. Output depends only on the input values, so
// files are byte-stable and usable as golden files.

#include <algorithm>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace attribeval::svg {

inline constexpr double kWidth = 880;
inline constexpr double kHeight = 480;
inline constexpr double kLeft = 60;
inline constexpr double kRight = 200;  // legend gutter
inline constexpr double kTop = 40;
inline constexpr double kBottom = 110;  // rotated category labels

inline constexpr std::string_view kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
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

struct Series {
  std::string name;
  std::vector<double> values;  // one per category, in [0, 1]
};

namespace detail {

inline double plot_w() { return kWidth - kLeft - kRight; }
inline double plot_h() { return kHeight - kTop - kBottom; }
inline double y_of(double v) { return kTop + plot_h() * (1.0 - std::clamp(v, 0.0, 1.0)); }

inline std::string header(std::string_view title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                  num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  return s;
}

// Axes, 0..1 gridlines and rotated category labels.
inline std::string frame(const std::vector<std::string>& categories, double slot) {
  std::string s;
  for (int k = 0; k <= 4; ++k) {
    double v = k / 4.0;
    double y = y_of(v);
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft + plot_w()) + "\" y2=\"" + num(y) +
         "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kTop + plot_h()) + "\" stroke=\"#000000\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h()) + "\" x2=\"" + num(kLeft + plot_w()) +
       "\" y2=\"" + num(kTop + plot_h()) + "\" stroke=\"#000000\"/>\n";
  for (std::size_t k = 0; k < categories.size(); ++k) {
    double x = kLeft + slot * (static_cast<double>(k) + 0.5);
    double y = kTop + plot_h() + 12;
    s += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"end\" transform=\"rotate(-40 " + num(x) +
         " " + num(y) + ")\">" + escape(categories[k]) + "</text>\n";
  }
  return s;
}

inline std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t k = 0; k < names.size(); ++k) {
    double x = kWidth - kRight + 16;
    double y = kTop + 10 + 18.0 * static_cast<double>(k);
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
         std::string(kPalette[k % std::size(kPalette)]) + "\"/>\n";
    s += "<text x=\"" + num(x + 18) + "\" y=\"" + num(y + 1) + "\">" + escape(names[k]) + "</text>\n";
  }
  return s;
}

}  // namespace detail

inline std::string line_chart(std::string_view title, const std::vector<std::string>& categories,
                              const std::vector<Series>& series) {
  const double slot = categories.empty() ? detail::plot_w() : detail::plot_w() / static_cast<double>(categories.size());
  std::string s = detail::header(title) + detail::frame(categories, slot);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto color = std::string(kPalette[k % std::size(kPalette)]);
    std::string points;
    for (std::size_t c = 0; c < series[k].values.size() && c < categories.size(); ++c) {
      if (c) points += ' ';
      points += num(kLeft + slot * (static_cast<double>(c) + 0.5)) + "," + num(detail::y_of(series[k].values[c]));
    }
    s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    for (std::size_t c = 0; c < series[k].values.size() && c < categories.size(); ++c) {
      s += "<circle cx=\"" + num(kLeft + slot * (static_cast<double>(c) + 0.5)) + "\" cy=\"" +
           num(detail::y_of(series[k].values[c])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    names.push_back(series[k].name);
  }
  s += detail::legend(names);
  s += "</svg>\n";
  return s;
}

// One stacked bar per category; each series contributes a segment.
inline std::string stacked_bar_chart(std::string_view title, const std::vector<std::string>& categories,
                                     const std::vector<Series>& series) {
  const double slot = categories.empty() ? detail::plot_w() : detail::plot_w() / static_cast<double>(categories.size());
  const double bar = slot * 0.6;
  std::string s = detail::header(title) + detail::frame(categories, slot);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double base = 0.0;
    double x = kLeft + slot * static_cast<double>(c) + (slot - bar) / 2;
    for (std::size_t k = 0; k < series.size(); ++k) {
      double v = c < series[k].values.size() ? series[k].values[c] : 0.0;
      double y_top = detail::y_of(base + v);
      double y_bot = detail::y_of(base);
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(y_top) + "\" width=\"" + num(bar) + "\" height=\"" +
           num(y_bot - y_top) + "\" fill=\"" + std::string(kPalette[k % std::size(kPalette)]) + "\"/>\n";
      base += v;
    }
  }
  std::vector<std::string> names;
  for (const auto& se : series) names.push_back(se.name);
  s += detail::legend(names);
  s += "</svg>\n";
  return s;
}

}  // namespace attribeval::svg
