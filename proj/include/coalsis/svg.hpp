// ============================================================================
//  coalsis/svg.hpp
//
//  Hand-rolled static line plots (SVG 1.1) for experiment CSVs.  CSV files
//  are the data contract; these plots are a convenience rendering with no
//  external dependencies.  Output is deterministic: coordinates are rounded
//  to fixed precision and depend only on the data.
//
//  Non-finite y values (e.g. log10 of an exactly-zero variance) break the
//  polyline: finite segments are drawn, gaps are left where data degenerate.
// ============================================================================
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "coalsis/common.hpp"

namespace coalsis {

class SvgLinePlot {
 public:
  SvgLinePlot(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add_series(const std::string& name, std::vector<double> xs, std::vector<double> ys) {
    check(xs.size() == ys.size(), "SvgLinePlot: x/y length mismatch");
    check(!xs.empty(), "SvgLinePlot: empty series");
    series_.push_back({name, std::move(xs), std::move(ys)});
  }

  std::string render() const {
    check(!series_.empty(), "SvgLinePlot: nothing to draw");
    double x_lo, x_hi, y_lo, y_hi;
    data_bounds(x_lo, x_hi, y_lo, y_hi);

    std::string svg;
    svg += format_msg(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
        "viewBox=\"0 0 %d %d\" font-family=\"monospace\" font-size=\"12\">\n",
        kW, kH, kW, kH);
    svg += format_msg("<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", kW, kH);
    svg += format_msg(
        "<text x=\"%d\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">%s</text>\n",
        (kL + kW - kR) / 2, escape(title_).c_str());

    // Gridlines and tick labels: five divisions per axis.
    for (int k = 0; k <= kTicks; ++k) {
      double fx = static_cast<double>(k) / kTicks;
      double vx = x_lo + fx * (x_hi - x_lo);
      double vy = y_lo + fx * (y_hi - y_lo);
      double px = kL + fx * plot_w();
      double py = kH - kB - fx * plot_h();
      svg += format_msg(
          "<line x1=\"%.2f\" y1=\"%d\" x2=\"%.2f\" y2=\"%d\" stroke=\"#dddddd\"/>\n", px,
          kT, px, kH - kB);
      svg += format_msg(
          "<line x1=\"%d\" y1=\"%.2f\" x2=\"%d\" y2=\"%.2f\" stroke=\"#dddddd\"/>\n", kL,
          py, kW - kR, py);
      svg += format_msg(
          "<text x=\"%.2f\" y=\"%d\" text-anchor=\"middle\">%s</text>\n", px, kH - kB + 18,
          format_msg("%.4g", vx).c_str());
      svg += format_msg(
          "<text x=\"%d\" y=\"%.2f\" text-anchor=\"end\" dominant-baseline=\"middle\">%s"
          "</text>\n",
          kL - 6, py, format_msg("%.4g", vy).c_str());
    }
    // Axis frame.
    svg += format_msg(
        "<rect x=\"%d\" y=\"%d\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" "
        "stroke=\"black\"/>\n",
        kL, kT, plot_w(), plot_h());
    svg += format_msg(
        "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n", (kL + kW - kR) / 2,
        kH - 8, escape(x_label_).c_str());
    svg += format_msg(
        "<text x=\"14\" y=\"%d\" text-anchor=\"middle\" transform=\"rotate(-90 14 %d)\">"
        "%s</text>\n",
        (kT + kH - kB) / 2, (kT + kH - kB) / 2, escape(y_label_).c_str());

    for (size_t s = 0; s < series_.size(); ++s) {
      const char* color = kPalette[s % kPaletteSize];
      const Series& sr = series_[s];
      std::string points;
      bool open = false;
      for (size_t i = 0; i < sr.xs.size(); ++i) {
        if (!std::isfinite(sr.xs[i]) || !std::isfinite(sr.ys[i])) {
          if (open) {
            svg += polyline(points, color);
            points.clear();
            open = false;
          }
          continue;
        }
        double px = kL + frac(sr.xs[i], x_lo, x_hi) * plot_w();
        double py = kH - kB - frac(sr.ys[i], y_lo, y_hi) * plot_h();
        points += format_msg("%.2f,%.2f ", px, py);
        open = true;
      }
      if (open) svg += polyline(points, color);
      // Legend entry.
      int ly = kT + 16 + 16 * static_cast<int>(s);
      svg += format_msg(
          "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"%s\" "
          "stroke-width=\"2\"/>\n",
          kW - kR - 130, ly - 4, kW - kR - 104, ly - 4, color);
      svg += format_msg("<text x=\"%d\" y=\"%d\">%s</text>\n", kW - kR - 98, ly,
                        escape(sr.name).c_str());
    }
    svg += "</svg>\n";
    return svg;
  }

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };

  static constexpr int kW = 720, kH = 480, kL = 70, kR = 20, kT = 36, kB = 46, kTicks = 5;
  static constexpr const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c",
                                             "#8c5383", "#e09f3e", "#335c67"};
  static constexpr size_t kPaletteSize = 6;

  static double plot_w() { return kW - kL - kR; }
  static double plot_h() { return kH - kT - kB; }
  static double frac(double v, double lo, double hi) { return (v - lo) / (hi - lo); }

  static std::string polyline(const std::string& points, const char* color) {
    return format_msg(
        "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n",
        points.c_str(), color);
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '&')
        out += "&amp;";
      else if (c == '<')
        out += "&lt;";
      else if (c == '>')
        out += "&gt;";
      else
        out += c;
    }
    return out;
  }

  void data_bounds(double& x_lo, double& x_hi, double& y_lo, double& y_hi) const {
    x_lo = y_lo = std::numeric_limits<double>::infinity();
    x_hi = y_hi = -std::numeric_limits<double>::infinity();
    for (const Series& s : series_)
      for (size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        x_lo = std::min(x_lo, s.xs[i]);
        x_hi = std::max(x_hi, s.xs[i]);
        y_lo = std::min(y_lo, s.ys[i]);
        y_hi = std::max(y_hi, s.ys[i]);
      }
    check(std::isfinite(x_lo) && std::isfinite(y_lo),
          "SvgLinePlot: no finite data points to draw");
    pad(x_lo, x_hi);
    pad(y_lo, y_hi);
  }

  static void pad(double& lo, double& hi) {
    if (lo == hi) {
      lo -= 1.0;
      hi += 1.0;
      return;
    }
    const double margin = 0.05 * (hi - lo);
    lo -= margin;
    hi += margin;
  }

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
};

}  // namespace coalsis
