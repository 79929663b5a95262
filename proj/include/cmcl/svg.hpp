#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "cmcl/geometry.hpp"

namespace cmcl::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return kColors[i % 8];
}

inline std::string header(double w, double h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" + num(w / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n";
}

/// Vertical bars with values in [0, 1].
inline std::string bar_chart(const std::vector<std::pair<std::string, double>>& bars, const std::string& title) {
  const double w = 80.0 + 70.0 * static_cast<double>(bars.size()), h = 300.0, top = 40.0, base = 250.0;
  std::string s = header(w, h, title);
  s += "<line x1=\"50\" y1=\"" + num(base) + "\" x2=\"" + num(w - 20) + "\" y2=\"" + num(base) +
       "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].second, 0.0, 1.0);
    const double x = 60.0 + 70.0 * static_cast<double>(i);
    const double bh = v * (base - top);
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(base - bh) + "\" width=\"50\" height=\"" + num(bh) + "\" fill=\"" +
         palette(i) + "\"/>\n";
    s += "<text x=\"" + num(x + 25) + "\" y=\"" + num(base - bh - 4) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(100 * v) + "%</text>\n";
    s += "<text x=\"" + num(x + 25) + "\" y=\"" + num(base + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + escape(bars[i].first) + "</text>\n";
  }
  return s + "</svg>\n";
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Polylines on a shared axis; y is assumed to lie in [0, 1].
inline std::string line_chart(const std::vector<Series>& series, const std::string& title) {
  const double w = 640, h = 360, left = 50, right = 150, top = 40, bottom = 40;
  double xmax = 1e-9;
  for (const auto& se : series) {
    for (const auto& p : se.points) xmax = std::max(xmax, p.first);
  }
  const auto X = [&](double x) { return left + (w - left - right) * x / xmax; };
  const auto Y = [&](double y) { return h - bottom - (h - top - bottom) * std::clamp(y, 0.0, 1.0); };
  std::string s = header(w, h, title);
  s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(w - left - right) + "\" height=\"" +
       num(h - top - bottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(left) + "\" y=\"" + num(h - 10) + "\" font-family=\"sans-serif\" font-size=\"11\">0 s</text>\n";
  s += "<text x=\"" + num(w - right) + "\" y=\"" + num(h - 10) +
       "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(xmax) + " s</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (const auto& p : series[i].points) pts += num(X(p.first)) + "," + num(Y(p.second)) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(palette(i)) + "\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + num(w - right + 10) + "\" y=\"" + num(top + 15 + 15 * static_cast<double>(i)) + "\" fill=\"" +
         palette(i) + "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(series[i].name) + "</text>\n";
  }
  return s + "</svg>\n";
}

struct PointSet {
  std::string name;
  std::vector<Vec2> points;
  double radius = 3.0;
};

/// Scatter plot with equal axis scaling.
inline std::string scatter(const std::vector<PointSet>& sets, const std::string& title) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& se : sets) {
    for (const auto& p : se.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }
  if (xmin > xmax) xmin = ymin = 0, xmax = ymax = 1;
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  const double size = 400, pad = 40, legend = 140;
  const auto X = [&](double x) { return pad + size * (x - xmin) / span; };
  const auto Y = [&](double y) { return pad + size - size * (y - ymin) / span; };
  std::string s = header(size + 2 * pad + legend, size + 2 * pad, title);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (const auto& p : sets[i].points) {
      s += "<circle cx=\"" + num(X(p.x)) + "\" cy=\"" + num(Y(p.y)) + "\" r=\"" + num(sets[i].radius) +
           "\" fill=\"" + palette(i) + "\" fill-opacity=\"0.7\"/>\n";
    }
    s += "<text x=\"" + num(size + 2 * pad) + "\" y=\"" + num(pad + 15 * static_cast<double>(i)) + "\" fill=\"" +
         palette(i) + "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(sets[i].name) + "</text>\n";
  }
  return s + "</svg>\n";
}

}  // namespace cmcl::svg
