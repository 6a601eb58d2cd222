#include "doob/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace doob::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

std::string header(const std::string& title, const std::string& comment) {
  std::string safe = comment;
  for (std::size_t p; (p = safe.find("--")) != std::string::npos;) safe.replace(p, 2, "- -");
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!safe.empty()) out += "<!--\n" + safe + "\n-->\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" + escape(title) + "</text>\n";
  return out;
}

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const {
    return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2;
  }
};

Axis padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, 1};
  if (hi <= lo) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string frame(const Axis& xa, const Axis& ya, bool x_ticks) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string out = "<g font-family=\"sans-serif\" font-size=\"11\" stroke=\"black\">\n";
  out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" +
         num(y0) + "\"/>\n";
  out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" +
         num(y1) + "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ya.lo + (ya.hi - ya.lo) * i / 4.0;
    const double y = ya.map(v, y0, y1);
    out += "<line x1=\"" + num(x0 - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x0) +
           "\" y2=\"" + num(y) + "\"/>\n";
    out += "<text stroke=\"none\" x=\"" + num(x0 - 6) + "\" y=\"" + num(y + 4) +
           "\" text-anchor=\"end\">" + tick(v) + "</text>\n";
    if (x_ticks) {
      const double u = xa.lo + (xa.hi - xa.lo) * i / 4.0;
      const double x = xa.map(u, x0, x1);
      out += "<line x1=\"" + num(x) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x) + "\" y2=\"" +
             num(y0 + 4) + "\"/>\n";
      out += "<text stroke=\"none\" x=\"" + num(x) + "\" y=\"" + num(y0 + 16) +
             "\" text-anchor=\"middle\">" + tick(u) + "</text>\n";
    }
  }
  return out + "</g>\n";
}

std::string legend(const std::vector<Series>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kHeight - 18;
    const double x = kLeft + 110.0 * static_cast<double>(i);
    out += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
           kPalette[i % kPalette.size()] + "\"/>\n";
    out += "<text x=\"" + num(x + 14) + "\" y=\"" + num(y) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(series[i].label) +
           "</text>\n";
  }
  return out;
}

std::pair<Axis, Axis> series_axes(const std::vector<Series>& series) {
  double xl = INFINITY, xh = -INFINITY, yl = INFINITY, yh = -INFINITY;
  for (const auto& s : series) {
    for (Index i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xl = std::min(xl, s.x[i]);
      xh = std::max(xh, s.x[i]);
      yl = std::min(yl, s.y[i]);
      yh = std::max(yh, s.y[i]);
    }
  }
  return {padded(xl, xh), padded(yl, yh)};
}

}  // namespace

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<Bar>& bars, const std::string& comment) {
  double hi = 0.0;
  for (const auto& b : bars) hi = std::max(hi, b.value + b.error);
  const Axis ya{0.0, hi > 0 ? 1.1 * hi : 1.0};
  std::string out = header(title, comment) + frame({0, 1}, ya, false);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double slot = bars.empty() ? 0.0 : (x1 - x0) / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    const double w = 0.6 * slot;
    const double top = ya.map(b.value, y0, y1);
    out += "<rect x=\"" + num(cx - w / 2) + "\" y=\"" + num(top) + "\" width=\"" + num(w) +
           "\" height=\"" + num(y0 - top) + "\" fill=\"" + kPalette[i % kPalette.size()] +
           "\"/>\n";
    if (b.error > 0) {
      const double ylo = ya.map(std::max(0.0, b.value - b.error), y0, y1);
      const double yhi = ya.map(b.value + b.error, y0, y1);
      out += "<g stroke=\"black\"><line x1=\"" + num(cx) + "\" y1=\"" + num(ylo) + "\" x2=\"" +
             num(cx) + "\" y2=\"" + num(yhi) + "\"/><line x1=\"" + num(cx - 6) + "\" y1=\"" +
             num(yhi) + "\" x2=\"" + num(cx + 6) + "\" y2=\"" + num(yhi) + "\"/><line x1=\"" +
             num(cx - 6) + "\" y1=\"" + num(ylo) + "\" x2=\"" + num(cx + 6) + "\" y2=\"" +
             num(ylo) + "\"/></g>\n";
    }
    out += "<text x=\"" + num(cx) + "\" y=\"" + num(y0 + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(b.label) + "</text>\n";
  }
  out += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" transform=\"rotate(-90 16 " +
         num((y0 + y1) / 2) + ")\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">" + escape(y_label) + "</text>\n";
  return out + "</svg>\n";
}

std::string scatter_plot(const std::string& title, const std::vector<Series>& series,
                         const std::string& comment) {
  const auto [xa, ya] = series_axes(series);
  std::string out = header(title, comment) + frame(xa, ya, true);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  for (std::size_t i = 0; i < series.size(); ++i) {
    out += "<g fill=\"" + std::string(kPalette[i % kPalette.size()]) + "\" fill-opacity=\"0.4\">\n";
    const auto& s = series[i];
    for (Index j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) continue;
      out += "<circle cx=\"" + num(xa.map(s.x[j], x0, x1)) + "\" cy=\"" +
             num(ya.map(s.y[j], y0, y1)) + "\" r=\"1.6\"/>\n";
    }
    out += "</g>\n";
  }
  return out + legend(series) + "</svg>\n";
}

std::string line_plot(const std::string& title, const std::vector<Series>& series,
                      const std::string& comment) {
  const auto [xa, ya] = series_axes(series);
  std::string out = header(title, comment) + frame(xa, ya, true);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::string pts;
    for (Index j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) continue;
      pts += num(xa.map(s.x[j], x0, x1)) + "," + num(ya.map(s.y[j], y0, y1)) + " ";
    }
    out += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" +
           std::string(kPalette[i % kPalette.size()]) + "\" points=\"" + pts + "\"/>\n";
  }
  return out + legend(series) + "</svg>\n";
}

}  // namespace doob::svg
