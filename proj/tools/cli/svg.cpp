#include "cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tsdiff::cli {

namespace {

constexpr double kWidth = 640, kHeight = 400, kMargin = 40;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string header(double w, double h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<text x=\"" + num(kMargin) + "\" y=\"20\">" + title +
         "</text>\n";
}

}  // namespace

std::string svg_line_chart(const std::vector<double>& x, const std::vector<double>& y, const std::string& title) {
  std::string out = header(kWidth, kHeight, title);
  if (x.empty() || x.size() != y.size()) return out + "</svg>\n";
  const auto [x0, x1] = std::minmax_element(x.begin(), x.end());
  const auto [y0, y1] = std::minmax_element(y.begin(), y.end());
  const double dx = *x1 > *x0 ? *x1 - *x0 : 1.0, dy = *y1 > *y0 ? *y1 - *y0 : 1.0;
  const double pw = kWidth - 2 * kMargin, ph = kHeight - 2 * kMargin;
  out += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(pw) + "\" height=\"" +
         num(ph) + "\" fill=\"none\" stroke=\"#999\"/>\n<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) {
    out += num(kMargin + (x[i] - *x0) / dx * pw) + "," + num(kMargin + ph - (y[i] - *y0) / dy * ph);
    out += i + 1 < x.size() ? " " : "";
  }
  out += "\"/>\n";
  out += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeight - 10) + "\">" + num(*x0) + "</text>\n";
  out += "<text x=\"" + num(kWidth - kMargin) + "\" y=\"" + num(kHeight - 10) + "\" text-anchor=\"end\">" +
         num(*x1) + "</text>\n";
  out += "<text x=\"4\" y=\"" + num(kMargin + ph) + "\">" + num(*y0) + "</text>\n";
  out += "<text x=\"4\" y=\"" + num(kMargin + 12) + "\">" + num(*y1) + "</text>\n";
  return out + "</svg>\n";
}

std::string svg_heatmap(const Matrix& m, const std::string& title) {
  const double cell = m.size() ? std::max(2.0, 480.0 / static_cast<double>(std::max(m.rows(), m.cols()))) : 1.0;
  const double w = 2 * kMargin + cell * static_cast<double>(m.cols());
  const double h = 2 * kMargin + cell * static_cast<double>(m.rows());
  std::string out = header(w, h, title);
  if (m.size() == 0) return out + "</svg>\n";
  const double lo = m.minCoeff(), hi = m.maxCoeff(), span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - (m(i, j) - lo) / span)));
      out += "<rect x=\"" + num(kMargin + cell * static_cast<double>(j)) + "\" y=\"" +
             num(kMargin + cell * static_cast<double>(i)) + "\" width=\"" + num(cell) + "\" height=\"" + num(cell) +
             "\" fill=\"rgb(" + std::to_string(g) + "," + std::to_string(g) + "," + std::to_string(g) + ")\"/>\n";
    }
  out += "<text x=\"" + num(kMargin) + "\" y=\"" + num(h - 10) + "\">range " + num(lo) + " .. " + num(hi) +
         "</text>\n";
  return out + "</svg>\n";
}

}  // namespace tsdiff::cli
