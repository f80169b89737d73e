#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace infalign::cli {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr double kWinLo = 0.4, kWinHi = 1.0;
const char* const kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
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

// 1, 2 or 5 times a power of ten, at least x.
double nice_ceiling(double x) {
  if (!(x > 0)) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(x)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * p >= x * (1 - 1e-12)) return m * p;
  }
  return 10 * p;
}

}  // namespace

std::string render_tradeoff_svg(const std::string& title, const std::vector<Series>& series) {
  double max_kl = 0;
  for (const auto& s : series) {
    for (auto [kl, w] : s.points) max_kl = std::max(max_kl, kl);
  }
  const double kl_hi = nice_ceiling(max_kl);
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto x_of = [&](double kl) { return kLeft + plot_w * std::clamp(kl / kl_hi, 0.0, 1.0); };
  auto y_of = [&](double w) {
    return kTop + plot_h * (1 - (std::clamp(w, kWinLo, kWinHi) - kWinLo) / (kWinHi - kWinLo));
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(kLeft + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << escape(title) << "</text>\n";
  o << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(plot_w)
    << "\" height=\"" << fmt(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double kl = kl_hi * i / 5.0;
    const double x = x_of(kl);
    o << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(kTop + plot_h) << "\" x2=\"" << fmt(x)
      << "\" y2=\"" << fmt(kTop + plot_h + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(kTop + plot_h + 20)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << fmt(kl) << "</text>\n";
  }
  for (int i = 0; i <= 6; ++i) {
    const double w = kWinLo + (kWinHi - kWinLo) * i / 6.0;
    const double y = y_of(w);
    o << "<line x1=\"" << fmt(kLeft - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(kLeft)
      << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(y + 4)
      << "\" text-anchor=\"end\" font-size=\"12\">" << fmt(w) << "</text>\n";
  }
  o << "<text x=\"" << fmt(kLeft + plot_w / 2) << "\" y=\"" << fmt(kHeight - 15)
    << "\" text-anchor=\"middle\" font-size=\"13\">KL divergence</text>\n";
  o << "<text transform=\"translate(18 " << fmt(kTop + plot_h / 2)
    << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">win rate</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    o << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[k].points.size(); ++i) {
      const auto [kl, w] = series[k].points[i];
      o << (i ? " " : "") << fmt(x_of(kl)) << ',' << fmt(y_of(w));
    }
    o << "\"><title>" << escape(series[k].label) << "</title></polyline>\n";
    const double ly = kTop + 10 + 20.0 * double(k);
    o << "<line x1=\"" << fmt(kWidth - kRight + 15) << "\" y1=\"" << fmt(ly) << "\" x2=\""
      << fmt(kWidth - kRight + 40) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fmt(kWidth - kRight + 46) << "\" y=\"" << fmt(ly + 4)
      << "\" font-size=\"12\">" << escape(series[k].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace infalign::cli
