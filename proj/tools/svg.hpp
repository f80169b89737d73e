#pragma once

#include <string>
#include <utility>
#include <vector>

namespace infalign::cli {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (kl, win rate)
};

/// Win rate in [0.4, 1] against KL in [0, max KL], one polyline per series.
std::string render_tradeoff_svg(const std::string& title, const std::vector<Series>& series);

}  // namespace infalign::cli
