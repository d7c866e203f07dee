#pragma once

#include "tsdiff/common.hpp"

#include <string>
#include <vector>

namespace tsdiff::cli {

/// Polyline of y against x with the axis ranges printed in the corners.
std::string svg_line_chart(const std::vector<double>& x, const std::vector<double>& y, const std::string& title);

/// Grey-scale heatmap, one cell per matrix entry, scaled to [min, max].
std::string svg_heatmap(const Matrix& m, const std::string& title);

}  // namespace tsdiff::cli
