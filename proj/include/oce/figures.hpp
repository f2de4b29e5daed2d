// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "oce/evaluation.hpp"

namespace oce::figures {

/// Linear data (wt%) to SVG pixel mapping shared by both plots; the same range on
/// both axes so the identity line is the diagonal.
struct PlotFrame {
  double lo = 0.0, hi = 1.0;  // wt%
  double left = 70.0, top = 40.0, width = 520.0, height = 520.0;

  double x(double v) const { return left + (v - lo) / (hi - lo) * width; }
  double y(double v) const { return top + height - (v - lo) / (hi - lo) * height; }
};

/// Axis range covering every concentration and prediction with a 1 wt% margin,
/// snapped outwards to whole wt%.
PlotFrame frame_for(const eval::EvaluationReport& report);

/// Boxes at x = concentration (median, quartiles, 1.5 IQR whiskers) and the y = x line.
std::string boxplot_svg(const eval::EvaluationReport& report, const std::string& title);
/// Prediction against label per window, with the y = x line.
std::string scatter_svg(const eval::EvaluationReport& report, const std::string& title);

/// Writes <dir>/boxplot.svg and <dir>/scatter.svg. Throws ContractViolation on an
/// empty report.
std::vector<std::filesystem::path> emit_figures(const eval::EvaluationReport& report,
                                                const std::filesystem::path& dir);

}  // namespace oce::figures
