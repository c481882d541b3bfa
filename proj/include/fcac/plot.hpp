#pragma once

// Accuracy-per-session line charts rendered as standalone SVG.

#include "fcac/evaluation.hpp"

#include <string>
#include <vector>

namespace fcac {

struct PlotSeries {
    std::string name;
    std::vector<double> values; // percent
};

struct PlotFrame {
    double width = 640.0;
    double height = 400.0;
    double left = 64.0;
    double right = 160.0;
    double top = 40.0;
    double bottom = 56.0;
    double y_min = 0.0;
    double y_max = 100.0;
    std::size_t sessions = 1;

    double x_px(std::size_t session) const;
    double y_px(double percent) const;
    double y_value(double px) const;
};

/// One series per report, accuracies converted to percent.
PlotSeries series_from_report(const RunReport& report);

/// Axis range rounded out to multiples of 10 around all values.
PlotFrame frame_for(const std::vector<PlotSeries>& series);

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title);

} // namespace fcac
