#include "fcac/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

namespace fcac {

namespace {

constexpr std::array<const char*, 8> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s)
{
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

} // namespace

double PlotFrame::x_px(std::size_t session) const
{
    const double span = width - left - right;
    if (sessions <= 1) return left + span / 2.0;
    return left + span * static_cast<double>(session) / static_cast<double>(sessions - 1);
}

double PlotFrame::y_px(double percent) const
{
    return top + (height - top - bottom) * (y_max - percent) / (y_max - y_min);
}

double PlotFrame::y_value(double px) const
{
    return y_max - (px - top) * (y_max - y_min) / (height - top - bottom);
}

PlotSeries series_from_report(const RunReport& report)
{
    PlotSeries s;
    s.name = report.method.empty() ? "run" : report.method;
    if (!report.experiment_id.empty()) s.name += " (" + report.experiment_id + ", seed " + std::to_string(report.seed) + ")";
    for (double a : report.accuracies()) s.values.push_back(100.0 * a);
    return s;
}

PlotFrame frame_for(const std::vector<PlotSeries>& series)
{
    PlotFrame f;
    double lo = 100.0, hi = 0.0;
    for (const auto& s : series) {
        f.sessions = std::max(f.sessions, s.values.size());
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (lo > hi) return f;
    f.y_min = std::max(0.0, std::floor(lo / 10.0) * 10.0);
    f.y_max = std::min(100.0, std::ceil(hi / 10.0) * 10.0);
    if (f.y_max - f.y_min < 10.0) {
        f.y_min = std::max(0.0, f.y_max - 10.0);
        f.y_max = f.y_min + 10.0;
    }
    return f;
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title)
{
    const PlotFrame f = frame_for(series);
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n",
        f.width, f.height);
    svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", f.width, f.height);
    svg += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       (f.left + f.width - f.right) / 2.0, escape(title));

    const double x0 = f.left, x1 = f.width - f.right, y0 = f.top, y1 = f.height - f.bottom;
    for (double v = f.y_min; v <= f.y_max + 1e-9; v += 10.0) {
        const double y = f.y_px(v);
        svg += fmt::format("<line x1=\"{}\" y1=\"{:.3f}\" x2=\"{}\" y2=\"{:.3f}\" stroke=\"#e0e0e0\"/>\n", x0, y, x1, y);
        svg += fmt::format("<text x=\"{}\" y=\"{:.3f}\" text-anchor=\"end\">{:g}</text>\n", x0 - 6, y + 4, v);
    }
    for (std::size_t s = 0; s < f.sessions; ++s)
        svg += fmt::format("<text x=\"{:.3f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", f.x_px(s), y1 + 18, s);
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", x0, y0,
                       x1 - x0, y1 - y0);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">Session</text>\n", (x0 + x1) / 2.0, f.height - 16);
    svg += fmt::format("<text transform=\"translate(18 {}) rotate(-90)\" text-anchor=\"middle\">Accuracy (%)</text>\n",
                       (y0 + y1) / 2.0);

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto* color = palette[i % palette.size()];
        std::string points;
        for (std::size_t s = 0; s < series[i].values.size(); ++s)
            points += fmt::format("{}{:.6f},{:.6f}", s ? " " : "", f.x_px(s), f.y_px(series[i].values[s]));
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, points);
        for (std::size_t s = 0; s < series[i].values.size(); ++s)
            svg += fmt::format("<circle cx=\"{:.6f}\" cy=\"{:.6f}\" r=\"3\" fill=\"{}\"/>\n", f.x_px(s),
                               f.y_px(series[i].values[s]), color);
        const double ly = y0 + 16.0 * static_cast<double>(i) + 8.0;
        svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n", x1 + 10, ly,
                           x1 + 28, ly, color);
        svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", x1 + 32, ly + 4, escape(series[i].name));
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace fcac
