#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace complora {

/// Shortest decimal that round-trips to the same double ("%.17g"-free, locale
/// independent). Output is byte-stable for equal inputs.
std::string format_double(double x);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal SVG line chart: axes, min/max tick labels, one polyline per
/// series and a legend. `log_y` plots log10 of strictly positive values.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series, bool log_y = false);

}  // namespace complora
