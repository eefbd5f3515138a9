#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cliprl {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Renders a line chart as a standalone SVG document.
std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::vector<PlotSeries>& series);

void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                     const std::vector<PlotSeries>& series);

}  // namespace cliprl
