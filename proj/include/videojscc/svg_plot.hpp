// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#ifndef VIDEOJSCC_SVG_PLOT_HPP
#define VIDEOJSCC_SVG_PLOT_HPP

#include <string>
#include <utility>
#include <vector>

namespace videojscc {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y); non-finite y skipped
};

/// Static SVG line plot with axes, ticks, markers and a legend.
void write_svg_line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                         const std::string& ylabel, const std::vector<PlotSeries>& series);

}  // namespace videojscc

#endif  // VIDEOJSCC_SVG_PLOT_HPP
