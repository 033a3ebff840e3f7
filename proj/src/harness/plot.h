#pragma once

#include <string>
#include <vector>

namespace fatlab::harness {

// Every plot writes <stem>.svg and a <stem>.csv twin carrying exactly the
// plotted values, so the data layer survives without an image viewer.

struct Series {
    std::string name;
    std::vector<double> x, y;
};

void plot_lines(const std::string& stem, const std::string& title,
                const std::string& xlabel, const std::string& ylabel,
                const std::vector<Series>& series);

// Row-major k x k matrix.
void plot_heatmap(const std::string& stem, const std::string& title, int k,
                  const std::vector<double>& values);

// xy is interleaved (x0,y0,x1,y1,...); labels color the points.
void plot_scatter(const std::string& stem, const std::string& title,
                  const std::vector<double>& xy, const std::vector<int>& labels);

// pct[group][bin]; groups and bins label the axes.
void plot_grouped_bars(const std::string& stem, const std::string& title,
                       const std::vector<std::string>& groups,
                       const std::vector<std::string>& bins,
                       const std::vector<std::vector<double>>& pct);

}  // namespace fatlab::harness
