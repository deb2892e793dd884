#pragma once

#include <string>
#include <vector>

namespace trpa {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Self-contained SVG line chart. Non-finite points are skipped.
std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                       int width = 640, int height = 360);

/// Stacks several charts vertically in one document.
std::string stack_charts(const std::vector<std::string>& charts, int width = 640, int height = 360);

}  // namespace trpa
