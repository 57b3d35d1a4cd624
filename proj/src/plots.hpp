#pragma once

#include <string>
#include <vector>

namespace dag {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Self-contained SVG documents; output depends only on the arguments.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, bool log_x = false);

// values[r][c] is drawn at row r, column c; row 0 at the top.
std::string svg_heatmap(const std::string& title, const std::string& row_label, const std::string& col_label,
                        const std::vector<std::string>& row_names, const std::vector<std::string>& col_names,
                        const std::vector<std::vector<double>>& values);

}  // namespace dag
