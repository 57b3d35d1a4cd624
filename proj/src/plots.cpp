#include "plots.hpp"

#include "common.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace dag {

namespace {

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) { return fmt::format("{:.6g}", v); }

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, bool log_x) {
    constexpr double W = 560, H = 400, left = 70, right = 150, top = 40, bottom = 55;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw Error(ErrorCode::InvalidArgument, "series x and y differ in length");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i]) || (log_x && !(s.x[i] > 0.0))) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        W, H);
    svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", left + pw / 2,
                       escape(title));
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", left, top,
                       pw, ph);
    for (int t = 0; t <= 4; ++t) {
        const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
        const double gx = left + pw * t / 4.0, gy = top + ph * (1.0 - t / 4.0);
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", gx, top + ph + 16,
                           log_x ? "1e" + num(fx) : num(fx));
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 6, gy + 4, num(fy));
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2, H - 12,
                       escape(x_label));
    svg += fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
                       top + ph / 2, top + ph / 2, escape(y_label));
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = kPalette[k % kPalette.size()];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i]) || (log_x && !(s.x[i] > 0.0))) continue;
            pts += fmt::format("{}{},{}", pts.empty() ? "" : " ", num(px(s.x[i])), num(py(s.y[i])));
        }
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", colour, pts);
        const double ly = top + 14 + 18.0 * static_cast<double>(k);
        svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                           left + pw + 10, ly, left + pw + 30, ly, colour);
        svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", left + pw + 35, ly + 4, escape(s.name));
    }
    return svg + "</svg>\n";
}

std::string svg_heatmap(const std::string& title, const std::string& row_label, const std::string& col_label,
                        const std::vector<std::string>& row_names, const std::vector<std::string>& col_names,
                        const std::vector<std::vector<double>>& values) {
    if (values.size() != row_names.size()) throw Error(ErrorCode::InvalidArgument, "heatmap row count mismatch");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& row : values) {
        if (row.size() != col_names.size()) throw Error(ErrorCode::InvalidArgument, "heatmap column count mismatch");
        for (double v : row)
            if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!(hi >= lo)) lo = 0, hi = 1;
    constexpr double cell = 70, left = 90, top = 50;
    const double W = left + cell * static_cast<double>(col_names.size()) + 20;
    const double H = top + cell * static_cast<double>(row_names.size()) + 60;
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        W, H);
    svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", W / 2,
                       escape(title));
    for (std::size_t r = 0; r < values.size(); ++r) {
        for (std::size_t c = 0; c < col_names.size(); ++c) {
            const double v = values[r][c];
            const double t = std::isfinite(v) && hi > lo ? (v - lo) / (hi - lo) : 0.5;
            // White to dark blue.
            const int red = static_cast<int>(std::lround(255 - 225 * t));
            const int green = static_cast<int>(std::lround(255 - 175 * t));
            const int blue = static_cast<int>(std::lround(255 - 75 * t));
            const double x = left + cell * static_cast<double>(c), y = top + cell * static_cast<double>(r);
            svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},{})\" "
                               "stroke=\"#333\"/>\n",
                               x, y, cell, cell, red, green, blue);
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{}</text>\n", x + cell / 2,
                               y + cell / 2 + 4, t > 0.6 ? "white" : "black",
                               std::isfinite(v) ? fmt::format("{:.4f}", v) : std::string("failed"));
        }
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 6,
                           top + cell * (static_cast<double>(r) + 0.5) + 4, escape(row_names[r]));
    }
    for (std::size_t c = 0; c < col_names.size(); ++c)
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                           left + cell * (static_cast<double>(c) + 0.5), top + cell * static_cast<double>(values.size()) + 16,
                           escape(col_names[c]));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                       left + cell * static_cast<double>(col_names.size()) / 2, H - 14, escape(col_label));
    svg += fmt::format("<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
                       top + cell * static_cast<double>(values.size()) / 2, top + cell * static_cast<double>(values.size()) / 2,
                       escape(row_label));
    return svg + "</svg>\n";
}

}  // namespace dag
