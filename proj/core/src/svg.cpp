#include "trpa/svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace trpa {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string body(const std::string& title, const std::string& x_label, const std::vector<Series>& series, int width,
                 int height) {
    const double left = 60, right = 150, top = 30, bottom = 40;
    const double pw = width - left - right;
    const double ph = height - top - bottom;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return top + (1.0 - (v - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << std::setprecision(6);
    o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = x0 + (x1 - x0) * t / 4.0;
        const double fy = y0 + (y1 - y0) * t / 4.0;
        o << "<text x=\"" << sx(fx) << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
          << fx << "</text>\n";
        o << "<text x=\"" << left - 4 << "\" y=\"" << sy(fy) + 3 << "\" text-anchor=\"end\" font-size=\"10\">" << fy
          << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 6 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << escape(x_label) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            o << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
        }
        o << "\"/>\n";
        const double ly = top + 14 + 16.0 * static_cast<double>(k);
        o << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << escape(s.name)
          << "</text>\n";
    }
    return o.str();
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                       int width, int height) {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
      << body(title, x_label, series, width, height) << "</svg>\n";
    return o.str();
}

std::string stack_charts(const std::vector<std::string>& charts, int width, int height) {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height * static_cast<int>(charts.size()) << "\">\n";
    for (std::size_t i = 0; i < charts.size(); ++i) {
        o << "<g transform=\"translate(0," << height * static_cast<int>(i) << ")\">\n" << charts[i] << "</g>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace trpa
