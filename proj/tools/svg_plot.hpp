#pragma once

// Rainbow line charts: one polyline per year, coloured from red (first
// year) to violet (last year).

#include "gfts/panel.hpp"
#include "gfts/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

namespace gfts::plot {

inline std::string hsl_to_hex(double h) {
    // Saturation 0.85, lightness 0.45.
    const double s = 0.85, l = 0.45;
    const double c = (1.0 - std::abs(2.0 * l - 1.0)) * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) r = c, g = x;
    else if (hp < 2) r = x, g = c;
    else if (hp < 3) g = c, b = x;
    else if (hp < 4) g = x, b = c;
    else if (hp < 5) r = x, b = c;
    else r = c, b = x;
    const double m = l - c / 2.0;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                  static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
    return buf;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// curves: years x ages on the log scale.
inline void rainbow_svg(std::ostream& out, const std::string& title, const AgeGrid& grid, const Matrix& curves,
                        int first_year) {
    const double W = 640, H = 420, ml = 60, mr = 20, mt = 36, mb = 46;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index t = 0; t < curves.rows(); ++t)
        for (Eigen::Index i = 0; i < curves.cols(); ++i)
            if (std::isfinite(curves(t, i))) {
                lo = std::min(lo, curves(t, i));
                hi = std::max(hi, curves(t, i));
            }
    if (!std::isfinite(lo)) lo = -1, hi = 0;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double a0 = grid.ages.front(), a1 = grid.ages.back() > a0 ? grid.ages.back() : a0 + 1;
    auto X = [&](double a) { return ml + (a - a0) / (a1 - a0) * (W - ml - mr); };
    auto Y = [&](double v) { return mt + (hi - v) / (hi - lo) * (H - mt - mb); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
        << W << ' ' << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
        << title << "</text>\n";
    out << "<g stroke=\"#444\" fill=\"none\"><line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
        << "\" y2=\"" << H - mb << "\"/><line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << H - mb << "\"/></g>\n";
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">\n";
    for (int k = 0; k <= 5; ++k) {
        const double a = a0 + (a1 - a0) * k / 5.0;
        out << "<text x=\"" << fmt(X(a)) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">"
            << text::format_double(std::round(a)) << "</text>\n";
        const double v = lo + (hi - lo) * k / 5.0;
        out << "<text x=\"" << ml - 6 << "\" y=\"" << fmt(Y(v) + 4) << "\" text-anchor=\"end\">" << fmt(v)
            << "</text>\n";
    }
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">Age</text>\n";
    out << "<text transform=\"translate(14," << H / 2 << ") rotate(-90)\" text-anchor=\"middle\">Log death rate</text>\n";
    out << "</g>\n";
    const auto n = curves.rows();
    for (Eigen::Index t = 0; t < n; ++t) {
        const double hue = n > 1 ? 270.0 * static_cast<double>(t) / static_cast<double>(n - 1) : 0.0;
        out << "<polyline data-year=\"" << first_year + t << "\" fill=\"none\" stroke-width=\"1\" stroke=\""
            << hsl_to_hex(hue) << "\" points=\"";
        bool first = true;
        for (Eigen::Index i = 0; i < curves.cols(); ++i) {
            if (!std::isfinite(curves(t, i))) continue;
            if (!first) out << ' ';
            out << fmt(X(grid.ages[static_cast<std::size_t>(i)])) << ',' << fmt(Y(curves(t, i)));
            first = false;
        }
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace gfts::plot
