#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/navigator.hpp"
#include "swarmctl/path.hpp"

namespace swarmctl {

namespace detail {

inline void svg_num(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    out.append(buf, res.ptr);
}

inline const char* pzt_color(int k) {
    switch (k) {
        case 1: return "#d62728";
        case 2: return "#1f77b4";
        case 3: return "#2ca02c";
        default: return "#ff7f0e";
    }
}

}  // namespace detail

/// Channel-frame trajectory plot: waypoints, the swarm track colored by the
/// transducer driving each segment, and the episode outcome.
inline std::string trajectory_svg(const EpisodeLog& log, const std::vector<GridPosition>& waypoints,
                                  int grid_n, const std::string& outcome) {
    const double scale = 2.0;
    const double pad = 30.0;
    const double side = grid_n * scale;
    auto X = [&](double x) { return pad + x * scale; };
    auto Y = [&](double y) { return pad + (grid_n - y) * scale; };  // grid y points up

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"";
    detail::svg_num(s, side + 2 * pad);
    s += "\" height=\"";
    detail::svg_num(s, side + 2 * pad + 20.0);
    s += "\">\n";
    s += "<rect x=\"";
    detail::svg_num(s, pad);
    s += "\" y=\"";
    detail::svg_num(s, pad);
    s += "\" width=\"";
    detail::svg_num(s, side);
    s += "\" height=\"";
    detail::svg_num(s, side);
    s += "\" fill=\"#fbfbf8\" stroke=\"#444444\" stroke-width=\"1\"/>\n";

    for (const GridPosition& w : waypoints) {
        s += "<circle cx=\"";
        detail::svg_num(s, X(w.x));
        s += "\" cy=\"";
        detail::svg_num(s, Y(w.y));
        s += "\" r=\"2.5\" fill=\"none\" stroke=\"#999999\" stroke-width=\"0.8\"/>\n";
    }

    for (std::size_t i = 1; i < log.size(); ++i) {
        s += "<line x1=\"";
        detail::svg_num(s, X(log[i - 1].x));
        s += "\" y1=\"";
        detail::svg_num(s, Y(log[i - 1].y));
        s += "\" x2=\"";
        detail::svg_num(s, X(log[i].x));
        s += "\" y2=\"";
        detail::svg_num(s, Y(log[i].y));
        s += "\" stroke=\"";
        s += detail::pzt_color(log[i - 1].k);
        s += "\" stroke-width=\"1.2\"/>\n";
    }
    if (!log.empty()) {
        s += "<circle cx=\"";
        detail::svg_num(s, X(log.front().x));
        s += "\" cy=\"";
        detail::svg_num(s, Y(log.front().y));
        s += "\" r=\"4\" fill=\"#222222\"/>\n";
    }

    for (int k = 1; k <= 4; ++k) {
        s += "<rect x=\"";
        detail::svg_num(s, pad + (k - 1) * 70.0);
        s += "\" y=\"8\" width=\"10\" height=\"10\" fill=\"";
        s += detail::pzt_color(k);
        s += "\"/>\n<text x=\"";
        detail::svg_num(s, pad + (k - 1) * 70.0 + 14.0);
        s += "\" y=\"17\" font-family=\"monospace\" font-size=\"11\">PZT ";
        s += std::to_string(k);
        s += "</text>\n";
    }
    s += "<text x=\"";
    detail::svg_num(s, pad);
    s += "\" y=\"";
    detail::svg_num(s, side + 2 * pad + 12.0);
    s += "\" font-family=\"monospace\" font-size=\"12\">outcome: ";
    s += outcome;
    s += " | steps: ";
    s += std::to_string(log.size());
    s += "</text>\n</svg>\n";
    return s;
}

/// Two-series per-step plot of the local (blended) and global prediction
/// errors.
inline std::string error_curves_svg(const EpisodeLog& log) {
    const double w = 640.0, h = 320.0, padl = 50.0, padb = 36.0, padt = 16.0, padr = 14.0;
    double max_err = 1e-9;
    for (const EpisodeRow& r : log) max_err = std::max({max_err, r.err_local, r.err_global});
    const double n_max = log.empty() ? 1.0 : static_cast<double>(log.back().n) + 1.0;
    auto X = [&](double n) { return padl + (w - padl - padr) * n / n_max; };
    auto Y = [&](double e) { return padt + (h - padt - padb) * (1.0 - e / max_err); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"";
    detail::svg_num(s, w);
    s += "\" height=\"";
    detail::svg_num(s, h);
    s += "\">\n<rect x=\"0\" y=\"0\" width=\"";
    detail::svg_num(s, w);
    s += "\" height=\"";
    detail::svg_num(s, h);
    s += "\" fill=\"#ffffff\"/>\n";

    auto polyline = [&](const char* color, auto value) {
        s += "<polyline fill=\"none\" stroke=\"";
        s += color;
        s += "\" stroke-width=\"1\" points=\"";
        for (const EpisodeRow& r : log) {
            detail::svg_num(s, X(static_cast<double>(r.n)));
            s += ',';
            detail::svg_num(s, Y(value(r)));
            s += ' ';
        }
        s += "\"/>\n";
    };
    polyline("#1f77b4", [](const EpisodeRow& r) { return r.err_local; });
    polyline("#d62728", [](const EpisodeRow& r) { return r.err_global; });

    // Axes and labels.
    s += "<line x1=\"";
    detail::svg_num(s, padl);
    s += "\" y1=\"";
    detail::svg_num(s, padt);
    s += "\" x2=\"";
    detail::svg_num(s, padl);
    s += "\" y2=\"";
    detail::svg_num(s, h - padb);
    s += "\" stroke=\"#222222\"/>\n<line x1=\"";
    detail::svg_num(s, padl);
    s += "\" y1=\"";
    detail::svg_num(s, h - padb);
    s += "\" x2=\"";
    detail::svg_num(s, w - padr);
    s += "\" y2=\"";
    detail::svg_num(s, h - padb);
    s += "\" stroke=\"#222222\"/>\n";
    s += "<text x=\"6\" y=\"";
    detail::svg_num(s, padt + 10.0);
    s += "\" font-family=\"monospace\" font-size=\"10\">";
    detail::svg_num(s, max_err);
    s += " cells/s</text>\n<text x=\"";
    detail::svg_num(s, w - padr - 60.0);
    s += "\" y=\"";
    detail::svg_num(s, h - padb + 14.0);
    s += "\" font-family=\"monospace\" font-size=\"10\">step ";
    s += std::to_string(static_cast<long>(n_max));
    s += "</text>\n";
    s += "<text x=\"";
    detail::svg_num(s, padl + 8.0);
    s += "\" y=\"";
    detail::svg_num(s, padt + 12.0);
    s += "\" font-family=\"monospace\" font-size=\"11\" fill=\"#1f77b4\">local prediction error</text>\n";
    s += "<text x=\"";
    detail::svg_num(s, padl + 8.0);
    s += "\" y=\"";
    detail::svg_num(s, padt + 26.0);
    s += "\" font-family=\"monospace\" font-size=\"11\" fill=\"#d62728\">global prediction error</text>\n";
    s += "</svg>\n";
    return s;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_text_file: cannot open '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write_text_file: write failed for '" + path + "'");
}

}  // namespace swarmctl
