#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/geometry.hpp"

namespace swarmctl {

inline constexpr double kDefaultGoalDelta = 5.0;  // squared-distance tolerance, cells^2
inline constexpr double kPathWallMargin = 10.0;   // min waypoint distance from any wall, cells

/// Ordered waypoint list with the squared-distance goal tolerance and a
/// cursor marking the next waypoint to satisfy. cursor == size means the
/// path is complete.
struct TargetPath {
    std::vector<GridPosition> waypoints;
    double delta = kDefaultGoalDelta;
    std::size_t cursor = 0;

    bool complete() const { return cursor >= waypoints.size(); }
    const GridPosition& current() const { return waypoints.at(cursor); }
};

/// Advances the cursor past every consecutive waypoint the swarm currently
/// satisfies. Waypoints are never skipped: each advance re-tests the new
/// current waypoint against the same position.
inline TargetPath path_advance(TargetPath path, const GridPosition& p_s) {
    if (path.waypoints.empty()) throw std::invalid_argument("path_advance: empty path");
    while (!path.complete() && goal_reached(path.current(), p_s, path.delta)) {
        ++path.cursor;
    }
    return path;
}

/// Declarative path description, parseable from config.
struct PathSpec {
    std::string shape = "circle";  // circle | polyline | letters
    GridPosition center{150.0, 150.0};
    double radius = 60.0;
    int n_points = 36;  // waypoints per lap
    int laps = 3;
    std::string text = "ETH";
    std::vector<GridPosition> points;
    double delta = kDefaultGoalDelta;
};

namespace detail {

using Stroke = std::vector<GridPosition>;  // polyline in a unit glyph box

// Glyph strokes in a [0,1]x[0,1] box, y up, pen-up between strokes.
inline const std::map<char, std::vector<Stroke>>& glyph_strokes() {
    static const std::map<char, std::vector<Stroke>> table = {
        {'A', {{{0.0, 0.0}, {0.3, 1.0}, {0.6, 0.0}}, {{0.15, 0.5}, {0.45, 0.5}}}},
        {'E', {{{0.6, 1.0}, {0.0, 1.0}, {0.0, 0.0}, {0.6, 0.0}}, {{0.0, 0.5}, {0.45, 0.5}}}},
        {'H', {{{0.0, 1.0}, {0.0, 0.0}}, {{0.0, 0.5}, {0.6, 0.5}}, {{0.6, 1.0}, {0.6, 0.0}}}},
        {'L', {{{0.0, 1.0}, {0.0, 0.0}, {0.6, 0.0}}}},
        {'R',
         {{{0.0, 0.0}, {0.0, 1.0}, {0.45, 1.0}, {0.6, 0.85}, {0.6, 0.65}, {0.45, 0.5}, {0.0, 0.5}},
          {{0.3, 0.5}, {0.6, 0.0}}}},
        {'S',
         {{{0.6, 0.88}, {0.48, 1.0}, {0.12, 1.0}, {0.0, 0.88}, {0.0, 0.62}, {0.12, 0.5},
           {0.48, 0.5}, {0.6, 0.38}, {0.6, 0.12}, {0.48, 0.0}, {0.12, 0.0}, {0.0, 0.12}}}},
        {'T', {{{0.0, 1.0}, {0.6, 1.0}}, {{0.3, 1.0}, {0.3, 0.0}}}},
    };
    return table;
}

// Resample a polyline so consecutive waypoints are at most `spacing` apart.
inline void append_resampled(std::vector<GridPosition>& out, const Stroke& stroke,
                             double spacing) {
    if (stroke.empty()) return;
    out.push_back(stroke.front());
    for (std::size_t i = 1; i < stroke.size(); ++i) {
        const GridPosition a = stroke[i - 1];
        const GridPosition b = stroke[i];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const int segs = std::max(1, static_cast<int>(std::ceil(len / spacing)));
        for (int s = 1; s <= segs; ++s) {
            const double t = static_cast<double>(s) / segs;
            out.push_back(GridPosition{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
}

}  // namespace detail

inline void validate_waypoints(const std::vector<GridPosition>& wps, const ChannelConfig& ch) {
    if (wps.empty()) throw std::invalid_argument("build_path: path has no waypoints");
    const double lo = kPathWallMargin;
    const double hi = static_cast<double>(ch.grid_n) - kPathWallMargin;
    for (const GridPosition& p : wps) {
        if (p.x < lo || p.x > hi || p.y < lo || p.y > hi)
            throw std::invalid_argument("build_path: waypoint closer than " +
                                        std::to_string(kPathWallMargin) +
                                        " cells to a channel wall");
    }
}

inline TargetPath build_path(const PathSpec& spec, const ChannelConfig& ch = ChannelConfig{}) {
    TargetPath path;
    path.delta = spec.delta;
    if (spec.delta < 0.0) throw std::invalid_argument("build_path: delta must be >= 0");

    if (spec.shape == "circle") {
        if (spec.radius <= 0.0 || spec.n_points < 1 || spec.laps < 1)
            throw std::invalid_argument("build_path: circle needs radius > 0, n_points >= 1, laps >= 1");
        for (int lap = 0; lap < spec.laps; ++lap) {
            for (int i = 0; i < spec.n_points; ++i) {
                const double theta = 2.0 * M_PI * i / spec.n_points;
                path.waypoints.push_back(GridPosition{spec.center.x + spec.radius * std::cos(theta),
                                                      spec.center.y + spec.radius * std::sin(theta)});
            }
        }
    } else if (spec.shape == "polyline") {
        path.waypoints = spec.points;
    } else if (spec.shape == "letters") {
        if (spec.text.empty()) throw std::invalid_argument("build_path: letters need text");
        const double n = static_cast<double>(ch.grid_n);
        const double usable = n - 2.0 * (kPathWallMargin + 4.0);
        const double len = static_cast<double>(spec.text.size());
        // Glyph aspect is 0.6 wide per unit height, letter gap 0.22 heights.
        const double glyph_h = std::min(0.37 * n, usable / (0.6 * len + 0.22 * (len - 1.0)));
        const double glyph_w = 0.6 * glyph_h;
        const double gap = 0.22 * glyph_h;
        const double total_w = len * glyph_w + (len - 1.0) * gap;
        double x0 = (n - total_w) / 2.0;
        const double y0 = (n - glyph_h) / 2.0;
        const double spacing = 9.0;
        for (char c : spec.text) {
            const auto it = detail::glyph_strokes().find(c);
            if (it == detail::glyph_strokes().end())
                throw std::invalid_argument(std::string("build_path: no stroke table for letter '") +
                                            c + "'");
            for (const detail::Stroke& stroke : it->second) {
                detail::Stroke placed;
                placed.reserve(stroke.size());
                for (const GridPosition& p : stroke)
                    placed.push_back(GridPosition{x0 + p.x * glyph_h, y0 + p.y * glyph_h});
                detail::append_resampled(path.waypoints, placed, spacing);
            }
            x0 += glyph_w + gap;
        }
    } else {
        throw std::invalid_argument("build_path: unknown shape '" + spec.shape + "'");
    }

    validate_waypoints(path.waypoints, ch);
    return path;
}

}  // namespace swarmctl
