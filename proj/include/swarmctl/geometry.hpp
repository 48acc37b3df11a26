#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace swarmctl {

/// Square microfluidic channel discretized into grid_n x grid_n cells.
struct ChannelConfig {
    double width_um = 400.0;
    double height_um = 400.0;
    int grid_n = 300;

    double cell_um() const { return width_um / static_cast<double>(grid_n); }

    void validate() const {
        if (grid_n < 2) throw std::invalid_argument("ChannelConfig: grid_n must be >= 2");
        if (width_um <= 0.0 || height_um <= 0.0)
            throw std::invalid_argument("ChannelConfig: channel dimensions must be positive");
        if (width_um != height_um)
            throw std::invalid_argument("ChannelConfig: channel must be square");
    }
};

/// Position on the cell grid. Continuous-valued; fractional cells are
/// meaningful for sub-cell physics and are rounded only when indexing
/// per-cell tables.
struct GridPosition {
    double x = 0.0;
    double y = 0.0;
};

/// Motion in cells per second.
struct DisplacementVector {
    double dx = 0.0;
    double dy = 0.0;

    double norm() const { return std::hypot(dx, dy); }
};

inline bool inside_grid(const GridPosition& p, int grid_n) {
    return p.x >= 0.0 && p.x < static_cast<double>(grid_n) &&
           p.y >= 0.0 && p.y < static_cast<double>(grid_n);
}

/// Nearest-cell index for one axis, clamped to the valid range.
inline int cell_index(double coord, int grid_n) {
    const int i = static_cast<int>(std::llround(coord));
    if (i < 0) return 0;
    if (i >= grid_n) return grid_n - 1;
    return i;
}

inline GridPosition clamp_to_channel(const GridPosition& p, int grid_n) {
    const double hi = static_cast<double>(grid_n) - 1.0;
    GridPosition q = p;
    if (q.x < 0.0) q.x = 0.0;
    if (q.x > hi) q.x = hi;
    if (q.y < 0.0) q.y = 0.0;
    if (q.y > hi) q.y = hi;
    return q;
}

inline GridPosition to_physical_um(const GridPosition& p, const ChannelConfig& ch) {
    return GridPosition{p.x * ch.cell_um(), p.y * ch.cell_um()};
}

inline GridPosition from_physical_um(const GridPosition& um, const ChannelConfig& ch) {
    return GridPosition{um.x / ch.cell_um(), um.y / ch.cell_um()};
}

inline double squared_distance(const GridPosition& a, const GridPosition& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

/// Goal condition: squared Euclidean distance in cell units within delta.
inline bool goal_reached(const GridPosition& p_t, const GridPosition& p_s, double delta) {
    return squared_distance(p_t, p_s) <= delta;
}

}  // namespace swarmctl
