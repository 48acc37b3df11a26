#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/dataset.hpp"
#include "swarmctl/mt19937.hpp"
#include "swarmctl/parallel.hpp"
#include "swarmctl/plant.hpp"

namespace swarmctl {

inline constexpr int kFramesPerCombo = 99;  // 3 s at 33 fps

/// The action-space sweep: 6 voltages x 41 frequencies x 4 transducers.
struct SearchGrid {
    std::vector<double> voltages;     // {10, 12, ..., 20} V
    std::vector<double> frequencies;  // 1.5..2.5 MHz in 0.025 steps
    std::vector<int> transducers;     // {1, 2, 3, 4}

    std::size_t combo_count() const {
        return voltages.size() * frequencies.size() * transducers.size();
    }
};

struct GridCombo {
    int combo_id;
    int k;
    double f_mhz;
    double v_pp;
};

inline SearchGrid enumerate_grid() {
    SearchGrid g;
    for (int v = 10; v <= 20; v += 2) g.voltages.push_back(static_cast<double>(v));
    // Integer millihertz keeps grid frequencies exactly representable and
    // guarantees 2.0 MHz lands on the grid.
    for (int i = 0; i <= 40; ++i) g.frequencies.push_back((1500 + 25 * i) / 1000.0);
    for (int k = 1; k <= 4; ++k) g.transducers.push_back(k);
    return g;
}

/// Deterministic (k-major, then frequency, then voltage) combo order.
inline std::vector<GridCombo> grid_combos(const SearchGrid& g) {
    std::vector<GridCombo> combos;
    combos.reserve(g.combo_count());
    int id = 0;
    for (int k : g.transducers)
        for (double f : g.frequencies)
            for (double v : g.voltages) combos.push_back(GridCombo{id++, k, f, v});
    return combos;
}

struct CollectResult {
    std::vector<DatasetRecord> records;
    std::vector<int> failed_combos;  // combos whose swarm never coalesced
};

namespace detail {

/// Start the swarm in a band near the actuated wall so even the fastest
/// on-resonance combos can run the full three seconds before reaching the
/// opposite wall.
inline GridPosition sweep_start_position(int k, int grid_n, Mt19937State& rng) {
    const double n = static_cast<double>(grid_n);
    const double along = rng.uniform(0.07 * n, 0.25 * n);
    const double across = rng.uniform(0.15 * n, 0.85 * n);
    switch (k) {
        case 1: return GridPosition{along, across};          // pushed +x
        case 2: return GridPosition{n - 1.0 - along, across}; // pushed -x
        case 3: return GridPosition{across, along};          // pushed +y
        default: return GridPosition{across, n - 1.0 - along};
    }
}

}  // namespace detail

/// Runs the full sweep: per combo, coalesce a fresh swarm at a pseudo-random
/// position and actuate constantly for three seconds, recording per-frame
/// position and forward-difference velocity. Combos sharing (k, f) reuse the
/// same coalescence seed so voltage is the only thing that varies between
/// them.
inline CollectResult collect(const SearchGrid& grid, const PlantConfig& cfg,
                             std::uint32_t seed, const ChannelConfig& channel = ChannelConfig{}) {
    const Plant plant(cfg, channel);
    const std::vector<GridCombo> combos = grid_combos(grid);
    const std::size_t n_freq = grid.frequencies.size();
    const std::size_t n_volt = grid.voltages.size();

    std::vector<std::vector<DatasetRecord>> per_combo(combos.size());
    std::vector<int> failed(combos.size(), 0);

    parallel_for(combos.size(), [&](std::size_t ci) {
        const GridCombo& combo = combos[ci];
        const std::size_t kf_group =
            static_cast<std::size_t>(combo.combo_id) / n_volt;  // (k, f) pair index
        (void)n_freq;
        const ActionSpec action{combo.k, combo.v_pp, combo.f_mhz};

        for (std::uint32_t attempt = 0; attempt < 4; ++attempt) {
            Mt19937State rng(derive_seed(seed, static_cast<std::uint32_t>(kf_group) +
                                                   attempt * 1000003u));
            try {
                const GridPosition start =
                    detail::sweep_start_position(combo.k, channel.grid_n, rng);
                SwarmState swarm = coalesce_swarm_at(plant, start, rng);
                swarm.step = 0;  // per-combo recordings all start at drift phase zero

                std::array<GridPosition, kFramesPerCombo + 1> track;
                for (int frame = 0; frame <= kFramesPerCombo; ++frame) {
                    track[static_cast<std::size_t>(frame)] = swarm.centroid;
                    swarm = plant.transport_step(swarm, action, kFrameDt, rng);
                }

                std::vector<DatasetRecord>& out = per_combo[ci];
                out.reserve(kFramesPerCombo);
                for (int j = 0; j < kFramesPerCombo; ++j) {
                    const GridPosition& p = track[static_cast<std::size_t>(j)];
                    const GridPosition& q = track[static_cast<std::size_t>(j + 1)];
                    DatasetRecord r;
                    r.combo_id = combo.combo_id;
                    r.k = combo.k;
                    r.f_mhz = combo.f_mhz;
                    r.v_pp = combo.v_pp;
                    r.frame_idx = j;
                    r.t_s = j / kFrameRate;
                    r.x = p.x;
                    r.y = p.y;
                    r.dx_dt = (q.x - p.x) / kFrameDt;
                    r.dy_dt = (q.y - p.y) / kFrameDt;
                    out.push_back(r);
                }
                return;
            } catch (const std::runtime_error&) {
                per_combo[ci].clear();
            }
        }
        failed[ci] = 1;
    });

    CollectResult result;
    result.records.reserve(combos.size() * kFramesPerCombo);
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        if (failed[ci]) result.failed_combos.push_back(combos[ci].combo_id);
        for (const DatasetRecord& r : per_combo[ci]) result.records.push_back(r);
    }
    return result;
}

}  // namespace swarmctl
