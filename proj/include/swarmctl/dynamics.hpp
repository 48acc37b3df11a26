#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/csv.hpp"
#include "swarmctl/dataset.hpp"
#include "swarmctl/geometry.hpp"
#include "swarmctl/grid_search.hpp"
#include "swarmctl/parallel.hpp"

namespace swarmctl {

struct LearnerConfig {
    double alpha = 0.05;          // EMA learning rate
    double beta = 0.5;            // bias towards global dynamics
    int window_m = 5;             // memory length, steps
    double bandwidth_cells = 15;  // regression kernel bandwidth
    double min_neighbors = 8;     // minimum effective sample mass per cell fit
    double on_res_tol_mhz = 0.05; // half-width of the "on-resonance" record window

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("LearnerConfig: alpha in [0,1]");
        if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("LearnerConfig: beta in [0,1]");
        if (window_m < 1) throw std::invalid_argument("LearnerConfig: window_m >= 1");
        if (bandwidth_cells <= 0.0) throw std::invalid_argument("LearnerConfig: bandwidth > 0");
        if (min_neighbors < 0.0) throw std::invalid_argument("LearnerConfig: min_neighbors >= 0");
    }
};

/// Expected per-second displacement per cell per transducer. Stored as
/// doubles in (y, x, component, transducer) row-major order; the on-disk
/// format quantizes to 32-bit floats.
struct DynamicsMatrix {
    enum class Provenance { global, local, combined };

    int grid_n = 300;
    Provenance tag = Provenance::global;
    std::vector<double> values;  // grid_n * grid_n * 2 * 4

    static DynamicsMatrix filled(int grid_n, double value, Provenance tag) {
        DynamicsMatrix m;
        m.grid_n = grid_n;
        m.tag = tag;
        m.values.assign(static_cast<std::size_t>(grid_n) * grid_n * 2 * 4, value);
        return m;
    }

    std::size_t index(int x, int y, int comp, int k) const {
        return ((static_cast<std::size_t>(y) * grid_n + x) * 2 + comp) * 4 +
               static_cast<std::size_t>(k - 1);
    }

    double& at(int x, int y, int comp, int k) { return values[index(x, y, comp, k)]; }
    double at(int x, int y, int comp, int k) const { return values[index(x, y, comp, k)]; }

    /// Prediction at the cell containing p for transducer k.
    DisplacementVector predict(const GridPosition& p, int k) const {
        const int cx = cell_index(p.x, grid_n);
        const int cy = cell_index(p.y, grid_n);
        return DisplacementVector{at(cx, cy, 0, k), at(cx, cy, 1, k)};
    }

    bool same_shape(const DynamicsMatrix& other) const {
        return grid_n == other.grid_n && values.size() == other.values.size();
    }
};

/// One closed-loop observation: where the swarm was, which transducer fired,
/// and the velocity that resulted.
struct Observation {
    GridPosition position;
    int k = 1;
    DisplacementVector velocity;
};

/// Resonance estimate for transducer k: the grid frequency with the largest
/// summed record speed (velocity-weighted sample density over a uniform
/// frequency grid). Ties break toward the lower frequency.
inline double estimate_resonance(const std::vector<DatasetRecord>& records, int k,
                                 const std::vector<double>& grid_frequencies =
                                     enumerate_grid().frequencies) {
    std::map<double, double> speed_sum;
    for (double f : grid_frequencies) speed_sum[f] = -1.0;  // -1 marks "no records seen"
    for (const DatasetRecord& r : records) {
        if (r.k != k) continue;
        auto it = speed_sum.find(r.f_mhz);
        if (it == speed_sum.end()) continue;  // off-grid records don't vote
        if (it->second < 0.0) it->second = 0.0;
        it->second += std::hypot(r.dx_dt, r.dy_dt);
    }
    double best_f = 0.0, best_sum = -1.0;
    for (const auto& [f, sum] : speed_sum) {
        if (sum < 0.0)
            throw std::runtime_error("estimate_resonance: no records for transducer " +
                                     std::to_string(k) + " at " + std::to_string(f) + " MHz");
        if (sum > best_sum) {
            best_sum = sum;
            best_f = f;
        }
    }
    return best_f;
}

namespace detail {

struct FitSample {
    double x, y, vx, vy;
};

struct CellFitStats {
    long regressed = 0;
    long mean_fallback = 0;
    long nearest_fallback = 0;
};

/// Locally weighted degree-1 regression at one cell center. Falls back to
/// the weighted mean when the normal matrix is ill-conditioned (samples
/// along a line cannot pin down a plane) and to the nearest sample when the
/// neighborhood carries too little weight.
inline void lwlr_cell(double cx, double cy, const std::vector<FitSample>& samples,
                      std::span<const std::size_t> candidates, double bandwidth,
                      double min_mass, double& out_vx, double& out_vy, CellFitStats& stats) {
    const double h2 = bandwidth * bandwidth;
    const double cutoff2 = 16.0 * h2;  // beyond 4 bandwidths the weight is negligible

    double s00 = 0, s10 = 0, s01 = 0, s20 = 0, s11 = 0, s02 = 0;
    double bx0 = 0, bx1 = 0, bx2 = 0, by0 = 0, by1 = 0, by2 = 0;
    for (std::size_t idx : candidates) {
        const FitSample& s = samples[idx];
        const double dx = s.x - cx;
        const double dy = s.y - cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 > cutoff2) continue;
        const double w = std::exp(-d2 / (2.0 * h2));
        s00 += w;
        s10 += w * dx;
        s01 += w * dy;
        s20 += w * dx * dx;
        s11 += w * dx * dy;
        s02 += w * dy * dy;
        bx0 += w * s.vx;
        bx1 += w * dx * s.vx;
        bx2 += w * dy * s.vx;
        by0 += w * s.vy;
        by1 += w * dx * s.vy;
        by2 += w * dy * s.vy;
    }

    if (s00 < min_mass) {
        // Nearest-neighbor estimate over the full sample set.
        double best_d2 = 0.0;
        std::size_t best = samples.size();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double dx = samples[i].x - cx;
            const double dy = samples[i].y - cy;
            const double d2 = dx * dx + dy * dy;
            if (best == samples.size() || d2 < best_d2) {
                best = i;
                best_d2 = d2;
            }
        }
        out_vx = samples[best].vx;
        out_vy = samples[best].vy;
        stats.nearest_fallback++;
        return;
    }

    // Cholesky of [[s00 s10 s01], [s10 s20 s11], [s01 s11 s02]].
    const double l00 = std::sqrt(s00);
    const double l10 = s10 / l00;
    const double l20 = s01 / l00;
    const double d11 = s20 - l10 * l10;
    const double d22p = s02 - l20 * l20;
    bool well_conditioned = d11 > 1e-9 * s00 * h2;
    double l11 = 0, l21 = 0, d22 = 0;
    if (well_conditioned) {
        l11 = std::sqrt(d11);
        l21 = (s11 - l20 * l10) / l11;
        d22 = d22p - l21 * l21;
        well_conditioned = d22 > 1e-9 * s00 * h2;
    }

    if (!well_conditioned) {
        out_vx = bx0 / s00;
        out_vy = by0 / s00;
        stats.mean_fallback++;
        return;
    }
    const double l22 = std::sqrt(d22);

    auto solve_c0 = [&](double b0, double b1, double b2) {
        // Forward then back substitution; only the constant coefficient is
        // needed (the fit is centered at the cell).
        const double z0 = b0 / l00;
        const double z1 = (b1 - l10 * z0) / l11;
        const double z2 = (b2 - l20 * z0 - l21 * z1) / l22;
        const double c2 = z2 / l22;
        const double c1 = (z1 - l21 * c2) / l11;
        return (z0 - l10 * c1 - l20 * c2) / l00;
    };
    out_vx = solve_c0(bx0, bx1, bx2);
    out_vy = solve_c0(by0, by1, by2);
    stats.regressed++;
}

}  // namespace detail

struct GlobalFitReport {
    std::array<double, 4> resonances_mhz{};
    std::array<long, 4> samples_used{};
    long cells_regressed = 0;
    long cells_mean_fallback = 0;
    long cells_nearest_fallback = 0;
};

/// Builds the global dynamics matrix from sweep records: estimates each
/// transducer's resonance, keeps the full-voltage records near it, and runs
/// locally weighted linear regression onto a uniform cell grid.
inline DynamicsMatrix fit_global(const std::vector<DatasetRecord>& records,
                                 const LearnerConfig& cfg, int grid_n = 300,
                                 GlobalFitReport* report = nullptr) {
    cfg.validate();
    DynamicsMatrix m = DynamicsMatrix::filled(grid_n, 0.0, DynamicsMatrix::Provenance::global);
    GlobalFitReport rep;

    for (int k = 1; k <= 4; ++k) {
        const double f0 = estimate_resonance(records, k);
        rep.resonances_mhz[static_cast<std::size_t>(k - 1)] = f0;

        std::vector<detail::FitSample> samples;
        for (const DatasetRecord& r : records) {
            if (r.k != k || r.v_pp != kMaxVoltage) continue;
            if (std::abs(r.f_mhz - f0) > cfg.on_res_tol_mhz + 1e-12) continue;
            samples.push_back(detail::FitSample{r.x, r.y, r.dx_dt, r.dy_dt});
        }
        if (samples.empty())
            throw std::runtime_error("fit_global: no on-resonance samples for transducer " +
                                     std::to_string(k));
        rep.samples_used[static_cast<std::size_t>(k - 1)] = static_cast<long>(samples.size());

        // Bucket samples so each cell only scans its neighborhood.
        const double bucket = 4.0 * cfg.bandwidth_cells;
        const int nb = std::max(1, static_cast<int>(std::ceil(grid_n / bucket)));
        std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(nb) * nb);
        auto bucket_of = [&](double v) {
            return std::clamp(static_cast<int>(v / bucket), 0, nb - 1);
        };
        for (std::size_t i = 0; i < samples.size(); ++i)
            buckets[static_cast<std::size_t>(bucket_of(samples[i].y)) * nb +
                    bucket_of(samples[i].x)]
                .push_back(i);

        std::vector<detail::CellFitStats> row_stats(static_cast<std::size_t>(grid_n));
        parallel_for(static_cast<std::size_t>(grid_n), [&](std::size_t yi) {
            const int y = static_cast<int>(yi);
            std::vector<std::size_t> candidates;
            for (int x = 0; x < grid_n; ++x) {
                candidates.clear();
                const int bx = bucket_of(static_cast<double>(x));
                const int by = bucket_of(static_cast<double>(y));
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ux = bx + dx, uy = by + dy;
                        if (ux < 0 || uy < 0 || ux >= nb || uy >= nb) continue;
                        const auto& b = buckets[static_cast<std::size_t>(uy) * nb + ux];
                        candidates.insert(candidates.end(), b.begin(), b.end());
                    }
                double vx = 0, vy = 0;
                detail::lwlr_cell(static_cast<double>(x), static_cast<double>(y), samples,
                                  candidates, cfg.bandwidth_cells, cfg.min_neighbors, vx, vy,
                                  row_stats[yi]);
                m.at(x, y, 0, k) = vx;
                m.at(x, y, 1, k) = vy;
            }
        });
        for (const auto& st : row_stats) {
            rep.cells_regressed += st.regressed;
            rep.cells_mean_fallback += st.mean_fallback;
            rep.cells_nearest_fallback += st.nearest_fallback;
        }
    }
    if (report) *report = rep;
    return m;
}

/// Uniformly initialized local dynamics matrix.
inline DynamicsMatrix init_local(int grid_n = 300, double value = 0.0) {
    return DynamicsMatrix::filled(grid_n, value, DynamicsMatrix::Provenance::local);
}

/// EMA update of the local matrix at the visited (cell, transducer) entries:
/// each moves toward the window-mean of the velocities observed there. All
/// other entries are untouched.
inline DynamicsMatrix update_local(DynamicsMatrix q_local, std::span<const Observation> history,
                                   double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("update_local: alpha in [0,1]");
    if (history.empty()) return q_local;

    struct Accum {
        double sx = 0, sy = 0;
        int n = 0;
    };
    std::map<std::tuple<int, int, int>, Accum> visited;  // (cx, cy, k) -> window mean
    for (const Observation& obs : history) {
        const int cx = cell_index(obs.position.x, q_local.grid_n);
        const int cy = cell_index(obs.position.y, q_local.grid_n);
        Accum& a = visited[{cx, cy, obs.k}];
        a.sx += obs.velocity.dx;
        a.sy += obs.velocity.dy;
        a.n += 1;
    }
    for (const auto& [key, acc] : visited) {
        const auto [cx, cy, k] = key;
        const double mx = acc.sx / acc.n;
        const double my = acc.sy / acc.n;
        double& ex = q_local.at(cx, cy, 0, k);
        double& ey = q_local.at(cx, cy, 1, k);
        ex = (1.0 - alpha) * ex + alpha * mx;
        ey = (1.0 - alpha) * ey + alpha * my;
    }
    return q_local;
}

/// Elementwise convex blend of global and local dynamics. The endpoints
/// return exact copies of the corresponding input.
inline DynamicsMatrix combine(const DynamicsMatrix& q_global, const DynamicsMatrix& q_local,
                              double beta) {
    if (!q_global.same_shape(q_local))
        throw std::invalid_argument("combine: dynamics matrices have different shapes");
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("combine: beta in [0,1]");
    DynamicsMatrix out = (beta == 1.0) ? q_global : q_local;
    out.tag = DynamicsMatrix::Provenance::combined;
    if (beta == 1.0 || beta == 0.0) return out;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = beta * q_global.values[i] + (1.0 - beta) * q_local.values[i];
    return out;
}

/// Euclidean norm of (predicted - observed) velocity at the visited cell.
inline double prediction_error(const DynamicsMatrix& q, const GridPosition& position, int k,
                               const DisplacementVector& observed) {
    const DisplacementVector pred = q.predict(position, k);
    return std::hypot(pred.dx - observed.dx, pred.dy - observed.dy);
}

// --- File formats -----------------------------------------------------------

inline constexpr char kQMatrixMagic[5] = {'Q', 'D', 'Y', 'N', '1'};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void save_qmatrix(const DynamicsMatrix& m, const std::string& path) {
    std::string buf;
    buf.reserve(5 + 12 + m.values.size() * 4);
    buf.append(kQMatrixMagic, 5);
    detail::put_u32_le(buf, static_cast<std::uint32_t>(m.grid_n));
    detail::put_u32_le(buf, 2u);
    detail::put_u32_le(buf, 4u);
    for (double v : m.values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32_le(buf, bits);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_qmatrix: cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_qmatrix: write failed for '" + path + "'");
}

inline DynamicsMatrix load_qmatrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_qmatrix: cannot open '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 17 || std::memcmp(data.data(), kQMatrixMagic, 5) != 0)
        throw std::runtime_error("load_qmatrix: '" + path + "' is not a QDYN1 file");
    const auto* p = reinterpret_cast<const unsigned char*>(data.data()) + 5;
    const std::uint32_t grid_n = detail::get_u32_le(p);
    const std::uint32_t comps = detail::get_u32_le(p + 4);
    const std::uint32_t pzts = detail::get_u32_le(p + 8);
    if (comps != 2 || pzts != 4 || grid_n < 2)
        throw std::runtime_error("load_qmatrix: unsupported dimensions in '" + path + "'");
    const std::size_t count = static_cast<std::size_t>(grid_n) * grid_n * 2 * 4;
    if (data.size() != 17 + count * 4)
        throw std::runtime_error("load_qmatrix: truncated file '" + path + "'");
    DynamicsMatrix m;
    m.grid_n = static_cast<int>(grid_n);
    m.tag = DynamicsMatrix::Provenance::global;
    m.values.resize(count);
    const unsigned char* q = p + 12;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = detail::get_u32_le(q + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f))
            throw std::runtime_error("load_qmatrix: non-finite entry in '" + path + "'");
        m.values[i] = static_cast<double>(f);
    }
    return m;
}

inline void export_qmatrix_csv(const DynamicsMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("export_qmatrix_csv: cannot open '" + path + "'");
    std::string buf = "k,x,y,dx_dt,dy_dt\n";
    for (int k = 1; k <= 4; ++k)
        for (int y = 0; y < m.grid_n; ++y)
            for (int x = 0; x < m.grid_n; ++x) {
                append_number(buf, k);
                buf += ',';
                append_number(buf, x);
                buf += ',';
                append_number(buf, y);
                buf += ',';
                append_number(buf, m.at(x, y, 0, k));
                buf += ',';
                append_number(buf, m.at(x, y, 1, k));
                buf += '\n';
                if (buf.size() > (1 << 20)) {
                    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                    buf.clear();
                }
            }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("export_qmatrix_csv: write failed for '" + path + "'");
}

}  // namespace swarmctl
