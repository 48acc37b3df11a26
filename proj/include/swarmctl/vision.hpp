#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/geometry.hpp"
#include "swarmctl/mt19937.hpp"

namespace swarmctl::vision {

inline constexpr int kHiRes = 2048;
inline constexpr int kLoRes = 300;

template <typename T>
struct Image {
    int w = 0, h = 0;
    std::vector<T> px;

    Image() = default;
    Image(int width, int height, T fill = T{})
        : w(width), h(height), px(static_cast<std::size_t>(width) * height, fill) {}

    T& at(int x, int y) { return px[static_cast<std::size_t>(y) * w + x]; }
    T at(int x, int y) const { return px[static_cast<std::size_t>(y) * w + x]; }
};

using FrameHi = Image<std::uint16_t>;  // 2048 x 2048, 16-bit
using FrameLo = Image<std::uint8_t>;   // 300 x 300, 8-bit
using Mask = Image<std::uint8_t>;      // binary, 0 / 255

// --- Synthetic scene rendering ------------------------------------------------

struct SceneDisk {
    GridPosition center;  // cell coordinates
    double diameter_um = 100.0;
};

/// Scene description for the synthetic camera: one (optional) swarm plus
/// contaminant specks and auxiliary bubbles on a bright background.
struct SceneSpec {
    std::optional<SceneDisk> swarm;        // 50-200 um
    std::vector<SceneDisk> contaminants;   // 10-50 um
    std::vector<SceneDisk> bubbles;        // auxiliary microbubbles
    double background = 52000.0;           // 16-bit counts
    double object_intensity = 9000.0;
    double noise_sigma = 600.0;

    void validate() const {
        if (swarm && (swarm->diameter_um < 50.0 || swarm->diameter_um > 200.0))
            throw std::invalid_argument("SceneSpec: swarm diameter must be in [50, 200] um");
        for (const SceneDisk& d : contaminants)
            if (d.diameter_um < 10.0 || d.diameter_um > 50.0)
                throw std::invalid_argument("SceneSpec: contaminant diameter must be in [10, 50] um");
    }
};

inline constexpr double kUmPerHiPx = 400.0 / kHiRes;
inline constexpr double kHiPxPerCell = static_cast<double>(kHiRes) / kLoRes;
inline constexpr double kUmPerLoPx = 400.0 / kLoRes;

namespace detail {

inline void render_disk(Image<double>& canvas, const SceneDisk& d, double object_intensity) {
    const double cx = d.center.x * kHiPxPerCell;
    const double cy = d.center.y * kHiPxPerCell;
    const double r = 0.5 * d.diameter_um / kUmPerHiPx;
    const double aa = 1.5;  // anti-alias band, px
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - aa)));
    const int x1 = std::min(canvas.w - 1, static_cast<int>(std::ceil(cx + r + aa)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - aa)));
    const int y1 = std::min(canvas.h - 1, static_cast<int>(std::ceil(cy + r + aa)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dist = std::hypot(x - cx, y - cy);
            const double cover = std::clamp(0.5 + (r - dist) / aa, 0.0, 1.0);
            if (cover <= 0.0) continue;
            double& v = canvas.at(x, y);
            v += (object_intensity - v) * cover;
        }
}

}  // namespace detail

/// Bright background, dark anti-aliased disks, additive Gaussian sensor
/// noise. Deterministic for a given rng state.
inline FrameHi render_frame(const SceneSpec& scene, Mt19937State& rng) {
    scene.validate();
    Image<double> canvas(kHiRes, kHiRes, scene.background);
    if (scene.swarm) detail::render_disk(canvas, *scene.swarm, scene.object_intensity);
    for (const SceneDisk& d : scene.bubbles)
        detail::render_disk(canvas, d, scene.object_intensity);
    for (const SceneDisk& d : scene.contaminants)
        detail::render_disk(canvas, d, scene.object_intensity);

    FrameHi out(kHiRes, kHiRes);
    for (std::size_t i = 0; i < canvas.px.size(); ++i) {
        double v = canvas.px[i];
        if (scene.noise_sigma > 0.0) v += scene.noise_sigma * rng.gaussian();
        out.px[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
    return out;
}

/// Ground-truth object mask at working resolution (cell centers inside any
/// rendered disk). Used by tests to score the threshold stage.
inline Mask scene_lo_mask(const SceneSpec& scene) {
    Mask m(kLoRes, kLoRes, 0);
    auto stamp = [&](const SceneDisk& d) {
        const double r = 0.5 * d.diameter_um / kUmPerLoPx;
        for (int y = 0; y < kLoRes; ++y)
            for (int x = 0; x < kLoRes; ++x)
                if (std::hypot(x - d.center.x, y - d.center.y) <= r) m.at(x, y) = 255;
    };
    if (scene.swarm) stamp(*scene.swarm);
    for (const SceneDisk& d : scene.bubbles) stamp(d);
    for (const SceneDisk& d : scene.contaminants) stamp(d);
    return m;
}

// --- Pipeline stages ----------------------------------------------------------

/// Area-weighted block-mean downsample to 300x300 followed by a linear
/// 16-bit to 8-bit range map. Fractional block edges contribute
/// proportionally, so the mean is exact for the non-integer 2048/300 ratio.
inline FrameLo compress(const FrameHi& f) {
    if (f.w != kHiRes || f.h != kHiRes)
        throw std::invalid_argument("compress: expected a 2048x2048 frame");
    const double ratio = static_cast<double>(kHiRes) / kLoRes;

    struct Tap {
        int first;
        std::vector<double> w;
    };
    static const std::vector<Tap> taps = [] {
        std::vector<Tap> t(kLoRes);
        const double r = static_cast<double>(kHiRes) / kLoRes;
        for (int j = 0; j < kLoRes; ++j) {
            const double lo = j * r, hi = (j + 1) * r;
            const int first = static_cast<int>(std::floor(lo));
            const int last = std::min(kHiRes - 1, static_cast<int>(std::ceil(hi)) - 1);
            t[j].first = first;
            for (int i = first; i <= last; ++i) {
                const double overlap =
                    std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
                t[j].w.push_back(std::max(0.0, overlap));
            }
        }
        return t;
    }();

    // Horizontal pass.
    Image<double> tmp(kLoRes, kHiRes);
    for (int y = 0; y < kHiRes; ++y) {
        const std::uint16_t* row = &f.px[static_cast<std::size_t>(y) * kHiRes];
        for (int j = 0; j < kLoRes; ++j) {
            const Tap& t = taps[static_cast<std::size_t>(j)];
            double acc = 0.0;
            for (std::size_t i = 0; i < t.w.size(); ++i)
                acc += t.w[i] * row[t.first + static_cast<int>(i)];
            tmp.at(j, y) = acc / ratio;
        }
    }
    // Vertical pass and range map.
    FrameLo out(kLoRes, kLoRes);
    for (int j = 0; j < kLoRes; ++j) {
        const Tap& t = taps[static_cast<std::size_t>(j)];
        for (int x = 0; x < kLoRes; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < t.w.size(); ++i)
                acc += t.w[i] * tmp.at(x, t.first + static_cast<int>(i));
            const double mean16 = acc / ratio;
            out.at(x, j) = static_cast<std::uint8_t>(
                std::clamp(std::lround(mean16 * 255.0 / 65535.0), 0l, 255l));
        }
    }
    return out;
}

/// Session threshold from the pooled intensity histogram of a sample set of
/// frames: the Otsu split, returned so that "pixel < t" selects the dark
/// (microbubble) class.
inline int otsu_threshold(const std::vector<FrameLo>& sample_frames) {
    if (sample_frames.empty()) throw std::invalid_argument("otsu_threshold: no sample frames");
    std::array<double, 256> hist{};
    double total = 0.0;
    for (const FrameLo& f : sample_frames)
        for (std::uint8_t v : f.px) {
            hist[v] += 1.0;
            total += 1.0;
        }

    int lo = 0, hi = 255;
    while (lo < 255 && hist[static_cast<std::size_t>(lo)] == 0.0) ++lo;
    while (hi > 0 && hist[static_cast<std::size_t>(hi)] == 0.0) --hi;
    if (lo >= hi) return lo;  // single-valued histogram: everything is background

    double sum_all = 0.0;
    for (int v = 0; v <= 255; ++v) sum_all += v * hist[static_cast<std::size_t>(v)];
    double w0 = 0.0, sum0 = 0.0, best_sigma = -1.0;
    int best_t = lo;
    for (int t = lo; t < hi; ++t) {
        w0 += hist[static_cast<std::size_t>(t)];
        sum0 += t * hist[static_cast<std::size_t>(t)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double sigma = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (sigma > best_sigma) {
            best_sigma = sigma;
            best_t = t;
        }
    }
    return best_t + 1;  // dark class is [0, best_t]
}

/// Binary mask: 255 where the pixel is darker than t (microbubbles), else 0.
inline Mask threshold(const FrameLo& f, int t) {
    if (t < 0 || t > 255) throw std::invalid_argument("threshold: t must be in [0, 255]");
    Mask m(f.w, f.h);
    for (std::size_t i = 0; i < f.px.size(); ++i) m.px[i] = f.px[i] < t ? 255 : 0;
    return m;
}

/// 2x2 box blur (quarter weights, anchor top-left, replicate border) - the
/// literal reading of the pipeline's tiny blur kernel.
inline Image<std::uint8_t> blur(const Image<std::uint8_t>& in) {
    Image<std::uint8_t> out(in.w, in.h);
    for (int y = 0; y < in.h; ++y) {
        const int y1 = std::min(y + 1, in.h - 1);
        for (int x = 0; x < in.w; ++x) {
            const int x1 = std::min(x + 1, in.w - 1);
            const unsigned sum = static_cast<unsigned>(in.at(x, y)) + in.at(x1, y) +
                                 in.at(x, y1) + in.at(x1, y1);
            out.at(x, y) = static_cast<std::uint8_t>((sum + 2u) >> 2u);
        }
    }
    return out;
}

/// 3x3 Gaussian (1-2-1 separable) alternative for the blur stage.
inline Image<std::uint8_t> blur3_gaussian(const Image<std::uint8_t>& in) {
    Image<std::uint8_t> out(in.w, in.h);
    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi); };
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            unsigned acc = 0;
            static constexpr int kw[3] = {1, 2, 1};
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    acc += static_cast<unsigned>(kw[dy + 1] * kw[dx + 1]) *
                           in.at(clampi(x + dx, in.w - 1), clampi(y + dy, in.h - 1));
            out.at(x, y) = static_cast<std::uint8_t>((acc + 8u) >> 4u);
        }
    return out;
}

/// Standard Canny chain: 3x3 Sobel, 4-way non-maximum suppression, double
/// threshold, hysteresis by 8-connectivity. Thresholds compare against the
/// L2 Sobel magnitude.
inline Mask canny(const Image<std::uint8_t>& in, double low = 50.0, double high = 150.0) {
    if (low >= high) throw std::invalid_argument("canny: low must be < high");
    const int w = in.w, h = in.h;
    std::vector<float> mag(static_cast<std::size_t>(w) * h, 0.0f);
    std::vector<std::int8_t> dir(static_cast<std::size_t>(w) * h, 0);  // 0:h 1:d+ 2:v 3:d-

    auto px = [&](int x, int y) {
        return static_cast<int>(in.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int gx = -px(x - 1, y - 1) + px(x + 1, y - 1) - 2 * px(x - 1, y) +
                           2 * px(x + 1, y) - px(x - 1, y + 1) + px(x + 1, y + 1);
            const int gy = -px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1) +
                           px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1);
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            mag[i] = std::sqrt(static_cast<float>(gx) * gx + static_cast<float>(gy) * gy);
            const double ax = std::abs(gx), ay = std::abs(gy);
            if (ay <= 0.41421356 * ax) dir[i] = 0;                     // gradient ~ horizontal
            else if (ay >= 2.41421356 * ax) dir[i] = 2;                // gradient ~ vertical
            else dir[i] = ((gx > 0) == (gy > 0)) ? 1 : 3;              // diagonals
        }

    auto mag_at = [&](int x, int y) -> float {
        if (x < 0 || y < 0 || x >= w || y >= h) return 0.0f;
        return mag[static_cast<std::size_t>(y) * w + x];
    };
    static constexpr int off[4][2] = {{1, 0}, {1, 1}, {0, 1}, {1, -1}};

    Mask edges(w, h, 0);
    std::vector<std::uint8_t> grade(static_cast<std::size_t>(w) * h, 0);  // 1 weak, 2 strong
    std::queue<std::pair<int, int>> seeds;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const float m = mag[i];
            if (m < low) continue;
            const int dx = off[dir[i]][0], dy = off[dir[i]][1];
            // Keep one pixel of equal-magnitude plateaus along the gradient.
            if (!(m > mag_at(x - dx, y - dy) && m >= mag_at(x + dx, y + dy))) continue;
            if (m >= high) {
                grade[i] = 2;
                seeds.emplace(x, y);
            } else {
                grade[i] = 1;
            }
        }
    while (!seeds.empty()) {
        const auto [x, y] = seeds.front();
        seeds.pop();
        edges.at(x, y) = 255;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (grade[ni] == 1) {
                    grade[ni] = 2;
                    seeds.emplace(nx, ny);
                }
            }
    }
    return edges;
}

// --- Contours -----------------------------------------------------------------

/// Closed outer border of one connected component plus the moments of the
/// region it encloses (border included).
struct Contour {
    std::vector<std::pair<int, int>> points;  // traced border pixels
    double m00 = 0.0;                         // enclosed area, px^2
    double m10 = 0.0;
    double m01 = 0.0;

    GridPosition centroid() const { return GridPosition{m10 / m00, m01 / m00}; }
    double equivalent_diameter_px() const { return 2.0 * std::sqrt(m00 / M_PI); }
};

namespace detail {

// Moore neighborhood, clockwise starting east.
inline constexpr int kMoore[8][2] = {{1, 0},  {1, 1},   {0, 1},  {-1, 1},
                                     {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};

/// Moore boundary trace of the component containing `start` (its top-left
/// pixel). Returns the closed border path.
inline std::vector<std::pair<int, int>> trace_border(const Mask& img, int sx, int sy) {
    auto is_fg = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < img.w && y < img.h && img.at(x, y) != 0;
    };
    std::vector<std::pair<int, int>> border;
    border.emplace_back(sx, sy);
    int cx = sx, cy = sy;
    int backtrack = 6;  // came from the north (scan order guarantees it's empty)
    while (true) {
        int found = -1;
        for (int s = 0; s < 8; ++s) {
            const int d = (backtrack + 1 + s) % 8;
            const int nx = cx + kMoore[d][0], ny = cy + kMoore[d][1];
            if (is_fg(nx, ny)) {
                found = d;
                cx = nx;
                cy = ny;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel
        if (cx == sx && cy == sy && border.size() > 1) break;
        border.emplace_back(cx, cy);
        backtrack = (found + 4) % 8;
    }
    return border;
}

/// Even-odd scanline moments of the polygon through the border pixel
/// centers, with the border itself included in the region.
inline void polygon_moments(const std::vector<std::pair<int, int>>& border, int w, int h,
                            double& m00, double& m10, double& m01) {
    int ymin = h, ymax = 0, xmin = w, xmax = 0;
    for (const auto& [x, y] : border) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
    }
    const int rw = xmax - xmin + 1;
    std::vector<std::uint8_t> region(static_cast<std::size_t>(rw) * (ymax - ymin + 1), 0);
    auto mark = [&](int x, int y) {
        region[static_cast<std::size_t>(y - ymin) * rw + (x - xmin)] = 1;
    };

    std::vector<double> xs;
    for (int y = ymin; y <= ymax; ++y) {
        xs.clear();
        for (std::size_t i = 0; i < border.size(); ++i) {
            const auto& a = border[i];
            const auto& b = border[(i + 1) % border.size()];
            if (a.second == b.second) continue;  // horizontal edge
            const int ylo = std::min(a.second, b.second);
            const int yhi = std::max(a.second, b.second);
            // Half-open [ylo, yhi) so shared vertices count exactly once.
            if (y < ylo || y >= yhi) continue;
            const double t = (static_cast<double>(y) - a.second) /
                             static_cast<double>(b.second - a.second);
            xs.push_back(a.first + t * (b.first - a.first));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
            const int x0 = static_cast<int>(std::floor(xs[i])) + 1;
            const int x1 = static_cast<int>(std::floor(xs[i + 1]));
            for (int x = std::max(x0, xmin); x <= std::min(x1, xmax); ++x) mark(x, y);
        }
    }
    for (const auto& [x, y] : border) mark(x, y);

    m00 = m10 = m01 = 0.0;
    for (int y = ymin; y <= ymax; ++y)
        for (int x = xmin; x <= xmax; ++x)
            if (region[static_cast<std::size_t>(y - ymin) * rw + (x - xmin)]) {
                m00 += 1.0;
                m10 += x;
                m01 += y;
            }
}

}  // namespace detail

/// Outer borders of the 8-connected components of a binary image, by border
/// following, with enclosed-region moments per contour.
inline std::vector<Contour> contours(const Mask& edges) {
    std::vector<Contour> out;
    std::vector<std::uint8_t> labeled(edges.px.size(), 0);
    for (int y = 0; y < edges.h; ++y)
        for (int x = 0; x < edges.w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * edges.w + x;
            if (edges.px[i] == 0 || labeled[i]) continue;

            // Flood-label the component so each yields one outer border.
            std::vector<std::pair<int, int>> stack{{x, y}};
            labeled[i] = 1;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= edges.w || ny >= edges.h) continue;
                        const std::size_t ni = static_cast<std::size_t>(ny) * edges.w + nx;
                        if (edges.px[ni] != 0 && !labeled[ni]) {
                            labeled[ni] = 1;
                            stack.emplace_back(nx, ny);
                        }
                    }
            }

            Contour c;
            c.points = detail::trace_border(edges, x, y);
            if (c.points.size() < 3) continue;
            detail::polygon_moments(c.points, edges.w, edges.h, c.m00, c.m10, c.m01);
            if (c.m00 <= 0.0) continue;
            out.push_back(std::move(c));
        }
    return out;
}

/// Size gate plus largest-moment selection: contours outside the swarm size
/// band are contaminants (or debris) and never selected.
inline std::optional<GridPosition> select_swarm(const std::vector<Contour>& cs,
                                                double scale_um_per_px,
                                                double min_diameter_um = 50.0,
                                                double max_diameter_um = 200.0) {
    if (scale_um_per_px <= 0.0) throw std::invalid_argument("select_swarm: scale must be > 0");
    const Contour* best = nullptr;
    for (const Contour& c : cs) {
        const double d_um = c.equivalent_diameter_px() * scale_um_per_px;
        if (d_um < min_diameter_um || d_um > max_diameter_um) continue;
        if (!best || c.m00 > best->m00) best = &c;
    }
    if (!best) return std::nullopt;
    return best->centroid();
}

// --- Template tracker ----------------------------------------------------------

/// Normalized-cross-correlation template tracker with slow template
/// adaptation. Confidence below ~0.3 means the target was lost and the
/// caller should re-run detection.
struct TrackerState {
    Image<float> templ;
    GridPosition position;
    int search_radius = 10;
    double template_blend = 0.1;
    double confidence = 1.0;
};

inline constexpr double kTrackerReacquireConfidence = 0.3;

namespace detail {

inline Image<float> extract_patch(const FrameLo& f, int cx, int cy, int size) {
    Image<float> p(size, size);
    const int half = size / 2;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int sx = std::clamp(cx - half + x, 0, f.w - 1);
            const int sy = std::clamp(cy - half + y, 0, f.h - 1);
            p.at(x, y) = static_cast<float>(f.at(sx, sy));
        }
    return p;
}

inline double ncc(const Image<float>& a, const Image<float>& b) {
    double ma = 0.0, mb = 0.0;
    const std::size_t n = a.px.size();
    for (std::size_t i = 0; i < n; ++i) {
        ma += a.px[i];
        mb += b.px[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.px[i] - ma;
        const double db = b.px[i] - mb;
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return num / std::sqrt(va * vb);
}

}  // namespace detail

inline TrackerState init_tracker(const FrameLo& f, const GridPosition& position,
                                 int template_size, int search_radius = 10,
                                 double template_blend = 0.1) {
    if (template_size < 5) template_size = 5;
    if (template_size % 2 == 0) ++template_size;
    template_size = std::min(template_size, std::min(f.w, f.h) - 1);
    if (template_size % 2 == 0) --template_size;
    TrackerState ts;
    ts.templ = detail::extract_patch(f, cell_index(position.x, f.w), cell_index(position.y, f.h),
                                     template_size);
    ts.position = position;
    ts.search_radius = search_radius;
    ts.template_blend = template_blend;
    ts.confidence = 1.0;
    return ts;
}

/// One tracking update: NCC search around the last position, sub-pixel peak
/// refinement, and template blending toward the matched patch.
inline TrackerState track(TrackerState ts, const FrameLo& f) {
    const int size = ts.templ.w;
    const int cx = cell_index(ts.position.x, f.w);
    const int cy = cell_index(ts.position.y, f.h);
    const int r = ts.search_radius;

    const int side = 2 * r + 1;
    std::vector<double> scores(static_cast<std::size_t>(side) * side, -2.0);
    double best = -2.0;
    int bu = 0, bv = 0;
    for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) {
            const int px = cx + du, py = cy + dv;
            if (px < 0 || py < 0 || px >= f.w || py >= f.h) continue;
            const Image<float> patch = detail::extract_patch(f, px, py, size);
            const double s = detail::ncc(ts.templ, patch);
            scores[static_cast<std::size_t>(dv + r) * side + (du + r)] = s;
            if (s > best) {
                best = s;
                bu = du;
                bv = dv;
            }
        }

    auto score_at = [&](int du, int dv) -> double {
        if (du < -r || dv < -r || du > r || dv > r) return -2.0;
        return scores[static_cast<std::size_t>(dv + r) * side + (du + r)];
    };
    auto refine = [&](double sm, double s0, double sp) -> double {
        if (sm <= -2.0 || sp <= -2.0) return 0.0;
        const double denom = sm - 2.0 * s0 + sp;
        if (denom >= 0.0) return 0.0;
        return std::clamp(0.5 * (sm - sp) / denom, -0.5, 0.5);
    };
    const double fx = refine(score_at(bu - 1, bv), best, score_at(bu + 1, bv));
    const double fy = refine(score_at(bu, bv - 1), best, score_at(bu, bv + 1));

    ts.position = clamp_to_channel(
        GridPosition{static_cast<double>(cx + bu) + fx, static_cast<double>(cy + bv) + fy}, f.w);
    ts.confidence = best;

    const Image<float> matched = detail::extract_patch(f, cx + bu, cy + bv, size);
    for (std::size_t i = 0; i < ts.templ.px.size(); ++i)
        ts.templ.px[i] = static_cast<float>((1.0 - ts.template_blend) * ts.templ.px[i] +
                                            ts.template_blend * matched.px[i]);
    return ts;
}

// --- Detection + tracking orchestration ----------------------------------------

struct DetectionResult {
    GridPosition position;
    double diameter_um = 0.0;
};

/// Full detection chain on one working-resolution frame.
inline std::optional<DetectionResult> detect_swarm(const FrameLo& frame, int threshold_t,
                                                   double canny_low = 50.0,
                                                   double canny_high = 150.0) {
    const Mask mask = threshold(frame, threshold_t);
    const Image<std::uint8_t> blurred = blur(mask);
    const Mask edges = canny(blurred, canny_low, canny_high);
    const std::vector<Contour> cs = contours(edges);
    std::optional<GridPosition> pos = select_swarm(cs, kUmPerLoPx);
    if (!pos) return std::nullopt;
    // Recover the selected contour's size for template sizing.
    double d_um = 0.0;
    for (const Contour& c : cs) {
        const double d = c.equivalent_diameter_px() * kUmPerLoPx;
        if (d < 50.0 || d > 200.0) continue;
        const GridPosition g = c.centroid();
        if (g.x == pos->x && g.y == pos->y) d_um = d;
    }
    return DetectionResult{*pos, d_um};
}

/// Per-frame observation source: detection on the first frame (and whenever
/// tracking confidence collapses), correlation tracking otherwise.
class SwarmObserver {
  public:
    struct Output {
        GridPosition position;
        double confidence = 0.0;
        bool from_detection = false;
        bool valid = false;
    };

    explicit SwarmObserver(int threshold_t, int search_radius = 10)
        : threshold_(threshold_t), search_radius_(search_radius) {}

    int session_threshold() const { return threshold_; }

    Output observe(const FrameLo& frame) {
        Output out;
        if (tracker_) {
            TrackerState next = track(*tracker_, frame);
            if (next.confidence >= kTrackerReacquireConfidence) {
                tracker_ = std::move(next);
                out.position = tracker_->position;
                out.confidence = tracker_->confidence;
                out.valid = true;
                return out;
            }
            tracker_.reset();  // lost: fall through to detection
        }
        const auto det = detect_swarm(frame, threshold_);
        out.from_detection = true;
        if (!det) return out;
        const int template_size =
            static_cast<int>(std::lround(det->diameter_um / kUmPerLoPx)) + 21;
        tracker_ = init_tracker(frame, det->position, template_size, search_radius_);
        out.position = det->position;
        out.confidence = 1.0;
        out.valid = true;
        return out;
    }

  private:
    int threshold_;
    int search_radius_;
    std::optional<TrackerState> tracker_;
};

// --- PGM I/O --------------------------------------------------------------------

inline void save_pgm(const FrameLo& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_pgm: cannot open '" + path + "'");
    out << "P5\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.px.data()),
              static_cast<std::streamsize>(img.px.size()));
    if (!out) throw std::runtime_error("save_pgm: write failed for '" + path + "'");
}

inline void save_pgm16(const FrameHi& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_pgm16: cannot open '" + path + "'");
    out << "P5\n" << img.w << " " << img.h << "\n65535\n";
    std::string buf;
    buf.reserve(img.px.size() * 2);
    for (std::uint16_t v : img.px) {  // most significant byte first, per PGM
        buf.push_back(static_cast<char>(v >> 8));
        buf.push_back(static_cast<char>(v & 0xff));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_pgm16: write failed for '" + path + "'");
}

namespace detail {

inline long pgm_token(std::istream& in, const std::string& path) {
    long v = -1;
    while (in) {
        int c = in.peek();
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        if (!(in >> v)) break;
        return v;
    }
    throw std::runtime_error("load_pgm: malformed header in '" + path + "'");
}

}  // namespace detail

inline FrameLo load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_pgm: cannot open '" + path + "'");
    char p, five;
    in >> p >> five;
    if (p != 'P' || five != '5') throw std::runtime_error("load_pgm: '" + path + "' is not P5");
    const long w = detail::pgm_token(in, path);
    const long h = detail::pgm_token(in, path);
    const long maxval = detail::pgm_token(in, path);
    if (maxval != 255) throw std::runtime_error("load_pgm: expected 8-bit PGM in '" + path + "'");
    in.get();  // single whitespace after maxval
    FrameLo img(static_cast<int>(w), static_cast<int>(h));
    in.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.px.size()))
        throw std::runtime_error("load_pgm: truncated pixel data in '" + path + "'");
    return img;
}

inline FrameHi load_pgm16(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_pgm16: cannot open '" + path + "'");
    char p, five;
    in >> p >> five;
    if (p != 'P' || five != '5') throw std::runtime_error("load_pgm16: '" + path + "' is not P5");
    const long w = detail::pgm_token(in, path);
    const long h = detail::pgm_token(in, path);
    const long maxval = detail::pgm_token(in, path);
    if (maxval != 65535)
        throw std::runtime_error("load_pgm16: expected 16-bit PGM in '" + path + "'");
    in.get();
    FrameHi img(static_cast<int>(w), static_cast<int>(h));
    std::vector<char> raw(img.px.size() * 2);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw std::runtime_error("load_pgm16: truncated pixel data in '" + path + "'");
    for (std::size_t i = 0; i < img.px.size(); ++i)
        img.px[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(raw[2 * i]) << 8) |
                                               static_cast<unsigned char>(raw[2 * i + 1]));
    return img;
}

}  // namespace swarmctl::vision
