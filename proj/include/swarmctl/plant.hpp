#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "swarmctl/action.hpp"
#include "swarmctl/geometry.hpp"
#include "swarmctl/mt19937.hpp"

namespace swarmctl {

inline constexpr double kFrameRate = 33.0;            // camera frames per second
inline constexpr double kFrameDt = 1.0 / kFrameRate;  // plant integration step, seconds

/// One gas-filled microbubble before coalescence.
struct Bubble {
    GridPosition position;
    double radius_um = 5.0;  // [1, 10]
    bool alive = true;
};

/// The coalesced microswarm the controller steers.
struct SwarmState {
    GridPosition centroid;
    double diameter_um = 100.0;     // [50, 200]
    double responsiveness = 1.0;    // (0, 1], decays slowly over an experiment
    long step = 0;                  // plant frames elapsed (drives field drift)
};

struct PlantConfig {
    std::array<double, 4> resonances_mhz{2.0, 2.0, 2.225, 2.0};
    double sigma_f_mhz = 0.05;          // resonance bandwidth
    double v_max_cells_per_s = 75.0;    // speed at V_pp = 20 on resonance (100 um/s)
    double noise_sigma_cells = 1.0;     // per-step isotropic displacement noise
    double drift_rate = 0.002;          // perturbation-field drift, rad per frame
    double perturbation_amp = 0.3;      // spatial field distortion amplitude, [0, 1]
    double resp_decay = 0.99995;        // responsiveness decay factor per frame
    double bjerknes_gain = 0.15;        // pairwise attraction strength for coalescence
    std::uint32_t seed = 1;

    void validate() const {
        for (double f0 : resonances_mhz)
            if (f0 < 1.5 || f0 > 2.5)
                throw std::invalid_argument("PlantConfig: resonances must lie in [1.5, 2.5] MHz");
        if (sigma_f_mhz <= 0.0 || v_max_cells_per_s <= 0.0)
            throw std::invalid_argument("PlantConfig: sigma_f and v_max must be positive");
        if (noise_sigma_cells < 0.0 || drift_rate < 0.0)
            throw std::invalid_argument("PlantConfig: noise and drift must be non-negative");
        if (perturbation_amp < 0.0 || perturbation_amp > 1.0)
            throw std::invalid_argument("PlantConfig: perturbation_amp must be in [0, 1]");
        if (resp_decay <= 0.0 || resp_decay > 1.0)
            throw std::invalid_argument("PlantConfig: resp_decay must be in (0, 1]");
    }
};

/// Stronger drift and distortion; the regime where a static global model
/// starts to mislead the policy.
inline PlantConfig inject_disturbance(PlantConfig cfg) {
    cfg.drift_rate *= 5.0;
    cfg.perturbation_amp = std::min(0.9, cfg.perturbation_amp + 0.3);
    return cfg;
}

namespace detail {

/// Smooth seeded distortion of the base velocity field. Two low-order plane
/// waves: one scales the magnitude, one bends the direction. The pattern
/// slides as the drift phase advances.
struct PerturbationField {
    double kx_mag = 1.0, ky_mag = 2.0, phase_mag = 0.0;
    double kx_rot = 2.0, ky_rot = 1.0, phase_rot = 0.0;

    static PerturbationField from_seed(std::uint32_t seed) {
        Mt19937State rng(derive_seed(seed, 0x70657274u));  // field-shape stream
        PerturbationField f;
        f.kx_mag = 1.0 + rng.below(2);
        f.ky_mag = 1.0 + rng.below(2);
        f.kx_rot = 1.0 + rng.below(2);
        f.ky_rot = 1.0 + rng.below(2);
        f.phase_mag = rng.uniform(0.0, 2.0 * M_PI);
        f.phase_rot = rng.uniform(0.0, 2.0 * M_PI);
        return f;
    }

    // Magnitude attenuation in [0, 1].
    double magnitude01(double xn, double yn, double phi) const {
        return 0.5 * (1.0 + std::sin(2.0 * M_PI * (kx_mag * xn + ky_mag * yn) + phase_mag + phi));
    }

    // Direction bend in [-1, 1].
    double rotation01(double xn, double yn, double phi) const {
        return std::sin(2.0 * M_PI * (kx_rot * xn + ky_rot * yn) + phase_rot - 0.73 * phi);
    }
};

}  // namespace detail

/// Ground-truth swarm dynamics. Pure given (config, position, action, step);
/// all stochastic effects live in transport noise, not here.
class Plant {
  public:
    explicit Plant(PlantConfig cfg, ChannelConfig channel = ChannelConfig{})
        : cfg_(cfg), channel_(channel), pert_(detail::PerturbationField::from_seed(cfg.seed)) {
        cfg_.validate();
        channel_.validate();
    }

    const PlantConfig& config() const { return cfg_; }
    const ChannelConfig& channel() const { return channel_; }

    std::vector<ActionSpec> canonical_actions() const {
        return swarmctl::canonical_actions(cfg_.resonances_mhz);
    }

    /// Expected swarm velocity (cells/s) at position p under action a at
    /// plant frame t. Gaussian frequency response around the transducer's
    /// resonance, linear voltage response, base field pointing away from
    /// the actuated wall with the seeded distortion applied.
    DisplacementVector velocity(const GridPosition& p, const ActionSpec& a, long t) const {
        a.validate();
        if (a.v_pp == 0.0) return DisplacementVector{};

        const double df = a.f_mhz - cfg_.resonances_mhz[static_cast<std::size_t>(a.k - 1)];
        const double gauss = std::exp(-df * df / (2.0 * cfg_.sigma_f_mhz * cfg_.sigma_f_mhz));
        const double speed = (a.v_pp / kMaxVoltage) * gauss * cfg_.v_max_cells_per_s;

        const double n = static_cast<double>(channel_.grid_n);
        const double xn = p.x / n;
        const double yn = p.y / n;
        const double phi = cfg_.drift_rate * static_cast<double>(t);
        const double scale = 1.0 - cfg_.perturbation_amp * pert_.magnitude01(xn, yn, phi);
        const double angle =
            cfg_.perturbation_amp * (M_PI / 2.0) * pert_.rotation01(xn, yn, phi);

        double ux = 0.0, uy = 0.0;
        switch (a.k) {
            case 1: ux = 1.0; break;   // left wall pushes +x
            case 2: ux = -1.0; break;  // right wall pushes -x
            case 3: uy = 1.0; break;   // bottom wall pushes +y
            default: uy = -1.0; break; // top wall pushes -y
        }
        const double c = std::cos(angle), s = std::sin(angle);
        return DisplacementVector{speed * scale * (c * ux - s * uy),
                                  speed * scale * (s * ux + c * uy)};
    }

    /// One explicit Euler step of swarm transport with additive noise and
    /// responsiveness decay. Clamps hard at the channel walls.
    SwarmState transport_step(SwarmState state, const ActionSpec& a, double dt,
                              Mt19937State& rng) const {
        if (dt <= 0.0) throw std::invalid_argument("transport_step: dt must be positive");
        const DisplacementVector v = velocity(state.centroid, a, state.step);
        GridPosition p = state.centroid;
        p.x += state.responsiveness * v.dx * dt;
        p.y += state.responsiveness * v.dy * dt;
        if (cfg_.noise_sigma_cells > 0.0) {
            const double sigma = cfg_.noise_sigma_cells * std::sqrt(dt);
            p.x += sigma * rng.gaussian();
            p.y += sigma * rng.gaussian();
        }
        state.centroid = clamp_to_channel(p, channel_.grid_n);
        state.responsiveness *= cfg_.resp_decay;
        state.step += 1;
        return state;
    }

  private:
    PlantConfig cfg_;
    ChannelConfig channel_;
    detail::PerturbationField pert_;
};

inline DisplacementVector ground_truth_velocity(const Plant& plant, const GridPosition& p,
                                                const ActionSpec& a, long t) {
    return plant.velocity(p, a, t);
}

namespace detail {

// Loose-cluster packing: a merged bubble of radius r stands in for a swarm
// of roughly twice its diameter.
inline constexpr double kSwarmPacking = 2.0;

inline SwarmState swarm_from_bubble(const Bubble& b, long step) {
    SwarmState s;
    s.centroid = b.position;
    s.diameter_um = std::clamp(2.0 * b.radius_um * kSwarmPacking, 50.0, 200.0);
    s.responsiveness = 1.0;
    s.step = step;
    return s;
}

}  // namespace detail

/// Secondary-Bjerknes-driven swarm formation: each step one transducer is
/// picked pseudo-randomly and advects every bubble, pairwise attraction
/// (r_i^3 r_j^3 / d^2 along the line of centers) pulls bubbles together,
/// and overlapping bubbles merge conserving volume. Succeeds once a single
/// bubble holds at least 90% of the total volume.
inline SwarmState coalesce(std::vector<Bubble> bubbles, const Plant& plant, Mt19937State& rng,
                           long max_steps = 10000) {
    if (bubbles.empty()) throw std::invalid_argument("coalesce: no bubbles");
    const PlantConfig& cfg = plant.config();
    const double cell_um = plant.channel().cell_um();
    const int grid_n = plant.channel().grid_n;
    const std::vector<ActionSpec> actions = plant.canonical_actions();

    double total_volume = 0.0;
    for (const Bubble& b : bubbles) {
        if (b.radius_um <= 0.0) throw std::invalid_argument("coalesce: bubble radius must be > 0");
        total_volume += b.radius_um * b.radius_um * b.radius_um;
    }

    auto dominant = [&](long step) -> const Bubble* {
        for (const Bubble& b : bubbles) {
            if (!b.alive) continue;
            const double vol = b.radius_um * b.radius_um * b.radius_um;
            if (vol >= 0.9 * total_volume) return &b;
        }
        (void)step;
        return nullptr;
    };

    if (const Bubble* b = dominant(0)) return detail::swarm_from_bubble(*b, 0);

    for (long step = 0; step < max_steps; ++step) {
        const ActionSpec& act = actions[rng.below(4)];

        // Advection by the active transducer's field plus pairwise attraction.
        std::vector<GridPosition> next(bubbles.size());
        for (std::size_t i = 0; i < bubbles.size(); ++i) {
            if (!bubbles[i].alive) continue;
            const DisplacementVector v = plant.velocity(bubbles[i].position, act, step);
            double dx = v.dx * kFrameDt;
            double dy = v.dy * kFrameDt;
            for (std::size_t j = 0; j < bubbles.size(); ++j) {
                if (j == i || !bubbles[j].alive) continue;
                const double ex = bubbles[j].position.x - bubbles[i].position.x;
                const double ey = bubbles[j].position.y - bubbles[i].position.y;
                const double d = std::max(1e-6, std::hypot(ex, ey));
                const double ri3 = std::pow(bubbles[i].radius_um, 3.0);
                const double rj3 = std::pow(bubbles[j].radius_um, 3.0);
                double pull = cfg.bjerknes_gain * ri3 * rj3 / (d * d) * kFrameDt;
                pull = std::min(pull, 0.5 * d);  // never overshoot past the midpoint
                dx += pull * ex / d;
                dy += pull * ey / d;
            }
            next[i] = clamp_to_channel(
                GridPosition{bubbles[i].position.x + dx, bubbles[i].position.y + dy}, grid_n);
        }
        for (std::size_t i = 0; i < bubbles.size(); ++i)
            if (bubbles[i].alive) bubbles[i].position = next[i];

        // Merge overlapping bubbles (volume-conserving) until stable.
        bool merged = true;
        while (merged) {
            merged = false;
            for (std::size_t i = 0; i < bubbles.size() && !merged; ++i) {
                if (!bubbles[i].alive) continue;
                for (std::size_t j = i + 1; j < bubbles.size() && !merged; ++j) {
                    if (!bubbles[j].alive) continue;
                    const double d = std::hypot(bubbles[j].position.x - bubbles[i].position.x,
                                                bubbles[j].position.y - bubbles[i].position.y);
                    const double touch =
                        (bubbles[i].radius_um + bubbles[j].radius_um) / cell_um;
                    if (d < touch) {
                        const double vi = std::pow(bubbles[i].radius_um, 3.0);
                        const double vj = std::pow(bubbles[j].radius_um, 3.0);
                        const double vsum = vi + vj;
                        bubbles[i].position.x =
                            (vi * bubbles[i].position.x + vj * bubbles[j].position.x) / vsum;
                        bubbles[i].position.y =
                            (vi * bubbles[i].position.y + vj * bubbles[j].position.y) / vsum;
                        bubbles[i].radius_um = std::cbrt(vsum);
                        bubbles[j].alive = false;
                        merged = true;
                    }
                }
            }
        }

        if (const Bubble* b = dominant(step)) return detail::swarm_from_bubble(*b, step + 1);
    }
    throw std::runtime_error("coalesce: bubbles did not form a swarm within the step budget");
}

/// Seeds a tight bubble cloud around `center` and coalesces it. The
/// standard way experiments obtain a fresh swarm at a given position.
inline SwarmState coalesce_swarm_at(const Plant& plant, const GridPosition& center,
                                    Mt19937State& rng, int n_bubbles = 12,
                                    double spread_cells = 12.0, long max_steps = 10000) {
    std::vector<Bubble> bubbles;
    bubbles.reserve(static_cast<std::size_t>(n_bubbles));
    const int grid_n = plant.channel().grid_n;
    for (int i = 0; i < n_bubbles; ++i) {
        Bubble b;
        b.position = clamp_to_channel(GridPosition{center.x + rng.uniform(-spread_cells, spread_cells),
                                                   center.y + rng.uniform(-spread_cells, spread_cells)},
                                      grid_n);
        b.radius_um = rng.uniform(4.0, 10.0);
        bubbles.push_back(b);
    }
    return coalesce(std::move(bubbles), plant, rng, max_steps);
}

}  // namespace swarmctl
