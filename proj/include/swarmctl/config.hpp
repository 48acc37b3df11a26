#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "swarmctl/dynamics.hpp"
#include "swarmctl/navigator.hpp"
#include "swarmctl/path.hpp"
#include "swarmctl/plant.hpp"

namespace swarmctl {

/// Everything one experiment needs, assembled from defaults, an optional
/// JSON config file, and command-line flag overrides (flags win).
struct ExperimentConfig {
    ChannelConfig channel;
    PlantConfig plant;
    LearnerConfig learner;
    NavigatorConfig navigator;
    PathSpec path;
    std::uint32_t seed = 1;
    std::string observe = "direct";  // direct | vision

    void validate() const {
        channel.validate();
        plant.validate();
        learner.validate();
        navigator.validate();
        if (observe != "direct" && observe != "vision")
            throw std::invalid_argument("ExperimentConfig: observe must be 'direct' or 'vision'");
    }
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void parse_position(const nlohmann::json& j, GridPosition& out) {
    if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("config: positions must be [x, y] arrays");
    out.x = j.at(0).get<double>();
    out.y = j.at(1).get<double>();
}

}  // namespace detail

inline void apply_config_json(ExperimentConfig& cfg, const nlohmann::json& j) {
    using detail::maybe;
    if (j.contains("channel")) {
        const auto& c = j.at("channel");
        maybe(c, "width_um", cfg.channel.width_um);
        maybe(c, "height_um", cfg.channel.height_um);
        maybe(c, "grid_n", cfg.channel.grid_n);
    }
    if (j.contains("plant")) {
        const auto& p = j.at("plant");
        if (p.contains("resonances_mhz")) {
            const auto& r = p.at("resonances_mhz");
            if (!r.is_array() || r.size() != 4)
                throw std::invalid_argument("config: plant.resonances_mhz must have 4 entries");
            for (std::size_t i = 0; i < 4; ++i) cfg.plant.resonances_mhz[i] = r.at(i).get<double>();
        }
        maybe(p, "sigma_f_mhz", cfg.plant.sigma_f_mhz);
        maybe(p, "v_max_cells_per_s", cfg.plant.v_max_cells_per_s);
        maybe(p, "noise_sigma_cells", cfg.plant.noise_sigma_cells);
        maybe(p, "drift_rate", cfg.plant.drift_rate);
        maybe(p, "perturbation_amp", cfg.plant.perturbation_amp);
        maybe(p, "resp_decay", cfg.plant.resp_decay);
        maybe(p, "bjerknes_gain", cfg.plant.bjerknes_gain);
        maybe(p, "seed", cfg.plant.seed);
    }
    if (j.contains("learner")) {
        const auto& l = j.at("learner");
        maybe(l, "alpha", cfg.learner.alpha);
        maybe(l, "beta", cfg.learner.beta);
        maybe(l, "window_m", cfg.learner.window_m);
        maybe(l, "bandwidth_cells", cfg.learner.bandwidth_cells);
        maybe(l, "min_neighbors", cfg.learner.min_neighbors);
        maybe(l, "on_res_tol_mhz", cfg.learner.on_res_tol_mhz);
    }
    if (j.contains("navigator")) {
        const auto& n = j.at("navigator");
        maybe(n, "control_dt_s", cfg.navigator.control_dt_s);
        maybe(n, "budget", cfg.navigator.budget);
        maybe(n, "stall_limit", cfg.navigator.stall_limit);
    }
    if (j.contains("path")) {
        const auto& p = j.at("path");
        detail::maybe(p, "shape", cfg.path.shape);
        if (p.contains("center")) detail::parse_position(p.at("center"), cfg.path.center);
        maybe(p, "radius", cfg.path.radius);
        maybe(p, "n_points", cfg.path.n_points);
        maybe(p, "laps", cfg.path.laps);
        maybe(p, "text", cfg.path.text);
        maybe(p, "delta", cfg.path.delta);
        if (p.contains("points")) {
            cfg.path.points.clear();
            for (const auto& pt : p.at("points")) {
                GridPosition g;
                detail::parse_position(pt, g);
                cfg.path.points.push_back(g);
            }
        }
    }
    detail::maybe(j, "seed", cfg.seed);
    detail::maybe(j, "observe", cfg.observe);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_config: '" + path + "' is not valid JSON: " + e.what());
    }
    ExperimentConfig cfg;
    apply_config_json(cfg, j);
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["channel"] = {{"width_um", cfg.channel.width_um},
                    {"height_um", cfg.channel.height_um},
                    {"grid_n", cfg.channel.grid_n}};
    j["plant"] = {{"resonances_mhz", cfg.plant.resonances_mhz},
                  {"sigma_f_mhz", cfg.plant.sigma_f_mhz},
                  {"v_max_cells_per_s", cfg.plant.v_max_cells_per_s},
                  {"noise_sigma_cells", cfg.plant.noise_sigma_cells},
                  {"drift_rate", cfg.plant.drift_rate},
                  {"perturbation_amp", cfg.plant.perturbation_amp},
                  {"resp_decay", cfg.plant.resp_decay},
                  {"bjerknes_gain", cfg.plant.bjerknes_gain},
                  {"seed", cfg.plant.seed}};
    j["learner"] = {{"alpha", cfg.learner.alpha},
                    {"beta", cfg.learner.beta},
                    {"window_m", cfg.learner.window_m},
                    {"bandwidth_cells", cfg.learner.bandwidth_cells},
                    {"min_neighbors", cfg.learner.min_neighbors},
                    {"on_res_tol_mhz", cfg.learner.on_res_tol_mhz}};
    j["navigator"] = {{"control_dt_s", cfg.navigator.control_dt_s},
                      {"budget", cfg.navigator.budget},
                      {"stall_limit", cfg.navigator.stall_limit}};
    j["path"] = {{"shape", cfg.path.shape},
                 {"center", {cfg.path.center.x, cfg.path.center.y}},
                 {"radius", cfg.path.radius},
                 {"n_points", cfg.path.n_points},
                 {"laps", cfg.path.laps},
                 {"text", cfg.path.text},
                 {"delta", cfg.path.delta}};
    j["seed"] = cfg.seed;
    j["observe"] = cfg.observe;
    return j;
}

}  // namespace swarmctl
