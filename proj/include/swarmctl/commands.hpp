#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "swarmctl/config.hpp"
#include "swarmctl/dataset.hpp"
#include "swarmctl/dynamics.hpp"
#include "swarmctl/grid_search.hpp"
#include "swarmctl/navigator.hpp"
#include "swarmctl/svg.hpp"
#include "swarmctl/vision.hpp"

namespace swarmctl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitStuck = 3;
inline constexpr int kExitBudget = 4;

namespace detail {

inline void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path() && !p.parent_path().empty())
        std::filesystem::create_directories(p.parent_path());
}

inline std::string cpu_model() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) return line.substr(colon + 2);
        }
    }
    return "unknown cpu";
}

}  // namespace detail

/// Grid-search sweep -> dataset CSV.
inline int cmd_collect(ExperimentConfig cfg, const std::string& out_path, bool dry_run,
                       std::ostream& os = std::cout) {
    cfg.plant.seed = cfg.seed;
    cfg.validate();
    const SearchGrid grid = enumerate_grid();
    if (dry_run) {
        const auto combos = grid_combos(grid);
        os << "dry run: " << combos.size() << " combos ("
           << grid.transducers.size() << " transducers x " << grid.frequencies.size()
           << " frequencies x " << grid.voltages.size() << " voltages), "
           << combos.size() * kFramesPerCombo << " records when collected\n";
        os << "first combo: k=" << combos.front().k << " f=" << combos.front().f_mhz
           << " v=" << combos.front().v_pp << "; last combo: k=" << combos.back().k
           << " f=" << combos.back().f_mhz << " v=" << combos.back().v_pp << "\n";
        return kExitOk;
    }

    const CollectResult result = collect(grid, cfg.plant, cfg.seed, cfg.channel);
    detail::ensure_parent_dir(out_path);
    save_dataset(result.records, out_path);

    std::array<double, 4> speed_sum{};
    std::array<long, 4> speed_n{};
    for (const DatasetRecord& r : result.records) {
        speed_sum[static_cast<std::size_t>(r.k - 1)] += std::hypot(r.dx_dt, r.dy_dt);
        speed_n[static_cast<std::size_t>(r.k - 1)] += 1;
    }
    os << "collected " << grid.combo_count() << " combos, " << result.records.size()
       << " records -> " << out_path << "\n";
    for (int k = 1; k <= 4; ++k)
        os << "  PZT " << k << ": mean speed "
           << (speed_n[static_cast<std::size_t>(k - 1)]
                   ? speed_sum[static_cast<std::size_t>(k - 1)] /
                         speed_n[static_cast<std::size_t>(k - 1)]
                   : 0.0)
           << " cells/s over " << speed_n[static_cast<std::size_t>(k - 1)] << " records\n";
    if (!result.failed_combos.empty()) {
        os << "  WARNING: " << result.failed_combos.size()
           << " combos failed coalescence:";
        for (int id : result.failed_combos) os << ' ' << id;
        os << "\n";
    }
    return kExitOk;
}

/// Dataset CSV -> QDYN1 global dynamics matrix + resonance report.
inline int cmd_fit(const std::string& dataset_path, const std::string& out_path,
                   const LearnerConfig& learner, int grid_n = 300,
                   std::ostream& os = std::cout) {
    const std::vector<DatasetRecord> records = load_dataset(dataset_path);
    GlobalFitReport report;
    const DynamicsMatrix q = fit_global(records, learner, grid_n, &report);
    detail::ensure_parent_dir(out_path);
    save_qmatrix(q, out_path);
    os << "fit " << records.size() << " records -> " << out_path << "\n";
    for (int k = 1; k <= 4; ++k)
        os << "  PZT " << k << ": f0 = " << report.resonances_mhz[static_cast<std::size_t>(k - 1)]
           << " MHz, " << report.samples_used[static_cast<std::size_t>(k - 1)]
           << " on-resonance samples\n";
    os << "  cells regressed: " << report.cells_regressed
       << ", mean fallback: " << report.cells_mean_fallback
       << ", nearest fallback: " << report.cells_nearest_fallback << "\n";
    return kExitOk;
}

namespace detail {

/// Static contaminant field shared by all frames of a vision session.
inline std::vector<vision::SceneDisk> session_contaminants(std::uint32_t seed, int grid_n) {
    Mt19937State rng(derive_seed(seed, 0x434f4e54u));
    std::vector<vision::SceneDisk> specks;
    for (int i = 0; i < 6; ++i) {
        vision::SceneDisk d;
        d.center = GridPosition{rng.uniform(0.1, 0.9) * grid_n, rng.uniform(0.1, 0.9) * grid_n};
        d.diameter_um = rng.uniform(12.0, 40.0);
        specks.push_back(d);
    }
    return specks;
}

/// Vision-channel observer for closed-loop runs: renders the scene the
/// camera would see and pushes it through compress + detect/track.
class VisionChannel {
  public:
    VisionChannel(std::uint32_t seed, int grid_n, int search_radius)
        : render_rng_(derive_seed(seed, 0x52454e44u)),
          contaminants_(session_contaminants(seed, grid_n)) {
        scene_.contaminants = contaminants_;
        observer_.emplace(calibrate(seed, grid_n), search_radius);
    }

    GridPosition observe(const SwarmState& s) {
        scene_.swarm = vision::SceneDisk{s.centroid, std::clamp(s.diameter_um, 50.0, 200.0)};
        const vision::FrameHi hi = vision::render_frame(scene_, render_rng_);
        const vision::FrameLo lo = vision::compress(hi);
        const auto out = observer_->observe(lo);
        if (out.valid) last_ = out.position;
        return last_;
    }

  private:
    int calibrate(std::uint32_t seed, int grid_n) {
        // Session threshold from a sample frame with a representative swarm.
        Mt19937State rng(derive_seed(seed, 0x43414c49u));
        vision::SceneSpec sample = scene_;
        sample.swarm = vision::SceneDisk{GridPosition{grid_n / 2.0, grid_n / 2.0}, 110.0};
        const vision::FrameLo lo = vision::compress(vision::render_frame(sample, rng));
        return vision::otsu_threshold({lo});
    }

    Mt19937State render_rng_;
    std::vector<vision::SceneDisk> contaminants_;
    vision::SceneSpec scene_;
    std::optional<vision::SwarmObserver> observer_;
    GridPosition last_{};
};

}  // namespace detail

struct RunArtifacts {
    EpisodeResult episode;
    std::string log_path;
    std::string svg_path;
};

/// Closed-loop waypoint navigation -> episode log CSV + trajectory SVG.
inline int cmd_run(ExperimentConfig cfg, const std::string& q_path, const std::string& out_dir,
                   std::ostream& os = std::cout, RunArtifacts* artifacts = nullptr) {
    cfg.plant.seed = cfg.seed;
    cfg.validate();
    const DynamicsMatrix q_global = load_qmatrix(q_path);
    const TargetPath path = build_path(cfg.path, cfg.channel);
    const Plant plant(cfg.plant, cfg.channel);

    Mt19937State rng(derive_seed(cfg.seed, 0x52554e00u));
    const double n = static_cast<double>(cfg.channel.grid_n);
    const GridPosition start_center{rng.uniform(0.25 * n, 0.75 * n),
                                    rng.uniform(0.25 * n, 0.75 * n)};
    const SwarmState start = coalesce_swarm_at(plant, start_center, rng);

    Observer observe = direct_observer();
    std::shared_ptr<detail::VisionChannel> vis;
    if (cfg.observe == "vision") {
        const int radius = static_cast<int>(
                               std::ceil(cfg.plant.v_max_cells_per_s * cfg.navigator.effective_dt())) +
                           8;
        vis = std::make_shared<detail::VisionChannel>(cfg.seed, cfg.channel.grid_n, radius);
        observe = [vis](const SwarmState& s) { return vis->observe(s); };
    }

    EpisodeResult result =
        run_path(plant, path, q_global, cfg.learner, cfg.navigator, start, rng, observe);

    std::filesystem::create_directories(out_dir);
    const std::string log_path = out_dir + "/episode.csv";
    const std::string svg_path = out_dir + "/trajectory.svg";
    save_episode_log(result.log, log_path);
    write_text_file(svg_path, trajectory_svg(result.log, result.final_state.path.waypoints,
                                             cfg.channel.grid_n, to_string(result.outcome)));

    os << "outcome: " << to_string(result.outcome) << " after " << result.log.size()
       << " steps; waypoints reached: " << result.final_state.path.cursor << "/"
       << result.final_state.path.waypoints.size() << "\n";
    os << "wrote " << log_path << " and " << svg_path << "\n";

    if (artifacts) {
        artifacts->episode = std::move(result);
        artifacts->log_path = log_path;
        artifacts->svg_path = svg_path;
    } else {
        result.episode_outcome_guard();  // unreachable; keeps result alive above
    }
    switch (artifacts ? artifacts->episode.outcome : result.outcome) {
        case EpisodeOutcome::success: return kExitOk;
        case EpisodeOutcome::stuck: return kExitStuck;
        default: return kExitBudget;
    }
}

/// Episode log -> trajectory SVG + error-curve SVG.
inline int cmd_replay(const std::string& log_path, const std::string& out_dir,
                      std::ostream& os = std::cout) {
    const EpisodeLog log = load_episode_log(log_path);
    if (log.empty()) throw std::runtime_error("cmd_replay: log '" + log_path + "' has no rows");

    std::vector<GridPosition> waypoints;
    for (const EpisodeRow& r : log) {
        const GridPosition w{r.tx, r.ty};
        if (waypoints.empty() || waypoints.back().x != w.x || waypoints.back().y != w.y)
            waypoints.push_back(w);
    }
    double extent = 300.0;
    for (const EpisodeRow& r : log) extent = std::max({extent, r.x + 10.0, r.y + 10.0});

    std::filesystem::create_directories(out_dir);
    const std::string traj = out_dir + "/trajectory.svg";
    const std::string errs = out_dir + "/errors.svg";
    write_text_file(traj, trajectory_svg(log, waypoints, static_cast<int>(extent), "replay"));
    write_text_file(errs, error_curves_svg(log));
    os << "wrote " << traj << " and " << errs << "\n";
    return kExitOk;
}

// --- Synthetic vision session ---------------------------------------------------

struct VisionFrameTruth {
    vision::SceneSpec scene;
    GridPosition swarm_center;
};

/// Deterministic moving-swarm corpus with drifting contaminants, used by the
/// vision subcommand and the accuracy gate.
inline std::vector<VisionFrameTruth> make_vision_corpus(std::uint32_t seed, int frames,
                                                        int grid_n = 300) {
    Mt19937State rng(derive_seed(seed, 0x56434f52u));
    std::vector<vision::SceneDisk> specks = detail::session_contaminants(seed, grid_n);
    std::vector<GridPosition> drift;
    for (std::size_t i = 0; i < specks.size(); ++i)
        drift.push_back(GridPosition{rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)});

    const double cx = grid_n / 2.0, cy = grid_n / 2.0;
    const double orbit = 0.22 * grid_n;
    const double theta0 = rng.uniform(0.0, 2.0 * M_PI);
    const double omega = 0.035;  // rad/frame -> ~2.3 cells/frame at this orbit
    const double diameter = rng.uniform(90.0, 130.0);

    std::vector<VisionFrameTruth> corpus;
    corpus.reserve(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        VisionFrameTruth vf;
        const double th = theta0 + omega * f;
        vf.swarm_center = GridPosition{cx + orbit * std::cos(th), cy + orbit * std::sin(th)};
        vf.scene.swarm = vision::SceneDisk{vf.swarm_center, diameter};
        vf.scene.contaminants = specks;
        for (std::size_t i = 0; i < specks.size(); ++i) {
            vf.scene.contaminants[i].center.x += drift[i].x * f;
            vf.scene.contaminants[i].center.y += drift[i].y * f;
            vf.scene.contaminants[i].center =
                clamp_to_channel(vf.scene.contaminants[i].center, grid_n);
        }
        corpus.push_back(std::move(vf));
    }
    return corpus;
}

/// Synthetic camera session: renders the corpus, runs detect-then-track, and
/// writes per-frame detections plus sample frames.
inline int cmd_vision(std::uint32_t seed, int frames, const std::string& out_dir, bool bench,
                      std::ostream& os = std::cout) {
    std::filesystem::create_directories(out_dir);
    const std::vector<VisionFrameTruth> corpus = make_vision_corpus(seed, frames);
    Mt19937State render_rng(derive_seed(seed, 0x52454e44u));

    // Session threshold from the first frames (re-rendered below for output).
    std::vector<vision::FrameLo> samples;
    {
        Mt19937State calib_rng(derive_seed(seed, 0x52454e44u));
        for (int i = 0; i < std::min(frames, 3); ++i)
            samples.push_back(vision::compress(vision::render_frame(corpus[static_cast<std::size_t>(i)].scene, calib_rng)));
    }
    vision::SwarmObserver observer(vision::otsu_threshold(samples));

    std::string csv = "frame_idx,x,y,confidence,source\n";
    double err_sum = 0.0, err_max = 0.0;
    int valid = 0;
    for (int f = 0; f < frames; ++f) {
        const vision::FrameHi hi =
            vision::render_frame(corpus[static_cast<std::size_t>(f)].scene, render_rng);
        const vision::FrameLo lo = vision::compress(hi);
        if (f == 0) {
            vision::save_pgm16(hi, out_dir + "/frame0000_hi.pgm");
            vision::save_pgm(lo, out_dir + "/frame0000_lo.pgm");
        }
        const auto out = observer.observe(lo);
        append_number(csv, f);
        csv += ',';
        append_number(csv, out.valid ? out.position.x : -1.0);
        csv += ',';
        append_number(csv, out.valid ? out.position.y : -1.0);
        csv += ',';
        append_number(csv, out.confidence);
        csv += ',';
        csv += out.from_detection ? "detect" : "track";
        csv += '\n';
        if (out.valid) {
            const double e = std::hypot(out.position.x - corpus[static_cast<std::size_t>(f)].swarm_center.x,
                                        out.position.y - corpus[static_cast<std::size_t>(f)].swarm_center.y);
            err_sum += e;
            err_max = std::max(err_max, e);
            ++valid;
        }
    }
    write_text_file(out_dir + "/detections.csv", csv);
    os << "vision session: " << frames << " frames, " << valid << " valid observations\n";
    if (valid > 0)
        os << "  centroid error vs ground truth: mean " << err_sum / valid << " cells, max "
           << err_max << " cells\n";

    if (bench) {
        Mt19937State bench_rng(derive_seed(seed, 0x42454e43u));
        const vision::FrameHi hi = vision::render_frame(corpus[0].scene, bench_rng);
        vision::FrameLo lo = vision::compress(hi);
        const int t = observer.session_threshold();
        vision::TrackerState ts =
            init_tracker(lo, corpus[0].swarm_center, 101, 10);
        const int reps = 150;
        const auto start = std::chrono::steady_clock::now();
        for (int i = 0; i < reps; ++i) {
            const vision::FrameLo lo_i = vision::compress(hi);
            const vision::Mask mask = vision::threshold(lo_i, t);
            const auto blurred = vision::blur(mask);
            ts = vision::track(std::move(ts), lo_i);
            (void)blurred;
        }
        const auto stop = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(stop - start).count();
        os << "  throughput: " << reps / secs
           << " frames/s (compress+threshold+blur+track) on " << detail::cpu_model() << "\n";
    }
    return kExitOk;
}

}  // namespace swarmctl
