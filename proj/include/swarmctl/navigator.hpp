#pragma once

#include <array>
#include <deque>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/csv.hpp"
#include "swarmctl/dynamics.hpp"
#include "swarmctl/path.hpp"
#include "swarmctl/plant.hpp"
#include "swarmctl/policy.hpp"

namespace swarmctl {

struct NavigatorConfig {
    double control_dt_s = 0.25;  // control period; rounded to whole camera frames
    long budget = 5000;          // max control steps per episode
    long stall_limit = 500;      // steps without waypoint progress before "stuck"

    int frames_per_step() const {
        return std::max(1, static_cast<int>(std::llround(control_dt_s * kFrameRate)));
    }
    /// The control period actually realized on the frame clock.
    double effective_dt() const { return frames_per_step() * kFrameDt; }

    void validate() const {
        if (control_dt_s <= 0.0) throw std::invalid_argument("NavigatorConfig: control_dt > 0");
        if (budget < 1 || stall_limit < 1)
            throw std::invalid_argument("NavigatorConfig: budget and stall_limit >= 1");
    }
};

enum class EpisodeOutcome { success, stuck, budget_exceeded };

inline const char* to_string(EpisodeOutcome o) {
    switch (o) {
        case EpisodeOutcome::success: return "success";
        case EpisodeOutcome::stuck: return "stuck";
        default: return "budget_exceeded";
    }
}

struct EpisodeRow {
    long n = 0;
    double t_s = 0.0;
    double x = 0.0, y = 0.0;    // observed swarm position at decision time
    double tx = 0.0, ty = 0.0;  // current waypoint
    int k = 1;                  // chosen transducer
    double pred_dx = 0.0, pred_dy = 0.0;  // blended prediction for chosen k
    double obs_dx = 0.0, obs_dy = 0.0;    // measured velocity over the step
    double err_local = 0.0;   // |blended prediction - observation|
    double err_global = 0.0;  // |global prediction - observation|
    long cursor = 0;          // waypoint cursor after this step
};

using EpisodeLog = std::vector<EpisodeRow>;

/// Observation channel: maps true plant state to the position the controller
/// sees. The default is direct centroid readout; the vision pipeline plugs in
/// here.
using Observer = std::function<GridPosition(const SwarmState&)>;

inline Observer direct_observer() {
    return [](const SwarmState& s) { return s.centroid; };
}

struct NavigatorState {
    long n = 0;
    SwarmState swarm;
    TargetPath path;
    DynamicsMatrix q_local;
    std::deque<Observation> history;  // most recent window_m observations
    GridPosition observed;            // latest observed position
    long last_progress_n = 0;
};

struct EpisodeResult {
    EpisodeOutcome outcome = EpisodeOutcome::success;
    EpisodeLog log;
    NavigatorState final_state;
};

/// One closed-loop step: blend dynamics, pick a transducer, actuate for one
/// control period, fold the observation into the local matrix, and advance
/// the waypoint cursor.
inline EpisodeRow control_step(NavigatorState& st, const DynamicsMatrix& q_global,
                               const Plant& plant, const LearnerConfig& learner,
                               const NavigatorConfig& nav, Mt19937State& rng,
                               const Observer& observe, double episode_t0_s) {
    const double dt = nav.effective_dt();
    const GridPosition p_obs = st.observed;
    const GridPosition target = st.path.current();

    // Blended prediction at the observed cell for each transducer (combine
    // evaluated lazily at the one cell the policy consults).
    std::array<DisplacementVector, 4> predicted;
    for (int k = 1; k <= 4; ++k) {
        const DisplacementVector g = q_global.predict(p_obs, k);
        const DisplacementVector l = st.q_local.predict(p_obs, k);
        predicted[static_cast<std::size_t>(k - 1)] =
            DisplacementVector{learner.beta * g.dx + (1.0 - learner.beta) * l.dx,
                               learner.beta * g.dy + (1.0 - learner.beta) * l.dy};
    }
    const int k = choose_pzt_from_predictions(predicted, p_obs, target, dt);
    const ActionSpec action = plant.canonical_actions()[static_cast<std::size_t>(k - 1)];

    EpisodeRow row;
    row.n = st.n;
    row.t_s = st.swarm.step * kFrameDt - episode_t0_s;
    row.x = p_obs.x;
    row.y = p_obs.y;
    row.tx = target.x;
    row.ty = target.y;
    row.k = k;
    row.pred_dx = predicted[static_cast<std::size_t>(k - 1)].dx;
    row.pred_dy = predicted[static_cast<std::size_t>(k - 1)].dy;

    for (int f = 0; f < nav.frames_per_step(); ++f)
        st.swarm = plant.transport_step(st.swarm, action, kFrameDt, rng);

    const GridPosition p_new = observe(st.swarm);
    const DisplacementVector v_obs{(p_new.x - p_obs.x) / dt, (p_new.y - p_obs.y) / dt};
    row.obs_dx = v_obs.dx;
    row.obs_dy = v_obs.dy;
    row.err_local = std::hypot(row.pred_dx - v_obs.dx, row.pred_dy - v_obs.dy);
    row.err_global = prediction_error(q_global, p_obs, k, v_obs);

    st.history.push_back(Observation{p_obs, k, v_obs});
    while (st.history.size() > static_cast<std::size_t>(learner.window_m)) st.history.pop_front();
    const std::vector<Observation> window(st.history.begin(), st.history.end());
    st.q_local = update_local(std::move(st.q_local), window, learner.alpha);

    st.observed = p_new;
    const std::size_t cursor_before = st.path.cursor;
    st.path = path_advance(std::move(st.path), p_new);
    if (st.path.cursor != cursor_before) st.last_progress_n = st.n + 1;

    st.n += 1;
    row.cursor = static_cast<long>(st.path.cursor);
    return row;
}

/// Runs the loop until the path completes, the budget is exhausted, or the
/// cursor stops making progress for stall_limit steps.
inline EpisodeResult run_path(const Plant& plant, TargetPath path,
                              const DynamicsMatrix& q_global, const LearnerConfig& learner,
                              const NavigatorConfig& nav, SwarmState start, Mt19937State& rng,
                              Observer observe = direct_observer()) {
    learner.validate();
    nav.validate();
    if (path.waypoints.empty()) throw std::invalid_argument("run_path: empty path");
    if (q_global.grid_n != plant.channel().grid_n)
        throw std::invalid_argument("run_path: dynamics grid does not match the channel");

    EpisodeResult result;
    NavigatorState& st = result.final_state;
    st.swarm = start;
    st.path = std::move(path);
    st.q_local = init_local(q_global.grid_n);
    st.observed = observe(st.swarm);
    const double t0 = st.swarm.step * kFrameDt;

    st.path = path_advance(std::move(st.path), st.observed);
    while (!st.path.complete()) {
        if (st.n >= nav.budget) {
            result.outcome = EpisodeOutcome::budget_exceeded;
            return result;
        }
        if (st.n - st.last_progress_n >= nav.stall_limit) {
            result.outcome = EpisodeOutcome::stuck;
            return result;
        }
        result.log.push_back(control_step(st, q_global, plant, learner, nav, rng, observe, t0));
    }
    result.outcome = EpisodeOutcome::success;
    return result;
}

// --- Episode log CSV ---------------------------------------------------------

inline constexpr const char* kEpisodeHeader =
    "n,t_s,x,y,tx,ty,k,pred_dx,pred_dy,obs_dx,obs_dy,err_local,err_global,cursor";

inline void save_episode_log(const EpisodeLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_episode_log: cannot open '" + path + "'");
    std::string buf;
    buf += kEpisodeHeader;
    buf += '\n';
    for (const EpisodeRow& r : log) {
        append_number(buf, r.n);
        buf += ',';
        append_number(buf, r.t_s);
        buf += ',';
        append_number(buf, r.x);
        buf += ',';
        append_number(buf, r.y);
        buf += ',';
        append_number(buf, r.tx);
        buf += ',';
        append_number(buf, r.ty);
        buf += ',';
        append_number(buf, r.k);
        buf += ',';
        append_number(buf, r.pred_dx);
        buf += ',';
        append_number(buf, r.pred_dy);
        buf += ',';
        append_number(buf, r.obs_dx);
        buf += ',';
        append_number(buf, r.obs_dy);
        buf += ',';
        append_number(buf, r.err_local);
        buf += ',';
        append_number(buf, r.err_global);
        buf += ',';
        append_number(buf, r.cursor);
        buf += '\n';
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_episode_log: write failed for '" + path + "'");
}

inline EpisodeLog load_episode_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_episode_log: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_episode_log: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kEpisodeHeader)
        throw std::runtime_error("load_episode_log: header mismatch in '" + path + "'");
    EpisodeLog log;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != 14)
            throw std::runtime_error("load_episode_log: expected 14 fields at line " +
                                     std::to_string(line_no));
        EpisodeRow r;
        r.n = parse_long(fields[0], "load_episode_log", line_no);
        r.t_s = parse_double(fields[1], "load_episode_log", line_no);
        r.x = parse_double(fields[2], "load_episode_log", line_no);
        r.y = parse_double(fields[3], "load_episode_log", line_no);
        r.tx = parse_double(fields[4], "load_episode_log", line_no);
        r.ty = parse_double(fields[5], "load_episode_log", line_no);
        r.k = static_cast<int>(parse_long(fields[6], "load_episode_log", line_no));
        r.pred_dx = parse_double(fields[7], "load_episode_log", line_no);
        r.pred_dy = parse_double(fields[8], "load_episode_log", line_no);
        r.obs_dx = parse_double(fields[9], "load_episode_log", line_no);
        r.obs_dy = parse_double(fields[10], "load_episode_log", line_no);
        r.err_local = parse_double(fields[11], "load_episode_log", line_no);
        r.err_global = parse_double(fields[12], "load_episode_log", line_no);
        r.cursor = parse_long(fields[13], "load_episode_log", line_no);
        log.push_back(r);
    }
    return log;
}

}  // namespace swarmctl
