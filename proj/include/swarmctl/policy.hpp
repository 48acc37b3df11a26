#pragma once

#include <array>

#include "swarmctl/dynamics.hpp"
#include "swarmctl/geometry.hpp"

namespace swarmctl {

/// Core of the policy: given the predicted displacement of each transducer
/// over one control period, pick the one whose predicted landing point is
/// closest to the target. Ties break toward the lowest index.
inline int choose_pzt_from_predictions(const std::array<DisplacementVector, 4>& predicted,
                                       const GridPosition& p_s, const GridPosition& p_t,
                                       double control_dt) {
    int best_k = 1;
    double best_d2 = 0.0;
    for (int k = 1; k <= 4; ++k) {
        const DisplacementVector& v = predicted[static_cast<std::size_t>(k - 1)];
        const double lx = p_s.x + v.dx * control_dt;
        const double ly = p_s.y + v.dy * control_dt;
        const double dx = p_t.x - lx;
        const double dy = p_t.y - ly;
        const double d2 = dx * dx + dy * dy;
        if (k == 1 || d2 < best_d2) {
            best_d2 = d2;
            best_k = k;
        }
    }
    return best_k;
}

/// Transducer choice that minimizes the expected squared distance to the
/// target after one control period under dynamics q.
inline int choose_pzt(const DynamicsMatrix& q, const GridPosition& p_s, const GridPosition& p_t,
                      double control_dt) {
    std::array<DisplacementVector, 4> predicted;
    for (int k = 1; k <= 4; ++k) predicted[static_cast<std::size_t>(k - 1)] = q.predict(p_s, k);
    return choose_pzt_from_predictions(predicted, p_s, p_t, control_dt);
}

}  // namespace swarmctl
