#pragma once

#include <array>
#include <stdexcept>
#include <vector>

namespace swarmctl {

inline constexpr int kNumTransducers = 4;
inline constexpr double kMaxVoltage = 20.0;
inline constexpr double kMaxFrequencyMhz = 5.0;

/// One actuation command: transducer k driven at v_pp volts and f_mhz.
/// The other three transducers are implicitly off.
struct ActionSpec {
    int k = 1;           // transducer index, 1..4
    double v_pp = 0.0;   // peak-to-peak volts, [0, 20]
    double f_mhz = 0.0;  // drive frequency, [0, 5]

    void validate() const {
        if (k < 1 || k > kNumTransducers)
            throw std::invalid_argument("ActionSpec: transducer index must be in 1..4");
        if (v_pp < 0.0 || v_pp > kMaxVoltage)
            throw std::invalid_argument("ActionSpec: v_pp must be in [0, 20] V");
        if (f_mhz < 0.0 || f_mhz > kMaxFrequencyMhz)
            throw std::invalid_argument("ActionSpec: f_mhz must be in [0, 5] MHz");
    }
};

/// Pruned action set: per transducer, full voltage at its resonance,
/// everything else silent. The sum of voltages over transducers is
/// therefore always kMaxVoltage.
inline std::vector<ActionSpec> canonical_actions(const std::array<double, 4>& resonances_mhz) {
    std::vector<ActionSpec> actions;
    actions.reserve(kNumTransducers);
    for (int k = 1; k <= kNumTransducers; ++k) {
        const double f0 = resonances_mhz[static_cast<std::size_t>(k - 1)];
        if (f0 < 0.0 || f0 > kMaxFrequencyMhz)
            throw std::invalid_argument("canonical_actions: resonance outside [0, 5] MHz");
        actions.push_back(ActionSpec{k, kMaxVoltage, f0});
    }
    return actions;
}

}  // namespace swarmctl
