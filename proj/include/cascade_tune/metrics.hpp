#pragma once

// Performance indicators extracted from a closed-loop trace and the
// weighted speed/position cost functions built on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

#include "control.hpp"

namespace cascade_tune {

inline constexpr double kSettlingBand = 0.02;
inline constexpr double kDefaultPenalty = 1e6;

// Time after which `signal` stays inside +-band*|reference| of `reference`.
// Returns the duration of the series when the last sample is still outside.
inline double settling_time(std::span<const double> signal, double dt, double reference,
                            double band = kSettlingBand) {
    if (signal.empty()) throw std::invalid_argument("settling_time: empty series");
    if (reference == 0.0) throw std::invalid_argument("settling_time: zero reference");
    const double tol = band * std::abs(reference);
    for (std::size_t k = signal.size(); k-- > 0;) {
        if (!(std::abs(signal[k] - reference) <= tol)) {
            if (k + 1 == signal.size()) return static_cast<double>(k) * dt;
            return static_cast<double>(k + 1) * dt;
        }
    }
    return 0.0;
}

inline double overshoot(std::span<const double> signal, double reference) {
    if (reference == 0.0) throw std::invalid_argument("overshoot: zero reference");
    if (signal.empty()) return 0.0;
    const double peak = *std::max_element(signal.begin(), signal.end());
    return std::max(0.0, (peak - reference) / std::abs(reference));
}

// sum over t >= t_end of (t - t_end) |e(t)| dt, sample k at time k*dt.
inline double itae_after_motion(std::span<const double> error, double dt, double motion_end) {
    const double duration = error.empty() ? 0.0 : static_cast<double>(error.size() - 1) * dt;
    if (motion_end > duration + 0.5 * dt || motion_end < 0.0)
        throw std::invalid_argument("itae_after_motion: motion end outside the trace");
    const auto first = static_cast<std::size_t>(std::ceil(motion_end / dt - 1e-9));
    double acc = 0.0;
    for (std::size_t k = first; k < error.size(); ++k) {
        const double t = static_cast<double>(k) * dt - motion_end;
        acc += std::max(t, 0.0) * std::abs(error[k]) * dt;
    }
    return acc;
}

inline double inf_norm_error(std::span<const double> reference, std::span<const double> signal) {
    if (reference.size() != signal.size()) throw std::invalid_argument("inf_norm_error: length mismatch");
    double m = 0.0;
    for (std::size_t k = 0; k < reference.size(); ++k) m = std::max(m, std::abs(reference[k] - signal[k]));
    return m;
}

struct SpeedMetrics {
    double settling_time = 0.0;  // s
    double overshoot = 0.0;      // fraction of the speed setpoint
    double itae = 0.0;           // m*s, after the move
    double error_inf = 0.0;      // m/s

    [[nodiscard]] std::array<double, 4> as_array() const { return {settling_time, overshoot, itae, error_inf}; }
};

struct PositionMetrics {
    double settling_time = 0.0;    // s
    double overshoot = 0.0;        // fraction of the position setpoint
    double speed_overshoot = 0.0;  // fraction of the speed setpoint
    double error_inf = 0.0;        // m

    [[nodiscard]] std::array<double, 4> as_array() const {
        return {settling_time, overshoot, speed_overshoot, error_inf};
    }
};

struct CostWeights {
    std::array<double, 4> speed{500.0, 2.0, 1e4, 500.0};
    std::array<double, 4> position{1e4, 10.0, 15.0, 100.0};
    double penalty = kDefaultPenalty;

    void validate() const {
        for (double w : speed)
            if (!(w > 0.0)) throw std::invalid_argument("weights.speed must be positive");
        for (double w : position)
            if (!(w > 0.0)) throw std::invalid_argument("weights.position must be positive");
        if (!(penalty > 0.0)) throw std::invalid_argument("weights.penalty must be positive");
    }
};

inline double weighted_sum(const std::array<double, 4>& w, const std::array<double, 4>& f) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 4; ++k) acc += w[k] * f[k];
    return acc;
}

// Speed step metrics are taken up to the start of deceleration, with the
// settling time counted from the moment the reference reaches its plateau.
// The ITAE covers the rest after the move; the tracking error the whole trace.
inline SpeedMetrics speed_metrics(const SimulationTrace& tr) {
    if (tr.size() == 0) throw std::invalid_argument("speed_metrics: empty trace");
    const std::span<const double> spd(tr.spd);
    const auto plateau = std::min(tr.size(), static_cast<std::size_t>(std::ceil(tr.cruise_end / tr.dt)));
    const auto step = spd.first(std::max<std::size_t>(plateau, 1));

    std::vector<double> error(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k) error[k] = tr.spd_ref[k] - tr.spd[k];

    SpeedMetrics m;
    m.settling_time = std::max(0.0, settling_time(step, tr.dt, tr.speed_setpoint) - tr.plateau_start);
    m.overshoot = overshoot(step, tr.speed_setpoint);
    m.itae = tr.motion_end <= tr.duration() ? itae_after_motion(error, tr.dt, tr.motion_end) : 0.0;
    m.error_inf = inf_norm_error(tr.spd_ref, tr.spd);
    return m;
}

// Position settling is counted from the end of the reference move.
inline PositionMetrics position_metrics(const SimulationTrace& tr) {
    if (tr.size() == 0) throw std::invalid_argument("position_metrics: empty trace");
    PositionMetrics m;
    m.settling_time = std::max(0.0, settling_time(tr.pos, tr.dt, tr.position_setpoint) - tr.motion_end);
    m.overshoot = overshoot(tr.pos, tr.position_setpoint);
    m.speed_overshoot = overshoot(tr.spd, tr.speed_setpoint);
    m.error_inf = inf_norm_error(tr.pos_ref, tr.pos);
    return m;
}

// Cost of a speed-mode trace; failed runs cost the penalty.
inline double speed_cost(const SimulationTrace& tr, const CostWeights& w = {}) {
    if (tr.failed()) return w.penalty;
    const double c = weighted_sum(w.speed, speed_metrics(tr).as_array());
    return std::isfinite(c) ? c : w.penalty;
}

inline double position_cost(const SimulationTrace& tr, const CostWeights& w = {}) {
    if (tr.failed()) return w.penalty;
    const double c = weighted_sum(w.position, position_metrics(tr).as_array());
    return std::isfinite(c) ? c : w.penalty;
}

// Plain ITAE of the tracking error from the start of the command.
inline double tracking_itae(std::span<const double> reference, std::span<const double> signal, double dt) {
    if (reference.size() != signal.size()) throw std::invalid_argument("tracking_itae: length mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < reference.size(); ++k)
        acc += static_cast<double>(k) * dt * std::abs(reference[k] - signal[k]) * dt;
    return acc;
}

}  // namespace cascade_tune
