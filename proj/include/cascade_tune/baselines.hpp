#pragma once

// Reference tuners: exhaustive grid search, Ziegler-Nichols from the ultimate
// point, relay auto-tuning and ITAE grid tuning.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bo.hpp"

namespace cascade_tune {

class NotTunable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Grid search

struct CostSurface {
    GainGrid grid;
    std::vector<double> cost;  // by flat node index
    std::size_t argmin = 0;

    [[nodiscard]] double min_cost() const { return cost.at(argmin); }
    [[nodiscard]] Point argmin_point() const { return grid.point(argmin); }
};

inline CostSurface grid_search(CachedObjective& objective) {
    const auto& grid = objective.grid();
    if (grid.size() == 0) throw std::invalid_argument("grid_search: empty grid");
    std::vector<std::size_t> all(grid.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    objective.prefetch(all);
    CostSurface s{grid, std::vector<double>(grid.size()), 0};
    for (std::size_t i = 0; i < all.size(); ++i) {
        s.cost[i] = objective(i);
        if (s.cost[i] < s.cost[s.argmin]) s.argmin = i;
    }
    return s;
}

inline CostSurface grid_search(const Objective& f, const GainGrid& grid) {
    CachedObjective cached(grid, f);
    return grid_search(cached);
}

// Nodes connected to the argmin (through axis neighbours) whose cost lies
// within `rel` of the minimum.
inline std::vector<std::size_t> near_optimal_region(const CostSurface& s, double rel) {
    const double limit = s.min_cost() + rel * std::abs(s.min_cost());
    std::vector<char> seen(s.cost.size(), 0);
    std::vector<std::size_t> region{s.argmin};
    seen[s.argmin] = 1;
    for (std::size_t head = 0; head < region.size(); ++head) {
        const auto idx = s.grid.indices(region[head]);
        for (std::size_t d = 0; d < idx.size(); ++d) {
            for (int dir : {-1, 1}) {
                if ((dir < 0 && idx[d] == 0) || (dir > 0 && idx[d] + 1 == s.grid.axes()[d].count)) continue;
                auto nb = idx;
                nb[d] = dir < 0 ? nb[d] - 1 : nb[d] + 1;
                const auto f = s.grid.flat(nb);
                if (!seen[f] && s.cost[f] <= limit) {
                    seen[f] = 1;
                    region.push_back(f);
                }
            }
        }
    }
    std::sort(region.begin(), region.end());
    return region;
}

// ---------------------------------------------------------------------------
// Oscillation analysis

struct OscillationSummary {
    std::size_t cycles = 0;
    double ratio = 0.0;      // per-cycle amplitude ratio; 0 when not oscillating
    double period = 0.0;     // mean over the last (up to) five cycles
    double amplitude = 0.0;  // half peak-to-peak, mean over the same cycles
};

// Cycles are delimited by upward crossings of the mean of the second half of
// the series; each contributes its half peak-to-peak amplitude.
inline OscillationSummary analyze_oscillation(const std::vector<double>& y, double dt) {
    OscillationSummary out;
    if (y.size() < 8) return out;
    for (double v : y)
        if (!std::isfinite(v)) {
            out.ratio = std::numeric_limits<double>::infinity();
            return out;
        }
    double mean = 0.0;
    const std::size_t half = y.size() / 2;
    for (std::size_t k = half; k < y.size(); ++k) mean += y[k];
    mean /= static_cast<double>(y.size() - half);

    std::vector<double> crossings;
    for (std::size_t k = 1; k < y.size(); ++k) {
        const double a = y[k - 1] - mean;
        const double b = y[k] - mean;
        if (a < 0.0 && b >= 0.0) crossings.push_back((static_cast<double>(k - 1) + a / (a - b)) * dt);
    }
    if (crossings.size() < 3) return out;

    std::vector<double> amp;
    std::vector<double> per;
    for (std::size_t c = 0; c + 1 < crossings.size(); ++c) {
        const auto k0 = static_cast<std::size_t>(std::ceil(crossings[c] / dt));
        const auto k1 = std::min(y.size() - 1, static_cast<std::size_t>(std::floor(crossings[c + 1] / dt)));
        if (k1 <= k0) continue;
        const auto [lo, hi] = std::minmax_element(y.begin() + static_cast<std::ptrdiff_t>(k0),
                                                  y.begin() + static_cast<std::ptrdiff_t>(k1) + 1);
        amp.push_back(0.5 * (*hi - *lo));
        per.push_back(crossings[c + 1] - crossings[c]);
    }
    if (amp.size() < 3) return out;

    // Drop the first cycle (start-up transient) and cycles lost in rounding.
    const double floor = 1e-9 * *std::max_element(amp.begin(), amp.end());
    std::size_t last = amp.size() - 1;
    while (last > 1 && amp[last] <= floor) --last;
    if (last < 2 || amp[1] <= 0.0) return out;
    out.cycles = last;
    out.ratio = std::pow(amp[last] / amp[1], 1.0 / static_cast<double>(last - 1));
    const std::size_t first = last >= 5 ? last - 4 : 1;
    double p = 0.0;
    double a = 0.0;
    for (std::size_t c = first; c <= last; ++c) {
        p += per[c];
        a += amp[c];
    }
    out.period = p / static_cast<double>(last - first + 1);
    out.amplitude = a / static_cast<double>(last - first + 1);
    return out;
}

// ---------------------------------------------------------------------------
// Ultimate point search

struct UltimatePoint {
    double K_u = 0.0;
    double P_u = 0.0;
    double ratio = 0.0;  // per-cycle amplitude ratio at K_u
};

struct GainBounds {
    double lower = 1e-3;
    double upper = 1e3;
};

// Response of a proportional loop: gain -> sampled output.
using ProportionalLoop = std::function<std::vector<double>(double gain)>;

inline constexpr double kSustainedTolerance = 0.02;

// Bisection (log-spaced) for the smallest gain whose oscillation no longer
// decays. A loop that can grow is bisected on a per-cycle ratio of 1. A loop
// whose amplitude is bounded by saturation never grows; there the boundary is
// the smallest gain with a ratio inside the sustained tolerance.
inline UltimatePoint find_ultimate_gain(const ProportionalLoop& loop, double dt, const GainBounds& bounds,
                                        double rel_tol = 1e-6) {
    if (!(bounds.lower > 0.0) || !(bounds.upper > bounds.lower))
        throw std::invalid_argument("find_ultimate_gain: bounds must satisfy 0 < lower < upper");
    auto ratio_at = [&](double k) { return analyze_oscillation(loop(k), dt); };

    const auto at_hi = ratio_at(bounds.upper);
    double threshold = 1.0;
    if (!(at_hi.ratio >= 1.0)) {
        if (at_hi.cycles >= 5 && at_hi.ratio >= 1.0 - kSustainedTolerance)
            threshold = 1.0 - kSustainedTolerance;
        else
            throw NotTunable("no sustained oscillation within the gain bounds");
    }
    double lo = bounds.lower;
    double hi = bounds.upper;
    OscillationSummary best = at_hi;
    const auto at_lo = ratio_at(lo);
    if (at_lo.ratio >= threshold) {
        hi = lo;
        best = at_lo;
    } else {
        while (hi / lo - 1.0 > rel_tol) {
            const double mid = std::sqrt(lo * hi);
            const auto s = ratio_at(mid);
            if (s.ratio >= threshold) {
                hi = mid;
                best = s;
            } else {
                lo = mid;
            }
        }
    }
    if (!(std::abs(best.ratio - 1.0) <= kSustainedTolerance) || best.cycles < 5)
        throw NotTunable("oscillation at the stability boundary is not sustained");
    return {hi, best.period, best.ratio};
}

// ---------------------------------------------------------------------------
// Linear fixtures

// Unity-feedback P loop around a strictly proper transfer function, step
// reference `r`, sampled output over `duration` seconds.
inline ProportionalLoop lti_proportional_loop(const TransferFunction& g, double dt, double duration, double r = 1.0) {
    const auto ss = tf_to_state_space(g);
    if (ss.D.cwiseAbs().maxCoeff() != 0.0) throw std::invalid_argument("lti loop: plant must be strictly proper");
    const auto n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
    return [=](double k) {
        StateSpace cl{ss.A - k * ss.B * ss.C, k * ss.B, ss.C, ss.D};
        const auto d = discretize_zoh(cl, dt);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(ss.A.rows());
        const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, r);
        std::vector<double> y;
        y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            y.push_back((d.C * x)(0));
            x = d.Ad * x + d.Bd * u;
            if (!x.allFinite() || x.norm() > 1e12) {
                y.push_back(std::numeric_limits<double>::infinity());
                break;
            }
        }
        return y;
    };
}

struct RelayConfig {
    double amplitude = 1.0;   // relay output level, in the units of the replaced controller output
    double hysteresis = 0.0;  // in the units of the error
    double window = 2.0;      // s of observation

    void validate(const std::string& key = "relay") const {
        if (!(amplitude > 0.0)) throw std::invalid_argument(key + ".amplitude must be positive");
        if (!(hysteresis >= 0.0)) throw std::invalid_argument(key + ".hysteresis must be nonnegative");
        if (!(window > 0.0)) throw std::invalid_argument(key + ".window must be positive");
    }
};

struct RelayEstimate {
    double amplitude = 0.0;  // a, half peak-to-peak of the loop output
    double period = 0.0;
    double K_u = 0.0;        // 4 d / (pi a)
    std::size_t cycles = 0;
};

class Relay {
public:
    Relay(double amplitude, double hysteresis) : d_(amplitude), h_(hysteresis) {}
    double operator()(double error) {
        if (error > h_) state_ = 1.0;
        else if (error < -h_) state_ = -1.0;
        return state_ * d_;
    }

private:
    double d_;
    double h_;
    double state_ = 1.0;
};

inline RelayEstimate relay_estimate(const std::vector<double>& y, double dt, double d) {
    const auto s = analyze_oscillation(y, dt);
    if (s.cycles < 5 || !(s.amplitude > 0.0) || !std::isfinite(s.ratio) || std::abs(s.ratio - 1.0) > 0.05)
        throw NotTunable("relay did not settle into a limit cycle");
    return {s.amplitude, s.period, 4.0 * d / (std::numbers::pi * s.amplitude), s.cycles};
}

// Relay in place of a unity-feedback controller around a linear plant,
// reference zero.
inline RelayEstimate lti_relay(const TransferFunction& g, const RelayConfig& cfg, double dt) {
    cfg.validate();
    const auto d = discretize_zoh(tf_to_state_space(g), dt);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d.Ad.rows());
    Relay relay(cfg.amplitude, cfg.hysteresis);
    const auto n = static_cast<std::size_t>(std::llround(cfg.window / dt)) + 1;
    std::vector<double> y;
    y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double out = (d.C * x)(0);
        y.push_back(out);
        const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, relay(-out));
        x = d.Ad * x + d.Bd * u;
    }
    return relay_estimate(y, dt, cfg.amplitude);
}

// ---------------------------------------------------------------------------
// Tuning rules

inline constexpr double kZnPiProportional = 0.45;
inline constexpr double kZnPiIntegral = 0.54;
inline constexpr double kZnProportional = 0.5;

struct PiGains {
    double K_v = 0.0;
    double K_i = 0.0;
};

inline PiGains zn_pi(double k_u, double p_u) {
    if (!(p_u > 0.0)) throw std::invalid_argument("zn_pi: period must be positive");
    return {kZnPiProportional * k_u, kZnPiIntegral * k_u / p_u};
}

inline double zn_p(double k_u) { return kZnProportional * k_u; }

// Gain box of the search domain; tuned gains outside it are clamped.
struct GainLimits {
    double kv_min = 0.005, kv_max = 0.5;
    double ki_min = 10.0, ki_max = 900.0;
    double kp_min = 15.0, kp_max = 4200.0;

    static GainLimits from_grids(const GainGrid& speed, const GainGrid& position) {
        return {speed.axes().at(0).lower, speed.axes().at(0).upper(), speed.axes().at(1).lower,
                speed.axes().at(1).upper(), position.axes().at(0).lower, position.axes().at(0).upper()};
    }
};

namespace detail {
inline double clamp_gain(const char* name, double v, double lo, double hi, std::vector<std::string>& warnings) {
    if (v >= lo && v <= hi) return v;
    const double c = std::clamp(v, lo, hi);
    warnings.push_back(std::string(name) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "], clamped to " + std::to_string(c));
    return c;
}
}  // namespace detail

inline PiGains clamp_speed(PiGains g, const GainLimits& lim, std::vector<std::string>& warnings) {
    g.K_v = detail::clamp_gain("K_v", g.K_v, lim.kv_min, lim.kv_max, warnings);
    g.K_i = detail::clamp_gain("K_i", g.K_i, lim.ki_min, lim.ki_max, warnings);
    return g;
}

inline double clamp_position(double k_p, const GainLimits& lim, std::vector<std::string>& warnings) {
    return detail::clamp_gain("K_p", k_p, lim.kp_min, lim.kp_max, warnings);
}

// ---------------------------------------------------------------------------
// Cascade experiments. The speed experiments act on motor speed in rad/s
// with the current loop closed; the position experiments act on motor
// position in m with the speed loop closed.

struct CascadeExperiment {
    double speed_step = 1.0;        // rad/s, speed reference step for the P search
    double position_step = 1e-4;    // m, position reference step for the P search
    double speed_window = 0.2;      // s
    double position_window = 0.5;   // s
    GainBounds speed_bounds{1e-3, 1e3};
    GainBounds position_bounds{1e-1, 1e5};
};

inline ProportionalLoop cascade_speed_loop(const PlantParameters& p, const ControllerGains& base,
                                           const SimulationOptions& opts, const CascadeExperiment& ex) {
    const auto n = static_cast<std::size_t>(std::llround(ex.speed_window / opts.dt)) + 1;
    return [=](double k) {
        ControllerGains g = base;
        g.K_p = 0.0;
        g.K_v = k;
        g.K_i = 0.0;
        ServoAxis axis(p, g, opts);
        std::vector<double> y;
        y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            y.push_back(axis.motor_speed());
            axis.speed_loop(ex.speed_step);
            if (!axis.finite()) {
                y.push_back(std::numeric_limits<double>::infinity());
                break;
            }
        }
        return y;
    };
}

inline ProportionalLoop cascade_position_loop(const PlantParameters& p, const ControllerGains& speed_gains,
                                              const SimulationOptions& opts, const CascadeExperiment& ex) {
    const auto n = static_cast<std::size_t>(std::llround(ex.position_window / opts.dt)) + 1;
    return [=](double k) {
        ControllerGains g = speed_gains;
        g.K_p = k;
        ServoAxis axis(p, g, opts);
        std::vector<double> y;
        y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            y.push_back(axis.motor_position_m());
            axis.position_loop(ex.position_step, 0.0);
            if (!axis.finite()) {
                y.push_back(std::numeric_limits<double>::infinity());
                break;
            }
        }
        return y;
    };
}

struct BaselineResult {
    ControllerGains gains;
    double speed_K_u = 0.0;
    double speed_P_u = 0.0;
    double position_K_u = 0.0;
    double position_P_u = 0.0;
    std::size_t simulations = 0;
    std::vector<std::string> warnings;
};

inline ProportionalLoop counted(ProportionalLoop loop, std::size_t& counter) {
    return [loop = std::move(loop), &counter](double k) {
        ++counter;
        return loop(k);
    };
}

// Speed loop: PI row from the speed ultimate point. Position loop: P row from
// a fresh search with the speed loop closed at the (clamped) PI gains.
inline BaselineResult ziegler_nichols_tune(const PlantParameters& p, const ControllerGains& base,
                                           const SimulationOptions& opts, const GainLimits& limits,
                                           const CascadeExperiment& ex = {}) {
    BaselineResult r;
    const auto su =
        find_ultimate_gain(counted(cascade_speed_loop(p, base, opts, ex), r.simulations), opts.dt, ex.speed_bounds);
    const auto pi = clamp_speed(zn_pi(su.K_u, su.P_u), limits, r.warnings);
    ControllerGains g = base;
    g.K_v = pi.K_v;
    g.K_i = pi.K_i;
    const auto pu =
        find_ultimate_gain(counted(cascade_position_loop(p, g, opts, ex), r.simulations), opts.dt, ex.position_bounds);
    g.K_p = clamp_position(zn_p(pu.K_u), limits, r.warnings);
    r.gains = g;
    r.speed_K_u = su.K_u;
    r.speed_P_u = su.P_u;
    r.position_K_u = pu.K_u;
    r.position_P_u = pu.P_u;
    return r;
}

// Relay at the current reference around the motor speed (reference zero).
inline RelayEstimate cascade_speed_relay(const PlantParameters& p, const ControllerGains& base,
                                         const SimulationOptions& opts, const RelayConfig& cfg) {
    cfg.validate("relay.speed");
    ServoAxis axis(p, base, opts);
    Relay relay(cfg.amplitude, cfg.hysteresis);
    const auto n = static_cast<std::size_t>(std::llround(cfg.window / opts.dt)) + 1;
    std::vector<double> y;
    y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        y.push_back(axis.motor_speed());
        axis.current_loop(relay(-axis.motor_speed()));
    }
    return relay_estimate(y, opts.dt, cfg.amplitude);
}

// Relay at the speed command around the motor position (reference zero), the
// speed loop closed with the gains in `speed_gains`.
inline RelayEstimate cascade_position_relay(const PlantParameters& p, const ControllerGains& speed_gains,
                                            const SimulationOptions& opts, const RelayConfig& cfg) {
    cfg.validate("relay.position");
    ServoAxis axis(p, speed_gains, opts);
    Relay relay(cfg.amplitude, cfg.hysteresis);
    const auto n = static_cast<std::size_t>(std::llround(cfg.window / opts.dt)) + 1;
    std::vector<double> y;
    y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        y.push_back(axis.motor_position_m());
        axis.speed_loop(relay(-axis.motor_position_m()) / axis.lead_per_rad());
    }
    return relay_estimate(y, opts.dt, cfg.amplitude);
}

inline BaselineResult relay_tune(const PlantParameters& p, const ControllerGains& base,
                                 const SimulationOptions& opts, const RelayConfig& speed_cfg,
                                 const RelayConfig& position_cfg, const GainLimits& limits) {
    BaselineResult r;
    const auto s = cascade_speed_relay(p, base, opts, speed_cfg);
    const auto pi = clamp_speed(zn_pi(s.K_u, s.period), limits, r.warnings);
    ControllerGains g = base;
    g.K_v = pi.K_v;
    g.K_i = pi.K_i;
    const auto q = cascade_position_relay(p, g, opts, position_cfg);
    g.K_p = clamp_position(zn_p(q.K_u), limits, r.warnings);
    r.gains = g;
    r.speed_K_u = s.K_u;
    r.speed_P_u = s.period;
    r.position_K_u = q.K_u;
    r.position_P_u = q.period;
    r.simulations = 2;
    return r;
}

struct ItaeResult {
    ControllerGains gains;
    CostSurface speed;
    CostSurface position;
};

// Sequential grid tuning on the plain ITAE of the tracking error: speed gains
// in speed mode first, then K_p in position mode.
inline ItaeResult itae_tune(const PlantParameters& p, const MotionCommand& cmd, const GainGrid& speed,
                            const GainGrid& position, const ControllerGains& base = {},
                            const SimulationOptions& opts = {}, double penalty = kDefaultPenalty) {
    ItaeResult r;
    r.speed = grid_search(
        [&](const Point& x) {
            ControllerGains g = base;
            g.K_v = x.at(0);
            g.K_i = x.at(1);
            const auto tr = simulate_closed_loop(p, g, cmd, OperatingMode::Speed, opts);
            if (tr.failed()) return penalty;
            return tracking_itae(tr.spd_ref, tr.spd, tr.dt);
        },
        speed);
    ControllerGains g = base;
    g.K_v = r.speed.argmin_point()[0];
    g.K_i = r.speed.argmin_point()[1];
    r.position = grid_search(
        [&](const Point& x) {
            ControllerGains h = g;
            h.K_p = x.at(0);
            const auto tr = simulate_closed_loop(p, h, cmd, OperatingMode::Position, opts);
            if (tr.failed()) return penalty;
            return tracking_itae(tr.pos_ref, tr.pos, tr.dt);
        },
        position);
    g.K_p = r.position.argmin_point()[0];
    r.gains = g;
    return r;
}

}  // namespace cascade_tune
