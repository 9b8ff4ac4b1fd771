#pragma once

// Interpolation block, the position/speed/current cascade and closed-loop
// simulation of the axis in its three operating modes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plant.hpp"

namespace cascade_tune {

struct ControllerGains {
    double K_p = 0.0;  // position P gain, 1/s
    double K_v = 0.0;  // speed P gain, A per rad/s of motor speed error
    double K_i = 0.0;  // speed integral gain, A per rad of motor angle error
    double K_cp = 60.0;
    double K_ci = 1000.0;
    double K_cd = 18.0;

    void validate() const {
        if (!(K_p >= 0.0) || !(K_v >= 0.0) || !(K_i >= 0.0))
            throw std::invalid_argument("gains K_p, K_v, K_i must be nonnegative");
        if (!(K_cp >= 0.0) || !(K_ci >= 0.0) || !(K_cd >= 0.0))
            throw std::invalid_argument("current-loop gains must be nonnegative");
    }
};

struct MotionCommand {
    double position = 0.60;      // m
    double speed = 1.00;         // m/s
    double acceleration = 10.0;  // m/s^2
    double deceleration = 10.0;  // m/s^2

    void validate() const {
        const std::pair<const char*, double> fields[] = {{"position", position},
                                                         {"speed", speed},
                                                         {"acceleration", acceleration},
                                                         {"deceleration", deceleration}};
        for (const auto& [name, v] : fields)
            if (!std::isfinite(v) || v <= 0.0)
                throw std::invalid_argument(std::string("motion.") + name + " must be positive");
    }
};

struct TrajectoryReference {
    double dt = 0.0;
    std::vector<double> position;  // m
    std::vector<double> speed;     // m/s
    double peak_speed = 0.0;       // reached plateau, == command speed unless triangular
    double plateau_start = 0.0;    // s, end of acceleration
    double cruise_end = 0.0;       // s, start of deceleration
    double motion_end = 0.0;       // s, reference at rest from here on

    [[nodiscard]] std::size_t size() const { return speed.size(); }
};

// Trapezoidal speed profile (triangular when the distance is too short to
// reach the commanded speed), followed by `settle_time` of zero speed.
// The position reference is the cumulative trapezoid integral of the speed
// samples; the speed samples are rescaled by at most O(dt) so that the
// integral lands exactly on the commanded position.
inline TrajectoryReference interpolate(const MotionCommand& cmd, double dt, double settle_time = 1.0) {
    cmd.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(settle_time >= 0.0)) throw std::invalid_argument("settle time must be nonnegative");

    const double a = cmd.acceleration;
    const double b = cmd.deceleration;
    const double d = cmd.position;
    const double v_peak = std::min(cmd.speed, std::sqrt(2.0 * d * a * b / (a + b)));
    const double t_acc = v_peak / a;
    const double t_dec = v_peak / b;
    const double cruise = std::max(0.0, d - v_peak * v_peak / (2.0 * a) - v_peak * v_peak / (2.0 * b));
    const double t_cruise = cruise / v_peak;
    const double t_move = t_acc + t_cruise + t_dec;

    auto profile = [&](double t) {
        if (t <= 0.0 || t >= t_move) return 0.0;
        if (t < t_acc) return a * t;
        if (t < t_acc + t_cruise) return v_peak;
        return std::max(0.0, b * (t_move - t));
    };

    const auto move_samples = static_cast<std::size_t>(std::ceil(t_move / dt)) + 1;
    const auto settle_samples = static_cast<std::size_t>(std::ceil(settle_time / dt));
    const std::size_t n = std::max<std::size_t>(move_samples + settle_samples, 3);

    TrajectoryReference ref;
    ref.dt = dt;
    ref.peak_speed = v_peak;
    ref.speed.resize(n, 0.0);
    for (std::size_t k = 0; k < move_samples && k < n; ++k) ref.speed[k] = profile(static_cast<double>(k) * dt);

    double area = 0.0;
    for (std::size_t k = 1; k < n; ++k) area += 0.5 * (ref.speed[k] + ref.speed[k - 1]) * dt;
    if (area > 0.0) {
        const double scale = d / area;
        for (double& v : ref.speed) v *= scale;
    } else {
        // Move shorter than one sample: a single-sample pulse carries the distance.
        ref.speed[1] = d / dt;
    }

    ref.position.resize(n, 0.0);
    for (std::size_t k = 1; k < n; ++k)
        ref.position[k] = ref.position[k - 1] + 0.5 * (ref.speed[k] + ref.speed[k - 1]) * dt;

    ref.plateau_start = t_acc;
    ref.cruise_end = std::max(t_acc + t_cruise, dt);
    ref.motion_end = std::max(t_move, dt);
    return ref;
}

// Trapezoidal integrator with conditional freeze.
struct IntegratorState {
    double accumulator = 0.0;
    double previous_error = 0.0;
};

struct ControllerOutput {
    double output = 0.0;
    IntegratorState state;
};

inline ControllerOutput pi_step(const IntegratorState& state, double error, double k_prop, double k_int,
                                double dt, bool freeze = false) {
    IntegratorState next = state;
    if (!freeze) next.accumulator += 0.5 * (error + state.previous_error) * dt;
    next.previous_error = error;
    return {k_prop * error + k_int * next.accumulator, next};
}

struct PidState {
    IntegratorState integral;
    double derivative = 0.0;  // filtered derivative term, already multiplied by K_cd
};

struct PidOutput {
    double output = 0.0;
    PidState state;
};

// PI part as pi_step plus a backward-difference derivative through a
// first-order filter with time constant `filter_time`.
inline PidOutput pid_step(const PidState& state, double error, double k_cp, double k_ci, double k_cd, double dt,
                          double filter_time, bool freeze = false) {
    PidState next = state;
    const double de = error - state.integral.previous_error;
    next.derivative = (filter_time * state.derivative + k_cd * de) / (filter_time + dt);
    const auto pi = pi_step(state.integral, error, k_cp, k_ci, dt, freeze);
    next.integral = pi.state;
    return {pi.output + next.derivative, next};
}

enum class OperatingMode { Position, Speed, Current };

inline const char* to_string(OperatingMode mode) {
    switch (mode) {
        case OperatingMode::Position: return "position";
        case OperatingMode::Speed: return "speed";
        case OperatingMode::Current: return "current";
    }
    return "?";
}

inline OperatingMode parse_mode(const std::string& s) {
    if (s == "position") return OperatingMode::Position;
    if (s == "speed") return OperatingMode::Speed;
    if (s == "current") return OperatingMode::Current;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

// Gains actually active in a mode.
inline ControllerGains effective_gains(ControllerGains g, OperatingMode mode) {
    if (mode != OperatingMode::Position) g.K_p = 0.0;
    if (mode == OperatingMode::Current) g.K_v = g.K_i = 0.0;
    return g;
}

struct SimulationOptions {
    double dt = 1e-5;               // s, shared controller and plant rate
    double settle_time = 1.0;       // s of zero-speed reference after the move
    double voltage_limit = 400.0;   // V, symmetric armature clamp
    // Derivative filter time constant T_d / N_f with T_d = K_cd / K_cp
    // (N_f * dt when K_cp is zero).
    double derivative_filter_n = 10.0;
    // Treat K_cd as a constant added to K_cp instead of a derivative gain.
    bool literal_kcd = false;
    PlantModel model = PlantModel::Approximated;
    double current_setpoint = 0.0;  // A, reference in Current mode
    double load_torque = 0.0;       // N*m, constant disturbance

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("simulation.dt must be positive");
        if (!(settle_time >= 0.0)) throw std::invalid_argument("simulation.settle_time must be nonnegative");
        if (!(voltage_limit > 0.0)) throw std::invalid_argument("simulation.voltage_limit must be positive");
        if (!(derivative_filter_n > 0.0))
            throw std::invalid_argument("simulation.derivative_filter_n must be positive");
    }
};

struct SimulationTrace {
    double dt = 0.0;
    std::vector<double> pos_ref;    // m
    std::vector<double> spd_ref;    // m/s
    std::vector<double> pos;        // m, load side
    std::vector<double> spd;        // m/s, load side
    std::vector<double> i_a;        // A
    std::vector<double> v_a;        // V, applied over the following sample period
    std::vector<double> motor_pos;  // m, motor encoder scaled by the lead
    std::vector<double> motor_spd;  // m/s

    double position_setpoint = 0.0;  // m
    double speed_setpoint = 0.0;     // m/s, plateau of the speed reference
    double plateau_start = 0.0;      // s
    double cruise_end = 0.0;         // s
    double motion_end = 0.0;         // s
    bool unstable = false;           // truncated at a non-finite sample
    bool speed_alarm = false;        // truncated at |omega_m| > omega_max

    [[nodiscard]] std::size_t size() const { return spd.size(); }
    [[nodiscard]] double duration() const { return size() == 0 ? 0.0 : static_cast<double>(size() - 1) * dt; }
    [[nodiscard]] bool failed() const { return unstable || speed_alarm; }

    void reserve(std::size_t n) {
        for (auto* v : {&pos_ref, &spd_ref, &pos, &spd, &i_a, &v_a, &motor_pos, &motor_spd}) v->reserve(n);
    }
};

// Streaming axis model: plant state plus the three controller states. Each
// loop method computes its controller output from the current measurement,
// forwards it to the inner loop and finally advances the plant one sample.
class ServoAxis {
public:
    ServoAxis(const PlantParameters& p, const ControllerGains& g, const SimulationOptions& opts)
        : params_(p), gains_(g), opts_(opts) {
        p.validate();
        g.validate();
        opts.validate();
        const auto dss = discretize_zoh(plant_state_space(p, opts.model), opts.dt);
        for (Eigen::Index i = 0; i < kPlantStates; ++i) {
            for (Eigen::Index j = 0; j < kPlantStates; ++j) ad_(i, j) = dss.Ad(i, j);
            bv_(i) = dss.Bd(i, kVoltage);
            bt_(i) = dss.Bd(i, kLoadTorque);
        }
        x_.setZero();
        lead_ = p.lead_per_rad();
    }

    [[nodiscard]] double current() const { return x_(kCurrent); }
    [[nodiscard]] double motor_speed() const { return x_(kMotorSpeed); }          // rad/s
    [[nodiscard]] double motor_angle() const { return x_(kMotorAngle); }          // rad
    [[nodiscard]] double load_speed() const { return x_(kLoadSpeed); }            // rad/s
    [[nodiscard]] double load_angle() const { return x_(kMotorAngle) - x_(kDeflection); }
    [[nodiscard]] double motor_position_m() const { return motor_angle() * lead_; }
    [[nodiscard]] double motor_speed_mps() const { return motor_speed() * lead_; }
    [[nodiscard]] double load_position_m() const { return load_angle() * lead_; }
    [[nodiscard]] double load_speed_mps() const { return load_speed() * lead_; }
    [[nodiscard]] double lead_per_rad() const { return lead_; }
    [[nodiscard]] double last_voltage() const { return voltage_; }
    [[nodiscard]] bool saturated() const { return saturated_; }
    [[nodiscard]] const ControllerGains& gains() const { return gains_; }

    [[nodiscard]] bool finite() const { return x_.allFinite(); }
    [[nodiscard]] bool over_speed() const { return std::abs(x_(kMotorSpeed)) > params_.omega_max; }

    // Innermost loop: current reference (A) to clamped voltage.
    void current_loop(double i_ref) {
        const double err = i_ref - x_(kCurrent);
        const double dt = opts_.dt;
        const double limit = opts_.voltage_limit;
        double v = 0.0;
        if (opts_.literal_kcd) {
            auto r = pi_step(pid_.integral, err, gains_.K_cp + gains_.K_cd, gains_.K_ci, dt);
            if (std::abs(r.output) > limit)
                r = pi_step(pid_.integral, err, gains_.K_cp + gains_.K_cd, gains_.K_ci, dt, true);
            pid_.integral = r.state;
            v = r.output;
        } else {
            const double tf = derivative_filter_time();
            auto r = pid_step(pid_, err, gains_.K_cp, gains_.K_ci, gains_.K_cd, dt, tf);
            if (std::abs(r.output) > limit) r = pid_step(pid_, err, gains_.K_cp, gains_.K_ci, gains_.K_cd, dt, tf, true);
            pid_ = r.state;
            v = r.output;
        }
        saturated_ = std::abs(v) > limit;
        voltage_ = std::clamp(v, -limit, limit);
        advance();
    }

    [[nodiscard]] double derivative_filter_time() const {
        const double n = opts_.derivative_filter_n;
        return gains_.K_cp > 0.0 ? gains_.K_cd / gains_.K_cp / n : n * opts_.dt;
    }

    // Middle loop: motor-speed reference (rad/s) through the speed PI.
    void speed_loop(double omega_ref) {
        current_loop(speed_pi(omega_ref));
    }

    // Speed PI output (A) without advancing; used by loop replacements.
    double speed_pi(double omega_ref) {
        const auto r = pi_step(speed_integrator_, omega_ref - x_(kMotorSpeed), gains_.K_v, gains_.K_i, opts_.dt,
                               saturated_);
        speed_integrator_ = r.state;
        return r.output;
    }

    // Outer loop: linear position reference plus speed feedforward (m/s).
    void position_loop(double pos_ref, double spd_ff) {
        const double v_cmd = spd_ff + gains_.K_p * (pos_ref - motor_position_m());
        speed_loop(v_cmd / lead_);
    }

private:
    void advance() {
        x_ = ad_ * x_ + bv_ * voltage_ + bt_ * opts_.load_torque;
    }

    PlantParameters params_;
    ControllerGains gains_;
    SimulationOptions opts_;
    Eigen::Matrix<double, kPlantStates, kPlantStates> ad_;
    Eigen::Matrix<double, kPlantStates, 1> bv_;
    Eigen::Matrix<double, kPlantStates, 1> bt_;
    Eigen::Matrix<double, kPlantStates, 1> x_;
    IntegratorState speed_integrator_;
    PidState pid_;
    double lead_ = 0.0;
    double voltage_ = 0.0;
    bool saturated_ = false;
};

namespace detail {

inline void record_sample(SimulationTrace& tr, const ServoAxis& axis, double pos_ref, double spd_ref) {
    tr.pos_ref.push_back(pos_ref);
    tr.spd_ref.push_back(spd_ref);
    tr.pos.push_back(axis.load_position_m());
    tr.spd.push_back(axis.load_speed_mps());
    tr.i_a.push_back(axis.current());
    tr.motor_pos.push_back(axis.motor_position_m());
    tr.motor_spd.push_back(axis.motor_speed_mps());
}

// Checks the state after a step; returns false when the run must stop.
inline bool check_axis(SimulationTrace& tr, const ServoAxis& axis) {
    if (!axis.finite()) {
        tr.unstable = true;
        return false;
    }
    if (axis.over_speed()) {
        tr.speed_alarm = true;
        return false;
    }
    return true;
}

}  // namespace detail

// Runs the cascade on the interpolated profile of `cmd`. The run lasts
// `duration` seconds when given (and at least the profile length otherwise).
// A sample is recorded, then the controllers act on it and the plant advances.
inline SimulationTrace simulate_closed_loop(const PlantParameters& p, const ControllerGains& gains,
                                            const MotionCommand& cmd, OperatingMode mode,
                                            const SimulationOptions& opts = {}, double duration = 0.0) {
    opts.validate();
    const auto ref = interpolate(cmd, opts.dt, opts.settle_time);
    auto n = ref.size();
    if (duration > 0.0) {
        const auto wanted = static_cast<std::size_t>(std::llround(duration / opts.dt)) + 1;
        if (wanted < static_cast<std::size_t>(std::ceil(ref.motion_end / opts.dt)))
            throw std::invalid_argument("duration shorter than the motion profile");
        n = wanted;
    }

    ServoAxis axis(p, effective_gains(gains, mode), opts);
    SimulationTrace tr;
    tr.dt = opts.dt;
    tr.position_setpoint = cmd.position;
    tr.speed_setpoint = ref.peak_speed;
    tr.plateau_start = ref.plateau_start;
    tr.cruise_end = ref.cruise_end;
    tr.motion_end = ref.motion_end;
    tr.reserve(n);

    for (std::size_t k = 0; k < n; ++k) {
        const double pos_ref = k < ref.size() ? ref.position[k] : ref.position.back();
        const double spd_ref = k < ref.size() ? ref.speed[k] : 0.0;
        detail::record_sample(tr, axis, pos_ref, spd_ref);
        switch (mode) {
            case OperatingMode::Position:
            case OperatingMode::Speed:
                axis.position_loop(pos_ref, spd_ref);
                break;
            case OperatingMode::Current:
                axis.current_loop(opts.current_setpoint);
                break;
        }
        tr.v_a.push_back(axis.last_voltage());
        if (!detail::check_axis(tr, axis)) break;
    }
    return tr;
}

// Open-loop response of the plant to a recorded voltage sequence, starting at
// rest. Only the measured channels and v_a are filled.
inline SimulationTrace simulate_open_loop(const PlantParameters& p, const std::vector<double>& voltage, double dt,
                                          PlantModel model = PlantModel::Approximated) {
    const auto dss = discretize_zoh(plant_state_space(p, model), dt);
    const Eigen::Matrix<double, kPlantStates, kPlantStates> ad = dss.Ad;
    const Eigen::Matrix<double, kPlantStates, 1> bv = dss.Bd.col(kVoltage);
    Eigen::Matrix<double, kPlantStates, 1> x = Eigen::Matrix<double, kPlantStates, 1>::Zero();
    const double lead = p.lead_per_rad();

    SimulationTrace tr;
    tr.dt = dt;
    tr.reserve(voltage.size());
    for (double v : voltage) {
        tr.pos_ref.push_back(0.0);
        tr.spd_ref.push_back(0.0);
        tr.pos.push_back((x(kMotorAngle) - x(kDeflection)) * lead);
        tr.spd.push_back(x(kLoadSpeed) * lead);
        tr.i_a.push_back(x(kCurrent));
        tr.motor_pos.push_back(x(kMotorAngle) * lead);
        tr.motor_spd.push_back(x(kMotorSpeed) * lead);
        tr.v_a.push_back(v);
        x = ad * x + bv * v;
        if (!x.allFinite()) {
            tr.unstable = true;
            break;
        }
    }
    return tr;
}

}  // namespace cascade_tune
