#include <gtest/gtest.h>

#include <cmath>

#include "cascade_tune/metrics.hpp"
#include "generators.hpp"

using namespace cascade_tune;

namespace {

MotionCommand move(double d, double v = 1.0, double a = 10.0, double b = 10.0) {
    MotionCommand c;
    c.position = d;
    c.speed = v;
    c.acceleration = a;
    c.deceleration = b;
    return c;
}

ControllerGains grid_optimum() {
    ControllerGains g;
    g.K_p = 225.0;
    g.K_v = 0.36;
    g.K_i = 130.0;
    return g;
}

}  // namespace

TEST(Interpolate, TrapezoidDurations) {
    const auto ref = interpolate(move(0.60), 1e-4);
    EXPECT_NEAR(ref.plateau_start, 0.1, 1e-12);
    EXPECT_NEAR(ref.cruise_end - ref.plateau_start, 0.5, 1e-12);
    EXPECT_NEAR(ref.motion_end, 0.7, 1e-12);
    EXPECT_NEAR(ref.position.back(), 0.60, 1e-12);
    EXPECT_NEAR(ref.peak_speed, 1.0, 1e-12);
}

TEST(Interpolate, TriangularPeak) {
    const auto ref = interpolate(move(0.05), 1e-4);
    EXPECT_NEAR(ref.peak_speed, std::sqrt(0.05 * 10.0), 1e-12);
    EXPECT_NEAR(ref.peak_speed, 0.707, 1e-3);
    EXPECT_NEAR(ref.position.back(), 0.05, 1e-12);
}

TEST(Interpolate, RejectsNonPositiveSetpoint) {
    EXPECT_THROW(interpolate(move(0.0), 1e-4), std::invalid_argument);
    EXPECT_THROW(interpolate(move(-1.0), 1e-4), std::invalid_argument);
}

TEST(Interpolate, TinyMoveKeepsDistance) {
    const auto ref = interpolate(move(1e-9, 1.0, 1e9, 1e9), 1e-4, 0.0);
    EXPECT_NEAR(ref.position.back(), 1e-9, 1e-18);
    EXPECT_LE(ref.motion_end, 1e-3);
}

TEST(Interpolate, ProfileProperties) {
    gen::Rng r(21);
    for (int trial = 0; trial < 50; ++trial) {
        const auto cmd = move(r.uniform(0.01, 1.0), r.uniform(0.1, 2.0), r.uniform(1.0, 50.0), r.uniform(1.0, 50.0));
        const double dt = 1e-4;
        const auto ref = interpolate(cmd, dt, 0.1);
        ASSERT_EQ(ref.position.size(), ref.speed.size());
        double integral = 0.0;
        for (std::size_t k = 1; k < ref.size(); ++k) {
            integral += 0.5 * (ref.speed[k] + ref.speed[k - 1]) * dt;
            EXPECT_NEAR(ref.position[k], integral, 1e-9 * cmd.position) << "trial " << trial;
        }
        for (double v : ref.speed) {
            EXPECT_GE(v, 0.0);
            // Rescaling onto the exact distance moves the plateau by O(dt).
            EXPECT_LE(v, cmd.speed * (1.0 + 1e-2)) << "trial " << trial;
        }
        EXPECT_NEAR(ref.position.back(), cmd.position, 1e-12);
    }
}

// Cruise time is affine in distance with slope 1/v: doubling the distance
// adds d/v of cruise, which is a doubling only when the ramps cover no
// distance.
TEST(Interpolate, CruiseAffineInDistance) {
    const double v = 1.0;
    for (double d : {0.3, 0.6, 0.9}) {
        const auto a = interpolate(move(d, v), 1e-4);
        const auto b = interpolate(move(2.0 * d, v), 1e-4);
        const double ca = a.cruise_end - a.plateau_start;
        const double cb = b.cruise_end - b.plateau_start;
        EXPECT_NEAR(cb - ca, d / v, 1e-9);
    }
}

TEST(PiStep, ZeroErrorIsInert) {
    IntegratorState s;
    for (int k = 0; k < 5; ++k) {
        const auto r = pi_step(s, 0.0, 3.0, 7.0, 0.1);
        EXPECT_EQ(r.output, 0.0);
        EXPECT_EQ(r.state.accumulator, 0.0);
        s = r.state;
    }
}

TEST(PiStep, PureProportional) {
    const auto r = pi_step({}, 2.5, 4.0, 0.0, 0.1);
    EXPECT_DOUBLE_EQ(r.output, 10.0);
}

TEST(PiStep, TrapezoidalAccumulation) {
    IntegratorState s;
    double out = 0.0;
    for (int k = 0; k < 10; ++k) {
        const auto r = pi_step(s, 1.0, 0.0, 1.0, 0.1);
        out = r.output;
        s = r.state;
    }
    EXPECT_NEAR(out, 0.95, 1e-12);
}

TEST(PiStep, FreezeHoldsAccumulator) {
    IntegratorState s{0.3, 1.0};
    const auto r = pi_step(s, 1.0, 0.0, 1.0, 0.1, true);
    EXPECT_EQ(r.state.accumulator, 0.3);
    EXPECT_EQ(r.state.previous_error, 1.0);
}

TEST(PidStep, ZeroErrorAndPureProportional) {
    PidState s;
    EXPECT_EQ(pid_step(s, 0.0, 60.0, 1000.0, 18.0, 1e-5, 0.03).output, 0.0);
    gen::Rng r(22);
    for (int k = 0; k < 20; ++k) {
        const double e = r.uniform(-3.0, 3.0);
        const auto a = pid_step(s, e, 60.0, 0.0, 0.0, 1e-5, 0.03);
        const auto b = pi_step(s.integral, e, 60.0, 0.0, 1e-5);
        EXPECT_DOUBLE_EQ(a.output, b.output);
        s = a.state;
    }
}

TEST(PidStep, RampDerivativeConverges) {
    const double dt = 1e-4;
    const double tau = 1e-2;
    PidState s;
    double out = 0.0;
    const auto steps = static_cast<int>(std::round(5.0 * tau / dt));
    for (int k = 1; k <= steps; ++k) {
        const auto r = pid_step(s, k * dt, 0.0, 0.0, 1.0, dt, tau);
        out = r.output;
        s = r.state;
    }
    EXPECT_NEAR(out, 1.0, 0.01);
}

TEST(Modes, ParseAndEffectiveGains) {
    EXPECT_EQ(parse_mode("speed"), OperatingMode::Speed);
    EXPECT_EQ(std::string(to_string(OperatingMode::Current)), "current");
    EXPECT_THROW(parse_mode("torque"), std::invalid_argument);
    const auto g = grid_optimum();
    EXPECT_EQ(effective_gains(g, OperatingMode::Speed).K_p, 0.0);
    EXPECT_EQ(effective_gains(g, OperatingMode::Speed).K_v, g.K_v);
    const auto c = effective_gains(g, OperatingMode::Current);
    EXPECT_EQ(c.K_p + c.K_v + c.K_i, 0.0);
    EXPECT_EQ(c.K_cp, g.K_cp);
}

TEST(ClosedLoop, SpeedModeEqualsPositionWithZeroKp) {
    const PlantParameters p;
    auto g = grid_optimum();
    const auto a = simulate_closed_loop(p, g, move(0.05), OperatingMode::Speed);
    g.K_p = 0.0;
    const auto b = simulate_closed_loop(p, g, move(0.05), OperatingMode::Position);
    EXPECT_EQ(a.spd, b.spd);
    EXPECT_EQ(a.pos, b.pos);
    EXPECT_EQ(a.v_a, b.v_a);
}

TEST(ClosedLoop, Deterministic) {
    const PlantParameters p;
    const auto a = simulate_closed_loop(p, grid_optimum(), move(0.05), OperatingMode::Position);
    const auto b = simulate_closed_loop(p, grid_optimum(), move(0.05), OperatingMode::Position);
    EXPECT_EQ(a.pos, b.pos);
    EXPECT_EQ(a.i_a, b.i_a);
}

TEST(ClosedLoop, ZeroGainsStayAtRest) {
    ControllerGains g;
    g.K_cp = g.K_ci = g.K_cd = 0.0;
    const auto tr = simulate_closed_loop(PlantParameters{}, g, move(0.05), OperatingMode::Position);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        EXPECT_EQ(tr.v_a[k], 0.0);
        EXPECT_EQ(tr.spd[k], 0.0);
    }
}

TEST(ClosedLoop, CurrentModeSettlesOnReference) {
    SimulationOptions o;
    o.current_setpoint = 0.5;
    o.settle_time = 0.0;
    const auto tr = simulate_closed_loop(PlantParameters{}, grid_optimum(), move(1e-4), OperatingMode::Current, o, 1.0);
    ASSERT_FALSE(tr.failed());
    // Fast electrical response first, then the integrator absorbs the back
    // EMF as the rotor spins up to its viscous terminal speed.
    EXPECT_NEAR(tr.i_a[10], 0.5, 0.5 * 0.05);
    EXPECT_NEAR(tr.i_a.back(), 0.5, 1e-3);
}

TEST(ClosedLoop, GridOptimumTracksSetpoint) {
    const auto tr = simulate_closed_loop(PlantParameters{}, grid_optimum(), move(0.60), OperatingMode::Position);
    ASSERT_FALSE(tr.failed());
    EXPECT_NEAR(tr.pos.back(), 0.60, 1e-3);
    for (const auto* v : {&tr.pos_ref, &tr.spd_ref, &tr.pos, &tr.spd, &tr.i_a, &tr.v_a})
        EXPECT_EQ(v->size(), tr.size());
    double vmax = 0.0;
    for (double v : tr.v_a) vmax = std::max(vmax, std::abs(v));
    EXPECT_LE(vmax, SimulationOptions{}.voltage_limit);
}

TEST(ClosedLoop, HalvingStepBarelyChangesSpeed) {
    SimulationOptions fine;
    fine.dt = 0.5e-5;
    const auto a = simulate_closed_loop(PlantParameters{}, grid_optimum(), move(0.05), OperatingMode::Speed);
    const auto b = simulate_closed_loop(PlantParameters{}, grid_optimum(), move(0.05), OperatingMode::Speed, fine);
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < a.size() && 2 * k < b.size(); ++k) {
        err = std::max(err, std::abs(a.spd[k] - b.spd[2 * k]));
        scale = std::max(scale, std::abs(a.spd[k]));
    }
    EXPECT_LT(err / scale, 1e-3);
}

TEST(ClosedLoop, DivergenceIsFlaggedNotThrown) {
    ControllerGains g = grid_optimum();
    g.K_v = 1e6;
    g.K_p = 1e6;
    SimulationOptions o;
    o.voltage_limit = 1e300;
    const auto tr = simulate_closed_loop(PlantParameters{}, g, move(0.05), OperatingMode::Position, o);
    EXPECT_TRUE(tr.failed());
    EXPECT_EQ(position_cost(tr), kDefaultPenalty);
    for (double v : tr.pos) EXPECT_TRUE(std::isfinite(v));
}

TEST(ClosedLoop, RejectsNegativeGains) {
    ControllerGains g = grid_optimum();
    g.K_v = -1.0;
    EXPECT_THROW(simulate_closed_loop(PlantParameters{}, g, move(0.05), OperatingMode::Speed), std::invalid_argument);
}
