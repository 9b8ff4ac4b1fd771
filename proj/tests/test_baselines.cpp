#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cascade_tune/baselines.hpp"
#include "cascade_tune/bo.hpp"
#include "generators.hpp"

using namespace cascade_tune;

namespace {

const TransferFunction kTripleLag({1.0}, {1.0, 3.0, 3.0, 1.0});

GainGrid square(std::size_t n) {
    return GainGrid({GridAxis{"a", 0.0, 1.0, n}, GridAxis{"b", 0.0, 1.0, n}});
}

RelayConfig relay_config(double d) {
    RelayConfig c;
    c.amplitude = d;
    c.window = 60.0;
    return c;
}

}  // namespace

TEST(GridSearch, QuadraticArgmin) {
    const auto grid = square(7);
    const auto s = grid_search([](const Point& x) { return (x[0] - 2.0) * (x[0] - 2.0) + (x[1] - 5.0) * (x[1] - 5.0); },
                               grid);
    EXPECT_EQ(s.argmin_point(), (Point{2.0, 5.0}));
    EXPECT_EQ(s.min_cost(), 0.0);
    ASSERT_EQ(s.cost.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_GE(s.cost[i], s.min_cost());
}

TEST(GridSearch, TiesGoToFirstNode) {
    const auto s = grid_search([](const Point&) { return 3.0; }, square(4));
    EXPECT_EQ(s.argmin, 0u);
}

TEST(GridSearch, MatchesBruteForceProperty) {
    gen::Rng r(61);
    for (int trial = 0; trial < 20; ++trial) {
        const auto grid = square(2 + r.index(10));
        std::vector<double> table(grid.size());
        for (auto& v : table) v = r.uniform(-1.0, 1.0);
        const auto s = grid_search([&](const Point& x) { return table[grid.nearest(x)]; }, grid);
        const auto it = std::min_element(table.begin(), table.end());
        EXPECT_EQ(s.argmin, static_cast<std::size_t>(it - table.begin()));
    }
}

TEST(NearOptimalRegion, ConnectedBand) {
    const GainGrid grid({GridAxis{"k", 0.0, 1.0, 7}});
    // 5 is within 5% of the minimum but cut off from it by a high node.
    const std::vector<double> c{10.0, 1.02, 1.0, 1.04, 2.0, 1.01, 9.0};
    const auto s = grid_search([&](const Point& x) { return c[static_cast<std::size_t>(x[0])]; }, grid);
    EXPECT_EQ(near_optimal_region(s, 0.05), (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(near_optimal_region(s, 0.0), (std::vector<std::size_t>{2}));
}

TEST(AnalyzeOscillation, PureSine) {
    const double dt = 1e-3;
    std::vector<double> y;
    for (int k = 0; k < 10000; ++k) y.push_back(3.0 + 0.5 * std::sin(2.0 * std::numbers::pi * k * dt / 0.4));
    const auto s = analyze_oscillation(y, dt);
    EXPECT_GE(s.cycles, 5u);
    EXPECT_NEAR(s.ratio, 1.0, 1e-3);
    EXPECT_NEAR(s.period, 0.4, 2e-3);
    EXPECT_NEAR(s.amplitude, 0.5, 1e-3);
}

TEST(AnalyzeOscillation, DecayAndFlat) {
    const double dt = 1e-3;
    std::vector<double> y, flat(1000, 1.0);
    for (int k = 0; k < 10000; ++k) y.push_back(std::exp(-0.5 * k * dt) * std::sin(2.0 * std::numbers::pi * k * dt));
    const auto s = analyze_oscillation(y, dt);
    EXPECT_NEAR(s.ratio, std::exp(-0.5), 0.02);
    EXPECT_EQ(analyze_oscillation(flat, dt).ratio, 0.0);
}

TEST(UltimateGain, TripleLag) {
    const double dt = 1e-2;
    const auto u = find_ultimate_gain(lti_proportional_loop(kTripleLag, dt, 100.0), dt, GainBounds{});
    EXPECT_NEAR(u.K_u / 8.0, 1.0, 0.02);
    EXPECT_NEAR(u.P_u / (2.0 * std::numbers::pi / std::sqrt(3.0)), 1.0, 0.02);
    EXPECT_NEAR(u.P_u, 3.628, 0.07);
}

TEST(UltimateGain, ZieglerNicholsRowsOnTripleLag) {
    const auto pi = zn_pi(8.0, 2.0 * std::numbers::pi / std::sqrt(3.0));
    EXPECT_NEAR(pi.K_v, 3.6, 1e-12);
    EXPECT_NEAR(pi.K_i, 1.191, 1e-3);
    EXPECT_EQ(zn_p(8.0), 4.0);
    EXPECT_THROW(zn_pi(8.0, 0.0), std::invalid_argument);
}

TEST(UltimateGain, FirstOrderIsNotTunable) {
    const TransferFunction lag({1.0}, {1.0, 1.0});
    const double dt = 1e-2;
    EXPECT_THROW(find_ultimate_gain(lti_proportional_loop(lag, dt, 50.0), dt, GainBounds{}), NotTunable);
}

TEST(UltimateGain, RejectsBadBounds) {
    const auto loop = lti_proportional_loop(kTripleLag, 1e-2, 10.0);
    EXPECT_THROW(find_ultimate_gain(loop, 1e-2, GainBounds{0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(find_ultimate_gain(loop, 1e-2, GainBounds{2.0, 1.0}), std::invalid_argument);
}

TEST(Relay, TripleLagDescribingFunction) {
    const auto e = lti_relay(kTripleLag, relay_config(1.0), 1e-3);
    EXPECT_NEAR(e.K_u / 8.0, 1.0, 0.15);
    EXPECT_NEAR(e.period / (2.0 * std::numbers::pi / std::sqrt(3.0)), 1.0, 0.15);
    EXPECT_NEAR(e.K_u, 4.0 * 1.0 / (std::numbers::pi * e.amplitude), 1e-12);
}

TEST(Relay, AmplitudeHomogeneityProperty) {
    // A linear plant scales the limit cycle with the relay level, so K_u
    // does not depend on it.
    const auto base = lti_relay(kTripleLag, relay_config(1.0), 1e-3);
    gen::Rng r(62);
    for (int trial = 0; trial < 5; ++trial) {
        const double d = r.log_uniform(0.1, 10.0);
        const auto e = lti_relay(kTripleLag, relay_config(d), 1e-3);
        EXPECT_NEAR(e.amplitude / (d * base.amplitude), 1.0, 0.02) << "d = " << d;
        EXPECT_NEAR(e.K_u / base.K_u, 1.0, 0.02);
    }
}

TEST(Relay, AgreesWithUltimateGainSearch) {
    const double dt = 1e-2;
    const auto u = find_ultimate_gain(lti_proportional_loop(kTripleLag, dt, 100.0), dt, GainBounds{});
    const auto e = lti_relay(kTripleLag, relay_config(1.0), 1e-3);
    EXPECT_NEAR(e.K_u / u.K_u, 1.0, 0.2);
    EXPECT_NEAR(e.period / u.P_u, 1.0, 0.2);
}

TEST(Relay, Validation) {
    RelayConfig c;
    c.amplitude = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = RelayConfig{};
    c.hysteresis = -1.0;
    EXPECT_THROW(c.validate("relay.speed"), std::invalid_argument);
}

TEST(Relay, FirstOrderChattersAtSampleRate) {
    const double dt = 1e-3;
    const auto e = lti_relay(TransferFunction({1.0}, {1.0, 1.0}), relay_config(1.0), dt);
    EXPECT_LE(e.period, 4.0 * dt);
}

TEST(Clamp, WarnsOutsideBox) {
    const GainLimits lim;
    std::vector<std::string> w;
    const auto g = clamp_speed({1.2, 5.0}, lim, w);
    EXPECT_EQ(g.K_v, 0.5);
    EXPECT_EQ(g.K_i, 10.0);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_NE(w[0].find("K_v"), std::string::npos);
    EXPECT_EQ(clamp_position(100.0, lim, w), 100.0);
    EXPECT_EQ(w.size(), 2u);
    EXPECT_EQ(clamp_position(1e5, lim, w), 4200.0);
    EXPECT_EQ(w.size(), 3u);
}

TEST(Clamp, LimitsFromGrids) {
    const auto lim = GainLimits::from_grids(speed_grid(), position_grid());
    EXPECT_EQ(lim.kv_min, 0.005);
    EXPECT_NEAR(lim.kv_max, 0.5, 1e-12);
    EXPECT_EQ(lim.ki_min, 10.0);
    EXPECT_NEAR(lim.ki_max, 900.0, 1e-9);
    EXPECT_EQ(lim.kp_min, 15.0);
    EXPECT_NEAR(lim.kp_max, 4200.0, 1e-9);
}

TEST(Cascade, ZieglerNicholsProducesGainsInBox) {
    const GainLimits lim;
    const auto r = ziegler_nichols_tune(PlantParameters{}, ControllerGains{}, SimulationOptions{}, lim);
    EXPECT_GT(r.speed_K_u, 0.0);
    EXPECT_GT(r.speed_P_u, 0.0);
    EXPECT_GT(r.position_K_u, 0.0);
    EXPECT_GE(r.gains.K_v, lim.kv_min);
    EXPECT_LE(r.gains.K_v, lim.kv_max);
    EXPECT_GE(r.gains.K_p, lim.kp_min);
    EXPECT_LE(r.gains.K_p, lim.kp_max);
    EXPECT_GT(r.simulations, 10u);
}

TEST(Cascade, RelayProducesGainsInBox) {
    const GainLimits lim;
    RelayConfig speed;
    speed.amplitude = 1.0;
    speed.window = 0.2;
    RelayConfig pos;
    pos.amplitude = 1e-4;
    pos.window = 0.5;
    const auto r = relay_tune(PlantParameters{}, ControllerGains{}, SimulationOptions{}, speed, pos, lim);
    EXPECT_GT(r.speed_K_u, 0.0);
    EXPECT_GT(r.position_K_u, 0.0);
    EXPECT_GE(r.gains.K_i, lim.ki_min);
    EXPECT_LE(r.gains.K_i, lim.ki_max);
    EXPECT_GE(r.gains.K_p, lim.kp_min);
    EXPECT_LE(r.gains.K_p, lim.kp_max);
}

TEST(Cascade, ItaeTuneOnCoarseGrids) {
    MotionCommand cmd;
    cmd.position = 0.05;
    const auto r = itae_tune(PlantParameters{}, cmd, speed_grid(0.1, 300.0), position_grid(600.0));
    EXPECT_EQ(r.gains.K_v, r.speed.argmin_point()[0]);
    EXPECT_EQ(r.gains.K_p, r.position.argmin_point()[0]);
    EXPECT_LT(r.speed.min_cost(), kDefaultPenalty);
    EXPECT_LT(r.position.min_cost(), kDefaultPenalty);
}
