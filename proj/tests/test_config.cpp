#include <gtest/gtest.h>

#include "cascade_tune/config.hpp"

using namespace cascade_tune;
using nlohmann::json;

namespace {

json full_plant() {
    return {{"R_a", 9.02}, {"L_a", 0.0187}, {"K_t", 0.515}, {"K_b", 0.55}, {"J_m", 0.27e-4},
            {"B_m", 0.0074}, {"J_l", 6.53e-4}, {"B_ml", 0.014}, {"K_s", 3e7}, {"Q", 0.018}};
}

std::string error_of(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
    const auto c = parse_config(json::object());
    EXPECT_EQ(c.plant.R_a, 9.02);
    EXPECT_EQ(c.plant.K_s, 3e7);
    EXPECT_EQ(c.plant.Q, 0.018);
    EXPECT_NEAR(c.plant.omega_max, 8000.0 * 2.0 * std::numbers::pi / 60.0, 1e-9);
    EXPECT_EQ(c.gains.K_cp, 60.0);
    EXPECT_EQ(c.gains.K_ci, 1000.0);
    EXPECT_EQ(c.gains.K_cd, 18.0);
    EXPECT_EQ(c.motion.position, 0.6);
    EXPECT_EQ(c.motion.acceleration, 10.0);
    EXPECT_EQ(c.weights.speed, (std::array<double, 4>{500, 2, 1e4, 500}));
    EXPECT_EQ(c.weights.position, (std::array<double, 4>{1e4, 10, 15, 100}));
    EXPECT_EQ(c.bo_speed.n_train, 30u);
    EXPECT_EQ(c.bo_speed.beta, 2.0);
    EXPECT_EQ(c.bo_speed.repeat_threshold, 3);
    EXPECT_EQ(c.speed_grid().size(), 9000u);
    EXPECT_EQ(c.position_grid().size(), 280u);
    EXPECT_EQ(c.simulation.dt, 1e-5);
}

TEST(Config, ShippedDefaultFileParses) {
    const auto c = load_config(std::string(CASCADE_TUNE_SOURCE_DIR) + "/data/default_config.json");
    const auto d = parse_config(json::object());
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.plant.K_s, d.plant.K_s);
    EXPECT_EQ(c.plant.J_l, d.plant.J_l);
    EXPECT_NEAR(c.plant.omega_max, d.plant.omega_max, 1e-9);
    EXPECT_EQ(c.weights.speed, d.weights.speed);
    EXPECT_EQ(c.bo_position.n_max, 20u);
    EXPECT_EQ(c.compare_methods.size(), 5u);
}

TEST(Config, PlantBlockRequiresEveryConstant) {
    auto p = full_plant();
    EXPECT_NO_THROW(parse_config({{"plant", p}}));
    p.erase("K_s");
    EXPECT_NE(error_of({{"plant", p}}).find("plant.K_s"), std::string::npos);
}

TEST(Config, RejectsNonPositivePlantConstant) {
    auto p = full_plant();
    p["J_l"] = 0.0;
    EXPECT_NE(error_of({{"plant", p}}).find("J_l"), std::string::npos);
}

TEST(Config, RejectsUnknownKeys) {
    EXPECT_NE(error_of({{"sede", 3}}).find("unknown key sede"), std::string::npos);
    EXPECT_NE(error_of({{"bo", {{"speed", {{"n_trian", 3}}}}}}).find("bo.speed.n_trian"), std::string::npos);
}

TEST(Config, TypeErrorsNameTheKey) {
    EXPECT_NE(error_of({{"motion", {{"speed", "fast"}}}}).find("motion.speed"), std::string::npos);
    EXPECT_NE(error_of({{"seed", -1}}).find("seed"), std::string::npos);
    EXPECT_NE(error_of({{"simulation", {{"model", "rigid"}}}}).find("simulation.model"), std::string::npos);
    EXPECT_NE(error_of({{"weights", {{"speed", {1, 2}}}}}).find("weights.speed"), std::string::npos);
}

TEST(Config, TrainingSetLargerThanGrid) {
    const json doc = {{"grid", {{"kp_step", 1000}}}, {"bo", {{"position", {{"n_train", 5}}}}}};
    EXPECT_NE(error_of(doc).find("bo.position.n_train"), std::string::npos);
    const json ok = {{"grid", {{"kp_step", 1000}}}, {"bo", {{"position", {{"n_train", 4}}}}}};
    EXPECT_NO_THROW(parse_config(ok));
}

TEST(Config, RejectsBadGridAndMethods) {
    EXPECT_NE(error_of({{"grid", {{"kv_step", 0}}}}).find("grid.kv_step"), std::string::npos);
    EXPECT_NE(error_of({{"compare", {{"methods", {"bo", "pso"}}}}}).find("pso"), std::string::npos);
    EXPECT_NE(error_of({{"train_study", {{"sizes", {20, 2.5}}}}}).find("train_study.sizes"), std::string::npos);
}

TEST(Config, ReadsOverrides) {
    const json doc = {{"seed", 9},
                      {"plant", full_plant()},
                      {"controller", {{"K_p", 300}}},
                      {"bo", {{"speed", {{"beta", 1.5}, {"length_scale_bounds", {0.1, 2.0}}}}}},
                      {"simulation", {{"model", "two_mass"}}},
                      {"synthetic_plant", {{"numerator", {1.0}}, {"denominator", {1.0, 3.0, 3.0, 1.0}}}}};
    const auto c = parse_config(doc);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.gains.K_p, 300.0);
    EXPECT_EQ(c.gains.K_v, ControllerGains{}.K_v);
    EXPECT_EQ(c.bo_speed.beta, 1.5);
    EXPECT_EQ(c.bo_speed.bounds.length_scale, (std::pair<double, double>{0.1, 2.0}));
    EXPECT_EQ(c.simulation.model, PlantModel::TwoMass);
    ASSERT_TRUE(c.synthetic.has_value());
    EXPECT_EQ(c.synthetic->denominator.size(), 4u);
}

TEST(Config, MissingFileAndSyntaxError) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    const auto path = std::filesystem::temp_directory_path() / "cascade_tune_bad_config.json";
    {
        std::ofstream o(path);
        o << "{ \"seed\": 1, }";
    }
    EXPECT_THROW(load_config(path.string()), ConfigError);
    std::filesystem::remove(path);
}
