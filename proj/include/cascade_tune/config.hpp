#pragma once

// Run configuration: a JSON document (comments allowed) mapped onto the
// module parameter structs. Errors name the offending key by dotted path.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "baselines.hpp"
#include "identification.hpp"

namespace cascade_tune {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SyntheticPlant {
    Polynomial numerator;
    Polynomial denominator;
};

struct FitKsSettings {
    std::string trace;  // CSV with t, v_a and pos columns; empty: synthesize a step
    double volts = 10.0;
    double duration = 0.05;
    StiffnessRange range{};
};

struct TrainStudySettings {
    std::vector<std::size_t> sizes{20, 30, 50};
    std::size_t seeds = 10;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "results";
    PlantParameters plant{};
    std::optional<SyntheticPlant> synthetic;
    MotionCommand motion{};
    ControllerGains gains{};
    SimulationOptions simulation{};
    CostWeights weights{};
    double kv_step = 0.005, ki_step = 10.0, kp_step = 15.0;
    BoConfig bo_speed{};
    BoConfig bo_position = [] {
        BoConfig c;
        c.n_max = 20;
        return c;
    }();
    RelayConfig relay_speed{1.0, 0.0, 0.2};
    RelayConfig relay_position{0.01, 0.0, 0.5};
    CascadeExperiment experiment{};
    std::vector<std::string> compare_methods{"bo", "grid", "zn", "relay", "itae"};
    TrainStudySettings train_study{};
    FitKsSettings fit_ks{};

    [[nodiscard]] GainGrid speed_grid() const { return cascade_tune::speed_grid(kv_step, ki_step); }
    [[nodiscard]] GainGrid position_grid() const { return cascade_tune::position_grid(kp_step); }
    [[nodiscard]] GainLimits limits() const { return GainLimits::from_grids(speed_grid(), position_grid()); }

    void validate() const {
        plant.validate();
        motion.validate();
        gains.validate();
        simulation.validate();
        weights.validate();
        for (auto [name, step, upper] : {std::tuple{"grid.kv_step", kv_step, 0.5},
                                         std::tuple{"grid.ki_step", ki_step, 900.0},
                                         std::tuple{"grid.kp_step", kp_step, 4200.0}})
            if (!(step > 0.0) || step > upper) throw std::invalid_argument(std::string(name) + " must be in (0, bound]");
        bo_speed.validate("bo.speed");
        bo_position.validate("bo.position");
        if (bo_speed.n_train > speed_grid().size())
            throw std::invalid_argument("bo.speed.n_train exceeds the number of grid nodes");
        if (bo_position.n_train > position_grid().size())
            throw std::invalid_argument("bo.position.n_train exceeds the number of grid nodes");
        relay_speed.validate("relay.speed");
        relay_position.validate("relay.position");
        for (const auto& m : compare_methods)
            if (m != "bo" && m != "grid" && m != "zn" && m != "relay" && m != "itae")
                throw std::invalid_argument("compare.methods: unknown method " + m);
        if (train_study.sizes.empty()) throw std::invalid_argument("train_study.sizes must not be empty");
        for (auto n : train_study.sizes) {
            if (n < 1) throw std::invalid_argument("train_study.sizes must be positive");
            if (n > speed_grid().size())
                throw std::invalid_argument("train_study.sizes: N_train exceeds the number of grid nodes");
        }
        if (train_study.seeds < 1) throw std::invalid_argument("train_study.seeds must be at least 1");
        if (!(fit_ks.range.lower > 0.0) || !(fit_ks.range.upper >= fit_ks.range.lower))
            throw std::invalid_argument("fit_ks.lower/upper must satisfy 0 < lower <= upper");
        if (synthetic) TransferFunction(synthetic->numerator, synthetic->denominator);
    }
};

namespace detail {

// Object reader that records which keys were consumed so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    [[nodiscard]] std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

    void number(const std::string& k, double& out, bool required = false) {
        used_.insert(k);
        if (!has(k)) {
            if (required) throw ConfigError("missing required key " + key(k));
            return;
        }
        const auto& v = j_.at(k);
        if (!v.is_number()) throw ConfigError(key(k) + " must be a number");
        out = v.get<double>();
    }

    template <typename Int>
    void integer(const std::string& k, Int& out) {
        used_.insert(k);
        if (!has(k)) return;
        const auto& v = j_.at(k);
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key(k) + " must be a nonnegative integer");
        out = static_cast<Int>(v.get<long long>());
    }

    void boolean(const std::string& k, bool& out) {
        used_.insert(k);
        if (!has(k)) return;
        if (!j_.at(k).is_boolean()) throw ConfigError(key(k) + " must be true or false");
        out = j_.at(k).get<bool>();
    }

    void string(const std::string& k, std::string& out) {
        used_.insert(k);
        if (!has(k)) return;
        if (!j_.at(k).is_string()) throw ConfigError(key(k) + " must be a string");
        out = j_.at(k).get<std::string>();
    }

    void numbers(const std::string& k, std::vector<double>& out) {
        used_.insert(k);
        if (!has(k)) return;
        const auto& v = j_.at(k);
        if (!v.is_array()) throw ConfigError(key(k) + " must be an array of numbers");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(key(k) + " must be an array of numbers");
            out.push_back(e.get<double>());
        }
    }

    std::optional<Section> child(const std::string& k) {
        used_.insert(k);
        if (!has(k)) return std::nullopt;
        return Section(j_.at(k), key(k));
    }

    [[nodiscard]] const nlohmann::json& raw(const std::string& k) {
        used_.insert(k);
        return j_.at(k);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ConfigError("unknown key " + key(k));
    }

private:
    [[nodiscard]] std::string where() const { return path_.empty() ? "config" : path_; }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline void read_bo(Section& s, BoConfig& c) {
    s.integer("n_train", c.n_train);
    s.integer("n_max", c.n_max);
    s.number("beta", c.beta);
    s.integer("repeat_threshold", c.repeat_threshold);
    s.integer("refit_every", c.refit_every);
    s.boolean("reset_repeats_on_improvement", c.reset_repeats_on_improvement);
    s.integer("hyper_starts", c.hyper_starts);
    std::vector<double> b;
    for (auto [name, bound] : {std::pair<const char*, std::pair<double, double>*>{"sigma_f_bounds", &c.bounds.sigma_f},
                               {"length_scale_bounds", &c.bounds.length_scale},
                               {"sigma_n_bounds", &c.bounds.sigma_n}}) {
        b.clear();
        s.numbers(name, b);
        if (b.empty()) continue;
        if (b.size() != 2) throw ConfigError(s.key(name) + " must be [lower, upper]");
        *bound = {b[0], b[1]};
    }
    s.finish();
}

inline void read_relay(Section& s, RelayConfig& c) {
    s.number("amplitude", c.amplitude);
    s.number("hysteresis", c.hysteresis);
    s.number("window", c.window);
    s.finish();
}

template <std::size_t N>
void read_array(Section& s, const std::string& k, std::array<double, N>& out) {
    std::vector<double> v;
    s.numbers(k, v);
    if (v.empty()) return;
    if (v.size() != N) throw ConfigError(s.key(k) + " must have " + std::to_string(N) + " entries");
    std::copy(v.begin(), v.end(), out.begin());
}

}  // namespace detail

// Parses a configuration document. When a `plant` block is present every
// plant constant except B_l must be given.
inline RunConfig parse_config(const nlohmann::json& doc) {
    using detail::Section;
    RunConfig c;
    Section root(doc, "");
    root.integer("seed", c.seed);
    root.string("output_dir", c.output_dir);

    if (auto s = root.child("plant")) {
        auto& p = c.plant;
        for (auto [k, ref] : {std::pair<const char*, double*>{"R_a", &p.R_a}, {"L_a", &p.L_a}, {"K_t", &p.K_t},
                              {"K_b", &p.K_b}, {"J_m", &p.J_m}, {"B_m", &p.B_m}, {"J_l", &p.J_l},
                              {"B_ml", &p.B_ml}, {"K_s", &p.K_s}, {"Q", &p.Q}})
            s->number(k, *ref, true);
        s->number("B_l", p.B_l);
        double rpm = p.omega_max * 60.0 / kTwoPi;
        s->number("omega_max_rpm", rpm);
        p.omega_max = rpm_to_rad_per_s(rpm);
        s->finish();
    }
    if (auto s = root.child("synthetic_plant")) {
        SyntheticPlant sp;
        s->numbers("numerator", sp.numerator);
        s->numbers("denominator", sp.denominator);
        if (sp.numerator.empty() || sp.denominator.empty())
            throw ConfigError("synthetic_plant needs numerator and denominator");
        s->finish();
        c.synthetic = sp;
    }
    if (auto s = root.child("motion")) {
        s->number("position", c.motion.position);
        s->number("speed", c.motion.speed);
        s->number("acceleration", c.motion.acceleration);
        s->number("deceleration", c.motion.deceleration);
        s->finish();
    }
    if (auto s = root.child("controller")) {
        auto& g = c.gains;
        for (auto [k, ref] : {std::pair<const char*, double*>{"K_p", &g.K_p}, {"K_v", &g.K_v}, {"K_i", &g.K_i},
                              {"K_cp", &g.K_cp}, {"K_ci", &g.K_ci}, {"K_cd", &g.K_cd}})
            s->number(k, *ref);
        s->finish();
    }
    if (auto s = root.child("simulation")) {
        auto& o = c.simulation;
        s->number("dt", o.dt);
        s->number("settle_time", o.settle_time);
        s->number("voltage_limit", o.voltage_limit);
        s->number("derivative_filter_n", o.derivative_filter_n);
        s->boolean("literal_kcd", o.literal_kcd);
        s->number("current_setpoint", o.current_setpoint);
        s->number("load_torque", o.load_torque);
        std::string model = o.model == PlantModel::TwoMass ? "two_mass" : "approximated";
        s->string("model", model);
        if (model == "approximated") o.model = PlantModel::Approximated;
        else if (model == "two_mass") o.model = PlantModel::TwoMass;
        else throw ConfigError("simulation.model must be approximated or two_mass");
        s->finish();
    }
    if (auto s = root.child("weights")) {
        detail::read_array(*s, "speed", c.weights.speed);
        detail::read_array(*s, "position", c.weights.position);
        s->number("penalty", c.weights.penalty);
        s->finish();
    }
    if (auto s = root.child("grid")) {
        s->number("kv_step", c.kv_step);
        s->number("ki_step", c.ki_step);
        s->number("kp_step", c.kp_step);
        s->finish();
    }
    if (auto s = root.child("bo")) {
        if (auto b = s->child("speed")) detail::read_bo(*b, c.bo_speed);
        if (auto b = s->child("position")) detail::read_bo(*b, c.bo_position);
        s->finish();
    }
    if (auto s = root.child("relay")) {
        if (auto r = s->child("speed")) detail::read_relay(*r, c.relay_speed);
        if (auto r = s->child("position")) detail::read_relay(*r, c.relay_position);
        s->finish();
    }
    if (auto s = root.child("ziegler_nichols")) {
        auto& e = c.experiment;
        s->number("speed_step", e.speed_step);
        s->number("position_step", e.position_step);
        s->number("speed_window", e.speed_window);
        s->number("position_window", e.position_window);
        std::vector<double> b;
        s->numbers("speed_bounds", b);
        if (!b.empty()) {
            if (b.size() != 2) throw ConfigError("ziegler_nichols.speed_bounds must be [lower, upper]");
            e.speed_bounds = {b[0], b[1]};
        }
        b.clear();
        s->numbers("position_bounds", b);
        if (!b.empty()) {
            if (b.size() != 2) throw ConfigError("ziegler_nichols.position_bounds must be [lower, upper]");
            e.position_bounds = {b[0], b[1]};
        }
        s->finish();
    }
    if (auto s = root.child("compare")) {
        if (s->has("methods")) {
            const auto& m = s->raw("methods");
            if (!m.is_array()) throw ConfigError("compare.methods must be an array of names");
            c.compare_methods.clear();
            for (const auto& e : m) {
                if (!e.is_string()) throw ConfigError("compare.methods must be an array of names");
                c.compare_methods.push_back(e.get<std::string>());
            }
        }
        s->finish();
    }
    if (auto s = root.child("train_study")) {
        std::vector<double> sizes;
        s->numbers("sizes", sizes);
        if (s->has("sizes")) {
            c.train_study.sizes.clear();
            for (double v : sizes) {
                if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("train_study.sizes must be positive integers");
                c.train_study.sizes.push_back(static_cast<std::size_t>(v));
            }
        }
        s->integer("seeds", c.train_study.seeds);
        s->finish();
    }
    if (auto s = root.child("fit_ks")) {
        s->string("trace", c.fit_ks.trace);
        s->number("volts", c.fit_ks.volts);
        s->number("duration", c.fit_ks.duration);
        s->number("lower", c.fit_ks.range.lower);
        s->number("upper", c.fit_ks.range.upper);
        s->finish();
    }
    root.finish();

    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(ss.str(), nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(doc);
}

}  // namespace cascade_tune
