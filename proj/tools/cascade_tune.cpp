// cascade_tune: simulate, tune and compare cascade controllers for the
// ball-screw axis model.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cascade_tune/config.hpp"
#include "cascade_tune/io.hpp"

namespace fs = std::filesystem;
using namespace cascade_tune;

namespace {

enum Exit { kOk = 0, kConfig = 1, kUnstable = 2, kTuner = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig load(const Common& c) {
    RunConfig cfg = c.config.empty() ? parse_config(nlohmann::json::object()) : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.output_dir = c.out;
    cfg.bo_speed.seed = cfg.seed;
    cfg.bo_position.seed = cfg.seed + 1;
    return cfg;
}

struct Evaluated {
    ControllerGains gains;
    double speed_cost = 0.0;
    double position_cost = 0.0;
    SpeedMetrics speed{};
    PositionMetrics position{};
    SimulationTrace speed_trace;
    SimulationTrace position_trace;
};

Evaluated evaluate(const RunConfig& cfg, const ControllerGains& g) {
    Evaluated e;
    e.gains = g;
    e.speed_trace = simulate_closed_loop(cfg.plant, g, cfg.motion, OperatingMode::Speed, cfg.simulation);
    e.position_trace = simulate_closed_loop(cfg.plant, g, cfg.motion, OperatingMode::Position, cfg.simulation);
    e.speed_cost = speed_cost(e.speed_trace, cfg.weights);
    e.position_cost = position_cost(e.position_trace, cfg.weights);
    if (!e.speed_trace.failed()) e.speed = speed_metrics(e.speed_trace);
    if (!e.position_trace.failed()) e.position = position_metrics(e.position_trace);
    return e;
}

struct Tuned {
    ControllerGains gains;
    std::size_t evaluations = 0;
    std::vector<std::string> log;  // BO iteration lines, CSV
};

// Shared caches so that compare can reuse grid evaluations for BO.
struct Caches {
    explicit Caches(const RunConfig& cfg)
        : speed(cfg.speed_grid(), speed_objective(cfg.plant, cfg.motion, cfg.weights, cfg.gains, cfg.simulation)) {}
    CachedObjective speed;
    std::map<std::pair<double, double>, CachedObjective> position;

    CachedObjective& position_for(const RunConfig& cfg, const ControllerGains& g) {
        const auto key = std::make_pair(g.K_v, g.K_i);
        auto it = position.find(key);
        if (it == position.end())
            it = position
                     .emplace(key, CachedObjective(cfg.position_grid(), position_objective(cfg.plant, cfg.motion,
                                                                                           cfg.weights, g,
                                                                                           cfg.simulation)))
                     .first;
        return it->second;
    }
};

Tuned tune_bo(const RunConfig& cfg, Caches& caches, bool verbose) {
    Tuned t;
    auto observer = [&](const std::string& stage) {
        return [&t, stage, verbose](const BoSample& s) {
            t.log.push_back(bo_log_line(stage, s));
            if (verbose && s.iteration > 0) {
                std::cout << "bo " << stage << " iter " << s.iteration << " x=(" << fmt(s.x[0]);
                if (s.x.size() > 1) std::cout << ", " << fmt(s.x[1]);
                std::cout << ") cost " << fmt(s.cost) << " acq " << fmt(s.acquisition) << " incumbent "
                          << fmt(s.incumbent_cost) << '\n';
            }
        };
    };
    const auto speed = bo_minimize(caches.speed, cfg.bo_speed, observer("speed"));
    ControllerGains g = cfg.gains;
    g.K_v = speed.incumbent.at(0);
    g.K_i = speed.incumbent.at(1);
    const auto pos = bo_minimize(caches.position_for(cfg, g), cfg.bo_position, observer("position"));
    g.K_p = pos.incumbent.at(0);
    t.gains = g;
    t.evaluations = speed.evaluations + pos.evaluations;
    if (verbose)
        std::cout << "bo speed N_BO " << speed.n_bo << " (" << to_string(speed.termination) << "), position N_BO "
                  << pos.n_bo << " (" << to_string(pos.termination) << ")\n";
    return t;
}

struct GridTuned {
    Tuned tuned;
    CostSurface speed;
    CostSurface position;
};

GridTuned tune_grid(const RunConfig& cfg, Caches& caches) {
    GridTuned r;
    r.speed = grid_search(caches.speed);
    ControllerGains g = cfg.gains;
    g.K_v = r.speed.argmin_point()[0];
    g.K_i = r.speed.argmin_point()[1];
    r.position = grid_search(caches.position_for(cfg, g));
    g.K_p = r.position.argmin_point()[0];
    r.tuned.gains = g;
    r.tuned.evaluations = r.speed.cost.size() + r.position.cost.size();
    return r;
}

void print_warnings(const std::vector<std::string>& w) {
    for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

// Gains for the linear fixture plant: ultimate point of the unity P loop and
// the PI rule, reported as speed gains.
Tuned tune_synthetic(const RunConfig& cfg, const std::string& method) {
    const TransferFunction g(cfg.synthetic->numerator, cfg.synthetic->denominator);
    double fastest = 0.0, slowest = std::numeric_limits<double>::infinity();
    for (const auto& p : g.poles()) {
        const double m = std::max(std::abs(p), 1e-9);
        fastest = std::max(fastest, m);
        slowest = std::min(slowest, m);
    }
    if (!std::isfinite(slowest)) fastest = slowest = 1.0;
    const double dt = 1e-2 / fastest;
    const double duration = std::min(100.0 / slowest, 2e5 * dt);
    Tuned t;
    if (method == "zn") {
        std::size_t sims = 0;
        const auto u = find_ultimate_gain(counted(lti_proportional_loop(g, dt, duration), sims), dt,
                                          cfg.experiment.speed_bounds);
        const auto pi = zn_pi(u.K_u, u.P_u);
        std::cout << "ultimate gain " << fmt(u.K_u) << " period " << fmt(u.P_u) << '\n';
        t.gains.K_v = pi.K_v;
        t.gains.K_i = pi.K_i;
        t.evaluations = sims;
    } else {
        RelayConfig rc = cfg.relay_speed;
        rc.window = duration;
        const auto r = lti_relay(g, rc, dt);
        const auto pi = zn_pi(r.K_u, r.period);
        std::cout << "relay amplitude " << fmt(r.amplitude) << " period " << fmt(r.period) << " K_u " << fmt(r.K_u)
                  << '\n';
        t.gains.K_v = pi.K_v;
        t.gains.K_i = pi.K_i;
        t.evaluations = 1;
    }
    t.gains.K_p = 0.0;
    return t;
}

Tuned run_method(const RunConfig& cfg, const std::string& method, Caches& caches, bool verbose,
                 std::optional<GridTuned>* grid_out = nullptr) {
    if (method == "bo") return tune_bo(cfg, caches, verbose);
    if (method == "grid") {
        auto r = tune_grid(cfg, caches);
        Tuned t = r.tuned;
        if (grid_out) *grid_out = std::move(r);
        return t;
    }
    if (method == "zn") {
        auto r = ziegler_nichols_tune(cfg.plant, cfg.gains, cfg.simulation, cfg.limits(), cfg.experiment);
        print_warnings(r.warnings);
        if (verbose)
            std::cout << "speed K_u " << fmt(r.speed_K_u) << " P_u " << fmt(r.speed_P_u) << ", position K_u "
                      << fmt(r.position_K_u) << " P_u " << fmt(r.position_P_u) << '\n';
        return {r.gains, r.simulations, {}};
    }
    if (method == "relay") {
        auto r = relay_tune(cfg.plant, cfg.gains, cfg.simulation, cfg.relay_speed, cfg.relay_position,
                            cfg.limits());
        print_warnings(r.warnings);
        if (verbose)
            std::cout << "speed K_u " << fmt(r.speed_K_u) << " P_u " << fmt(r.speed_P_u) << ", position K_u "
                      << fmt(r.position_K_u) << " P_u " << fmt(r.position_P_u) << '\n';
        return {r.gains, r.simulations, {}};
    }
    if (method == "itae") {
        auto r = itae_tune(cfg.plant, cfg.motion, cfg.speed_grid(), cfg.position_grid(), cfg.gains, cfg.simulation,
                           cfg.weights.penalty);
        return {r.gains, r.speed.cost.size() + r.position.cost.size(), {}};
    }
    throw ConfigError("unknown method " + method + " (expected bo, grid, zn, relay or itae)");
}

fs::path out_path(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.output_dir) / name; }

std::string joined_log(const std::vector<std::string>& lines) {
    std::string s = bo_log_header() + "\n";
    for (const auto& l : lines) s += l + "\n";
    return s;
}

int cmd_simulate(const Common& common, const std::string& mode_name, std::optional<double> kp,
                 std::optional<double> kv, std::optional<double> ki) {
    const auto cfg = load(common);
    const auto mode = parse_mode(mode_name);
    ControllerGains g = cfg.gains;
    if (kp) g.K_p = *kp;
    if (kv) g.K_v = *kv;
    if (ki) g.K_i = *ki;
    g.validate();
    const auto tr = simulate_closed_loop(cfg.plant, g, cfg.motion, mode, cfg.simulation);
    write_atomic(out_path(cfg, std::string("trace_") + to_string(mode) + ".csv"), trace_csv(tr));
    if (tr.failed()) {
        std::cout << "mode " << to_string(mode) << " unstable" << (tr.speed_alarm ? " (speed limit)" : "") << '\n';
        return kUnstable;
    }
    std::cout << "mode " << to_string(mode);
    if (mode == OperatingMode::Speed) {
        const auto m = speed_metrics(tr);
        std::cout << " T_s " << fmt(m.settling_time) << " h_s " << fmt(m.overshoot) << " itae " << fmt(m.itae)
                  << " e_inf " << fmt(m.error_inf) << " cost " << fmt(speed_cost(tr, cfg.weights));
    } else if (mode == OperatingMode::Position) {
        const auto m = position_metrics(tr);
        std::cout << " T_p " << fmt(m.settling_time) << " h_p " << fmt(m.overshoot) << " h_ps "
                  << fmt(m.speed_overshoot) << " e_inf " << fmt(m.error_inf) << " cost "
                  << fmt(position_cost(tr, cfg.weights));
    } else {
        std::cout << " final current " << fmt(tr.i_a.back());
    }
    std::cout << '\n';
    return kOk;
}

int cmd_tune(const Common& common, const std::string& method) {
    const auto cfg = load(common);
    if (cfg.synthetic) {
        if (method != "zn" && method != "relay")
            throw ConfigError("synthetic_plant supports the zn and relay methods only");
        const auto t = tune_synthetic(cfg, method);
        write_atomic(out_path(cfg, "gains.csv"),
                     gains_csv({{method, t.gains, std::numeric_limits<double>::quiet_NaN(), t.evaluations}}));
        return kOk;
    }
    Caches caches(cfg);
    std::optional<GridTuned> grid;
    const auto t = run_method(cfg, method, caches, true, &grid);
    const auto e = evaluate(cfg, t.gains);
    if (method == "bo") write_atomic(out_path(cfg, "bo_log.csv"), joined_log(t.log));
    if (grid) {
        write_atomic(out_path(cfg, "surface_speed.csv"), surface_csv(grid->speed));
        write_atomic(out_path(cfg, "surface_position.csv"), surface_csv(grid->position));
    }
    write_atomic(out_path(cfg, "gains.csv"), gains_csv({{method, t.gains, e.position_cost, t.evaluations}}));
    std::cout << method << " K_p " << fmt(t.gains.K_p) << " K_v " << fmt(t.gains.K_v) << " K_i " << fmt(t.gains.K_i)
              << " position cost " << fmt(e.position_cost) << " speed cost " << fmt(e.speed_cost) << '\n';
    return kOk;
}

int cmd_compare(const Common& common) {
    const auto cfg = load(common);
    if (cfg.synthetic) throw ConfigError("compare needs the axis plant, not synthetic_plant");
    Caches caches(cfg);
    std::ostringstream table;
    table << "method,K_p,K_v,K_i,speed_cost,position_cost,T_s,h_s,itae_s,e_inf_s,T_p,h_p,h_ps,e_inf_p,"
             "evaluations,status\n";
    // Grid first so that BO draws on the cached surface.
    std::vector<std::string> order = cfg.compare_methods;
    std::stable_partition(order.begin(), order.end(), [](const std::string& m) { return m == "grid"; });
    std::map<std::string, std::string> rows;
    for (const auto& method : order) {
        std::ostringstream row;
        try {
            const auto t = run_method(cfg, method, caches, false);
            const auto e = evaluate(cfg, t.gains);
            write_atomic(out_path(cfg, "trace_" + method + "_speed.csv"), trace_csv(e.speed_trace));
            write_atomic(out_path(cfg, "trace_" + method + "_position.csv"), trace_csv(e.position_trace));
            row << method << ',' << fmt(t.gains.K_p) << ',' << fmt(t.gains.K_v) << ',' << fmt(t.gains.K_i) << ','
                << fmt(e.speed_cost) << ',' << fmt(e.position_cost) << ',' << fmt(e.speed.settling_time) << ','
                << fmt(e.speed.overshoot) << ',' << fmt(e.speed.itae) << ',' << fmt(e.speed.error_inf) << ','
                << fmt(e.position.settling_time) << ',' << fmt(e.position.overshoot) << ','
                << fmt(e.position.speed_overshoot) << ',' << fmt(e.position.error_inf) << ',' << t.evaluations
                << ',' << (e.speed_trace.failed() || e.position_trace.failed() ? "unstable" : "ok") << '\n';
            std::cout << method << ": K_p " << fmt(t.gains.K_p) << " K_v " << fmt(t.gains.K_v) << " K_i "
                      << fmt(t.gains.K_i) << " speed cost " << fmt(e.speed_cost) << " position cost "
                      << fmt(e.position_cost) << '\n';
        } catch (const std::exception& ex) {
            row << method << ",,,,,,,,,,,,,,0,failed: ";
            std::string msg = ex.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            row << msg << '\n';
            std::cout << method << ": failed: " << ex.what() << '\n';
        }
        rows[method] = row.str();
    }
    for (const auto& m : cfg.compare_methods) table << rows[m];
    write_atomic(out_path(cfg, "comparison.csv"), table.str());
    return kOk;
}

int cmd_train_study(const Common& common) {
    const auto cfg = load(common);
    if (cfg.synthetic) throw ConfigError("train-study needs the axis plant, not synthetic_plant");
    Caches caches(cfg);
    std::ostringstream rows;
    rows << "n_train,seed,n_bo_speed,n_bo_position,K_p,K_v,K_i,speed_incumbent_cost,position_incumbent_cost\n";
    std::ostringstream medians;
    medians << "n_train,median_n_bo_speed,median_n_bo_position\n";
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    for (auto n_train : cfg.train_study.sizes) {
        std::vector<double> nbo_s, nbo_p;
        for (std::size_t k = 0; k < cfg.train_study.seeds; ++k) {
            auto bs = cfg.bo_speed;
            auto bp = cfg.bo_position;
            bs.n_train = n_train;
            bs.seed = cfg.seed + k;
            bp.seed = cfg.seed + k + 1;
            if (bp.n_train > cfg.position_grid().size()) bp.n_train = cfg.position_grid().size();
            const auto s = bo_minimize(caches.speed, bs);
            ControllerGains g = cfg.gains;
            g.K_v = s.incumbent[0];
            g.K_i = s.incumbent[1];
            const auto p = bo_minimize(caches.position_for(cfg, g), bp);
            g.K_p = p.incumbent[0];
            nbo_s.push_back(static_cast<double>(s.n_bo));
            nbo_p.push_back(static_cast<double>(p.n_bo));
            rows << n_train << ',' << bs.seed << ',' << s.n_bo << ',' << p.n_bo << ',' << fmt(g.K_p) << ','
                 << fmt(g.K_v) << ',' << fmt(g.K_i) << ',' << fmt(s.incumbent_cost) << ',' << fmt(p.incumbent_cost)
                 << '\n';
            std::cout << "N_train " << n_train << " seed " << bs.seed << ": N_BO speed " << s.n_bo << ", position "
                      << p.n_bo << '\n';
        }
        medians << n_train << ',' << fmt(median(nbo_s)) << ',' << fmt(median(nbo_p)) << '\n';
        std::cout << "N_train " << n_train << " median N_BO speed " << fmt(median(nbo_s)) << ", position "
                  << fmt(median(nbo_p)) << '\n';
    }
    write_atomic(out_path(cfg, "train_study.csv"), rows.str());
    write_atomic(out_path(cfg, "train_study_medians.csv"), medians.str());
    return kOk;
}

int cmd_fit_ks(const Common& common) {
    const auto cfg = load(common);
    SimulationTrace measured;
    if (!cfg.fit_ks.trace.empty()) {
        measured = read_identification_csv(cfg.fit_ks.trace);
    } else {
        measured = voltage_step_trace(cfg.plant, cfg.fit_ks.volts, cfg.fit_ks.duration, cfg.simulation.dt,
                                      cfg.simulation.model);
    }
    const auto fit = fit_axial_stiffness(measured, cfg.plant, cfg.fit_ks.range, cfg.simulation.model);
    std::ostringstream o;
    o << "K_s,residual,evaluations\n" << fmt(fit.K_s) << ',' << fmt(fit.residual) << ',' << fit.evaluations << '\n';
    write_atomic(out_path(cfg, "ks_fit.csv"), o.str());
    std::cout << "K_s " << fmt(fit.K_s) << " residual " << fmt(fit.residual) << " evaluations " << fit.evaluations
              << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascade controller tuning for a ball-screw axis"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "random seed (overrides the config)");
        sub->add_option("--out", common.out, "output directory (overrides the config)");
    };

    std::string mode = "position";
    std::optional<double> kp, kv, ki;
    auto* sim = app.add_subcommand("simulate", "simulate one closed-loop run and write its trace");
    add_common(sim);
    sim->add_option("--mode", mode, "operating mode")->check(CLI::IsMember({"position", "speed", "current"}));
    sim->add_option("--kp", kp, "position gain override");
    sim->add_option("--kv", kv, "speed proportional gain override");
    sim->add_option("--ki", ki, "speed integral gain override");

    std::string method = "bo";
    auto* tune = app.add_subcommand("tune", "tune the cascade with one method and write gains.csv");
    add_common(tune);
    tune->add_option("--method", method, "bo, grid, zn, relay or itae")
        ->check(CLI::IsMember({"bo", "grid", "zn", "relay", "itae"}));

    auto* compare = app.add_subcommand("compare", "run every configured method and tabulate the results");
    add_common(compare);
    auto* study = app.add_subcommand("train-study", "N_BO as a function of the training-set size");
    add_common(study);
    auto* fitks = app.add_subcommand("fit-ks", "estimate the axial stiffness from a step trace");
    add_common(fitks);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(common, mode, kp, kv, ki);
        if (tune->parsed()) return cmd_tune(common, method);
        if (compare->parsed()) return cmd_compare(common);
        if (study->parsed()) return cmd_train_study(common);
        if (fitks->parsed()) return cmd_fit_ks(common);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const NotTunable& e) {
        std::cerr << "not tunable: " << e.what() << '\n';
        return kTuner;
    } catch (const BoAborted& e) {
        std::cerr << "tuner failed: " << e.what() << '\n';
        return kTuner;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
    return kConfig;
}
