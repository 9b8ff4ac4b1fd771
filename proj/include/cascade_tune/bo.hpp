#pragma once

// Bayesian optimization over a gain grid with a lower-confidence-bound
// acquisition, and the two-stage speed-then-position tuning procedure.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"
#include "metrics.hpp"

namespace cascade_tune {

inline GainGrid speed_grid(double kv_step = 0.005, double ki_step = 10.0) {
    return GainGrid({GridAxis::spanning("K_v", kv_step, 0.5), GridAxis::spanning("K_i", ki_step, 900.0)});
}

inline GainGrid position_grid(double kp_step = 15.0) { return GainGrid({GridAxis::spanning("K_p", kp_step, 4200.0)}); }

struct BoConfig {
    std::size_t n_train = 30;
    std::size_t n_max = 60;  // iterations after the training phase
    double beta = 2.0;
    int repeat_threshold = 3;
    std::uint64_t seed = 0;
    int refit_every = 5;  // 0: fit once on the training set only
    bool reset_repeats_on_improvement = false;
    HyperparameterBounds bounds{};
    int hyper_starts = 8;

    void validate(const std::string& key = "bo") const {
        if (n_train < 1) throw std::invalid_argument(key + ".n_train must be at least 1");
        if (!(beta >= 0.0)) throw std::invalid_argument(key + ".beta must be nonnegative");
        if (repeat_threshold < 2) throw std::invalid_argument(key + ".repeat_threshold must be at least 2");
        if (refit_every < 0) throw std::invalid_argument(key + ".refit_every must be nonnegative");
        if (hyper_starts < 1) throw std::invalid_argument(key + ".hyper_starts must be at least 1");
        bounds.validate();
    }
};

enum class Termination { RepeatedIncumbent, MaxIterations };

inline std::string to_string(Termination t) {
    return t == Termination::RepeatedIncumbent ? "repeated_incumbent" : "max_iterations";
}

struct BoSample {
    std::size_t iteration = 0;  // 0 for training points, then 1..N_BO
    std::size_t node = 0;
    Point x;
    double cost = 0.0;
    double acquisition = std::numeric_limits<double>::quiet_NaN();  // NaN for training points
    std::size_t incumbent_node = 0;
    double incumbent_cost = 0.0;
};

struct BoResult {
    std::vector<BoSample> history;
    std::size_t incumbent_node = 0;
    Point incumbent;
    double incumbent_cost = std::numeric_limits<double>::infinity();
    std::size_t n_bo = 0;
    std::size_t evaluations = 0;  // distinct grid nodes evaluated
    Termination termination = Termination::MaxIterations;
};

class BoAborted : public std::runtime_error {
public:
    BoAborted(const std::string& what, BoResult partial) : std::runtime_error(what), partial_(std::move(partial)) {}
    [[nodiscard]] const BoResult& partial() const { return partial_; }

private:
    BoResult partial_;
};

inline double lcb(double mu, double sd, double beta) { return mu - beta * sd; }

struct Proposal {
    std::size_t node = 0;
    double acquisition = 0.0;
    double mean = 0.0;
    double sd = 0.0;
};

// Exhaustive acquisition scan. Ties go to the lower mean, then to the
// lexicographically first node.
inline Proposal propose_next(const GpModel& model, const GainGrid& grid, double beta) {
    const std::size_t n = grid.size();
    if (n == 0) throw std::invalid_argument("propose_next: empty grid");
    std::vector<Prediction> pred(n);
    parallel_for(n, [&](std::size_t i) { pred[i] = model.predict(grid.point(i)); });
    Proposal best{0, lcb(pred[0].mean, pred[0].sd(), beta), pred[0].mean, pred[0].sd()};
    for (std::size_t i = 1; i < n; ++i) {
        const double a = lcb(pred[i].mean, pred[i].sd(), beta);
        if (a < best.acquisition || (a == best.acquisition && pred[i].mean < best.mean))
            best = {i, a, pred[i].mean, pred[i].sd()};
    }
    return best;
}

namespace detail {

// Uniform integer in [0, n) by rejection; independent of the standard
// library's distribution implementation.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r < limit) return r % n;
    }
}

// k distinct nodes of [0, n) by a partial Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    if (k > n) throw std::invalid_argument("bo.n_train exceeds the number of grid nodes");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(bounded(rng, n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace detail

using BoObserver = std::function<void(const BoSample&)>;

// Training phase of n_train random nodes, then LCB proposals until the
// incumbent region has been proposed repeat_threshold times or n_max
// iterations have run. A proposal counts as a repeat when it lies within one
// grid cell of the incumbent it was proposed against. Repeats accumulate over
// the run unless reset_repeats_on_improvement is set.
inline BoResult bo_minimize(CachedObjective& objective, const BoConfig& cfg, const BoObserver& observe = {}) {
    cfg.validate();
    const GainGrid& grid = objective.grid();
    std::mt19937_64 rng(cfg.seed);
    BoResult res;

    std::vector<Point> X;
    std::vector<double> y;
    std::vector<char> in_model(grid.size(), 0);

    auto record = [&](std::size_t iteration, std::size_t node, double acquisition) {
        const double c = objective(node);
        if (c < res.incumbent_cost) {
            res.incumbent_cost = c;
            res.incumbent_node = node;
        }
        if (!in_model[node]) {
            in_model[node] = 1;
            X.push_back(grid.point(node));
            y.push_back(c);
            ++res.evaluations;
        }
        BoSample s{iteration, node, grid.point(node), c, acquisition, res.incumbent_node, res.incumbent_cost};
        res.history.push_back(s);
        if (observe) observe(s);
    };

    const auto train = detail::sample_without_replacement(grid.size(), cfg.n_train, rng);
    objective.prefetch(train);
    for (auto node : train) record(0, node, std::numeric_limits<double>::quiet_NaN());

    std::optional<KernelHyperparameters> hyper;
    bool fitted = false;
    int repeats = 0;
    res.termination = Termination::MaxIterations;
    for (std::size_t it = 1; it <= cfg.n_max; ++it) {
        std::optional<GpModel> model;
        try {
            if (!fitted || (cfg.refit_every > 0 && (it - 1) % static_cast<std::size_t>(cfg.refit_every) == 0)) {
                HyperparameterFitOptions fo;
                fo.starts = cfg.hyper_starts;
                fo.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * it);
                if (X.size() >= 2) {
                    model.emplace(GpModel::fit(grid.normalization(), X, y, cfg.bounds, fo));
                    fitted = true;
                } else {
                    KernelHyperparameters h;
                    h.length_scales.assign(grid.dims(), 0.2);
                    h.sigma_n = cfg.bounds.sigma_n.first;
                    model.emplace(grid.normalization(), X, y, h);
                }
                hyper = model->hyperparameters();
            } else {
                model.emplace(grid.normalization(), X, y, *hyper);
            }
        } catch (const GpFitError& e) {
            res.incumbent = grid.point(res.incumbent_node);
            throw BoAborted(std::string("GP fit failed: ") + e.what(), res);
        }

        const std::size_t incumbent_before = res.incumbent_node;
        const auto prop = propose_next(*model, grid, cfg.beta);
        record(it, prop.node, prop.acquisition);
        res.n_bo = it;

        if (cfg.reset_repeats_on_improvement && res.incumbent_node != incumbent_before) {
            repeats = 0;
        } else if (grid.adjacent(prop.node, incumbent_before) && ++repeats >= cfg.repeat_threshold) {
            res.termination = Termination::RepeatedIncumbent;
            break;
        }
    }
    res.incumbent = grid.point(res.incumbent_node);
    return res;
}

inline BoResult bo_minimize(const Objective& f, const GainGrid& grid, const BoConfig& cfg,
                            const BoObserver& observe = {}) {
    CachedObjective cached(grid, f);
    return bo_minimize(cached, cfg, observe);
}

// Speed-mode cost as a function of (K_v, K_i), current loop and K_p taken
// from `base`.
inline Objective speed_objective(const PlantParameters& p, const MotionCommand& cmd, const CostWeights& w,
                                 const ControllerGains& base = {}, const SimulationOptions& opts = {}) {
    return [=](const Point& x) {
        ControllerGains g = base;
        g.K_v = x.at(0);
        g.K_i = x.at(1);
        return speed_cost(simulate_closed_loop(p, g, cmd, OperatingMode::Speed, opts), w);
    };
}

// Position-mode cost as a function of K_p with the speed gains of `base`.
inline Objective position_objective(const PlantParameters& p, const MotionCommand& cmd, const CostWeights& w,
                                    const ControllerGains& base, const SimulationOptions& opts = {}) {
    return [=](const Point& x) {
        ControllerGains g = base;
        g.K_p = x.at(0);
        return position_cost(simulate_closed_loop(p, g, cmd, OperatingMode::Position, opts), w);
    };
}

struct SequentialResult {
    ControllerGains gains;
    BoResult speed;
    BoResult position;
};

struct SequentialTuneSetup {
    GainGrid speed = speed_grid();
    GainGrid position = position_grid();
    ControllerGains base{};  // supplies the current-loop gains
    SimulationOptions sim{};
};

// Stage one tunes (K_v, K_i) in speed mode; stage two tunes K_p in position
// mode with the stage-one gains frozen.
inline SequentialResult sequential_tune(const PlantParameters& p, const MotionCommand& cmd, const CostWeights& w,
                                        const BoConfig& cfg_speed, const BoConfig& cfg_pos,
                                        const SequentialTuneSetup& setup = {}, const BoObserver& observe_speed = {},
                                        const BoObserver& observe_pos = {}) {
    cfg_speed.validate("bo.speed");
    cfg_pos.validate("bo.position");
    SequentialResult out;
    CachedObjective f_speed(setup.speed, speed_objective(p, cmd, w, setup.base, setup.sim));
    out.speed = bo_minimize(f_speed, cfg_speed, observe_speed);

    ControllerGains g = setup.base;
    g.K_v = out.speed.incumbent.at(0);
    g.K_i = out.speed.incumbent.at(1);
    CachedObjective f_pos(setup.position, position_objective(p, cmd, w, g, setup.sim));
    out.position = bo_minimize(f_pos, cfg_pos, observe_pos);
    g.K_p = out.position.incumbent.at(0);
    out.gains = g;
    return out;
}

}  // namespace cascade_tune
