#pragma once

// Least-squares estimate of the axial stiffness from a measured step response.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "control.hpp"

namespace cascade_tune {

struct StiffnessRange {
    double lower = 1e6;
    double upper = 1e9;
};

struct StiffnessFit {
    double K_s = 0.0;
    double residual = 0.0;  // sum of squared load-position deviations, m^2
    int evaluations = 0;
};

// Sum of squared deviations between the measured load position and the model
// response to the measured voltage sequence. The load position is used rather
// than the speed: the speed residual oscillates with the axial mode and has
// many local minima, the position residual has one basin.
inline double stiffness_residual(const SimulationTrace& measured, PlantParameters p, double k_s,
                                 PlantModel model = PlantModel::Approximated) {
    p.K_s = k_s;
    const auto sim = simulate_open_loop(p, measured.v_a, measured.dt, model);
    if (sim.failed()) return std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (std::size_t k = 0; k < measured.size(); ++k) {
        const double d = sim.pos[k] - measured.pos[k];
        acc += d * d;
    }
    return acc;
}

// Coarse log-spaced scan followed by golden-section refinement around the best
// scan node. A minimizer on the search boundary is returned exactly.
inline StiffnessFit fit_axial_stiffness(const SimulationTrace& measured, const PlantParameters& p_without_ks,
                                        const StiffnessRange& range, PlantModel model = PlantModel::Approximated,
                                        double rel_tol = 1e-3, int scan_points = 31) {
    if (measured.size() == 0 || measured.v_a.size() != measured.size())
        throw std::invalid_argument("fit_axial_stiffness: empty or inconsistent trace");
    if (!(range.lower > 0.0) || !(range.upper >= range.lower))
        throw std::invalid_argument("fit_axial_stiffness: search range must be positive");

    StiffnessFit fit;
    auto cost = [&](double log_ks) {
        ++fit.evaluations;
        return stiffness_residual(measured, p_without_ks, std::exp(log_ks), model);
    };

    const double lo = std::log(range.lower);
    const double hi = std::log(range.upper);
    if (hi == lo) {
        fit.K_s = range.lower;
        fit.residual = cost(lo);
        return fit;
    }
    scan_points = std::max(scan_points, 3);
    const double h = (hi - lo) / (scan_points - 1);
    int best_node = 0;
    double best_scan = std::numeric_limits<double>::infinity();
    for (int i = 0; i < scan_points; ++i) {
        const double f = cost(lo + h * i);
        if (f < best_scan) {
            best_scan = f;
            best_node = i;
        }
    }
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo + h * std::max(best_node - 1, 0);
    double b = lo + h * std::min(best_node + 1, scan_points - 1);
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = cost(c);
    double fd = cost(d);
    const double tol = std::log1p(rel_tol);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = cost(d);
        }
    }

    std::pair<double, double> best{0.5 * (a + b), cost(0.5 * (a + b))};
    if (best_scan <= best.second) best = {lo + h * best_node, best_scan};
    fit.K_s = std::exp(best.first);
    if (best.first == lo) fit.K_s = range.lower;
    if (best.first == hi) fit.K_s = range.upper;
    fit.residual = best.second;
    return fit;
}

// Open-loop voltage step of `volts` held for `duration` seconds.
inline SimulationTrace voltage_step_trace(const PlantParameters& p, double volts, double duration, double dt,
                                          PlantModel model = PlantModel::Approximated) {
    const auto n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
    return simulate_open_loop(p, std::vector<double>(n, volts), dt, model);
}

}  // namespace cascade_tune
