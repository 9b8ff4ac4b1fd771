#pragma once

// Seeded generators for the property tests. Each test owns its generator, so
// a failure reproduces from the seed printed by the assertion.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "cascade_tune/gp.hpp"

namespace gen {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        // 53 random mantissa bits; stable across standard library versions.
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    // Box-Muller, one draw per call.
    double normal() {
        const double u1 = uniform(0x1.0p-53, 1.0);
        const double u2 = uniform(0.0, 1.0);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline std::vector<cascade_tune::Point> points(Rng& r, std::size_t n, std::size_t dims) {
    std::vector<cascade_tune::Point> X(n, cascade_tune::Point(dims));
    for (auto& x : X)
        for (auto& v : x) v = r.uniform(0.0, 1.0);
    return X;
}

inline Eigen::VectorXd targets(Rng& r, std::size_t n, double scale = 1.0) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = scale * r.uniform(-1.0, 1.0);
    return y;
}

inline cascade_tune::KernelHyperparameters hyper(Rng& r, std::size_t dims, double sigma_n_lo = 1e-3) {
    cascade_tune::KernelHyperparameters h;
    h.sigma_f = r.log_uniform(0.3, 3.0);
    h.length_scales.resize(dims);
    for (auto& l : h.length_scales) l = r.log_uniform(0.1, 1.0);
    h.sigma_n = r.log_uniform(sigma_n_lo, 0.3);
    return h;
}

// Smallest pairwise Euclidean distance.
inline double min_separation(const std::vector<cascade_tune::Point>& X) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < X[i].size(); ++k) d2 += (X[i][k] - X[j][k]) * (X[i][k] - X[j][k]);
            best = std::min(best, std::sqrt(d2));
        }
    return best;
}

// Noise-free interpolation instance: length scales tied to the point
// separation so the Gram matrix stays numerically nonsingular.
inline cascade_tune::KernelHyperparameters interpolating(Rng& r, const std::vector<cascade_tune::Point>& X) {
    cascade_tune::KernelHyperparameters h;
    h.sigma_f = r.log_uniform(0.3, 3.0);
    const double sep = X.size() > 1 ? min_separation(X) : 1.0;
    h.length_scales.assign(X.front().size(), 0.0);
    for (auto& l : h.length_scales) l = sep * r.uniform(0.5, 1.5);
    h.sigma_n = 0.0;
    return h;
}

}  // namespace gen
