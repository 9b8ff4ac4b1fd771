#pragma once

// Gaussian-process regression with a squared-exponential kernel and
// diagonal length-scale matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace cascade_tune {

using Point = std::vector<double>;

struct KernelHyperparameters {
    double sigma_f = 1.0;
    std::vector<double> length_scales{1.0};
    double sigma_n = 1e-3;

    void validate(std::size_t dims) const {
        if (length_scales.size() != dims) throw std::invalid_argument("kernel: length scale count mismatch");
        if (!(sigma_f > 0.0)) throw std::invalid_argument("kernel: sigma_f must be positive");
        if (!(sigma_n >= 0.0)) throw std::invalid_argument("kernel: sigma_n must be nonnegative");
        for (double l : length_scales)
            if (!(l > 0.0)) throw std::invalid_argument("kernel: length scales must be positive");
    }
};

// sigma_f^2 exp(-1/2 sum_j (x_j - x'_j)^2 / l_j^2)
inline double se_kernel(std::span<const double> x, std::span<const double> xp, const KernelHyperparameters& h) {
    if (x.size() != xp.size() || x.size() != h.length_scales.size())
        throw std::invalid_argument("se_kernel: dimension mismatch");
    double r2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = (x[j] - xp[j]) / h.length_scales[j];
        r2 += d * d;
    }
    return h.sigma_f * h.sigma_f * std::exp(-0.5 * r2);
}

inline Eigen::MatrixXd gram(const std::vector<Point>& X, const KernelHyperparameters& h) {
    const auto n = static_cast<Eigen::Index>(X.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = se_kernel(X[static_cast<std::size_t>(i)], X[static_cast<std::size_t>(i)], h);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double k = se_kernel(X[static_cast<std::size_t>(i)], X[static_cast<std::size_t>(j)], h);
            K(i, j) = k;
            K(j, i) = k;
        }
    }
    return K;
}

class GpFitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Cholesky factor of K + sigma_n^2 I with escalating diagonal jitter.
struct CovarianceFactor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

inline CovarianceFactor factorize_covariance(const Eigen::MatrixXd& K, const KernelHyperparameters& h) {
    const double signal = h.sigma_f * h.sigma_f;
    const auto n = K.rows();
    Eigen::MatrixXd C = K;
    C.diagonal().array() += h.sigma_n * h.sigma_n;
    CovarianceFactor f;
    f.llt.compute(C);
    if (f.llt.info() == Eigen::Success) return f;
    for (double rel = 1e-10; rel <= 1e-6 * (1.0 + 1e-9); rel *= 10.0) {
        Eigen::MatrixXd Cj = C;
        Cj.diagonal().array() += rel * signal;
        f.llt.compute(Cj);
        if (f.llt.info() == Eigen::Success) {
            f.jitter = rel * signal;
            return f;
        }
    }
    (void)n;
    throw GpFitError("covariance matrix not positive definite after maximum jitter");
}

inline double nlml(const std::vector<Point>& X, const Eigen::VectorXd& y, const KernelHyperparameters& h) {
    if (static_cast<Eigen::Index>(X.size()) != y.size()) throw std::invalid_argument("nlml: size mismatch");
    const auto n = static_cast<double>(X.size());
    if (X.empty()) return 0.0;
    const auto f = factorize_covariance(gram(X, h), h);
    const Eigen::VectorXd alpha = f.llt.solve(y);
    const Eigen::MatrixXd L = f.llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    return 0.5 * y.dot(alpha) + 0.5 * log_det + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct HyperparameterBounds {
    std::pair<double, double> sigma_f{0.05, 10.0};
    std::pair<double, double> length_scale{0.02, 5.0};
    // The objectives are deterministic, so the noise term is only a nugget
    // for model misfit; a looser ceiling lets it absorb shallow valleys.
    std::pair<double, double> sigma_n{1e-4, 1e-2};

    void validate() const {
        for (const auto& [lo, hi] : {sigma_f, length_scale, sigma_n})
            if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("hyperparameter bounds must be positive");
    }
};

struct HyperparameterFitOptions {
    int starts = 8;
    double tolerance = 1e-6;  // stop when a sweep improves nlml by less
    double min_step = 1e-3;   // log-space step below which a start ends
    int max_evaluations = 600;  // per start
    std::uint64_t seed = 0;
};

// Multi-start coordinate search in log-parameter space. The first start is the
// center of the box; the rest are seeded uniform draws.
inline KernelHyperparameters fit_hyperparameters(const std::vector<Point>& X, const Eigen::VectorXd& y,
                                                 const HyperparameterBounds& bounds,
                                                 const HyperparameterFitOptions& opts = {}) {
    if (X.size() < 2) throw std::invalid_argument("fit_hyperparameters: need at least two points");
    bounds.validate();
    const std::size_t d = X.front().size();
    const std::size_t np = d + 2;  // log sigma_f, log l_1..l_d, log sigma_n

    std::vector<double> lo(np), hi(np);
    lo[0] = std::log(bounds.sigma_f.first);
    hi[0] = std::log(bounds.sigma_f.second);
    for (std::size_t j = 0; j < d; ++j) {
        lo[1 + j] = std::log(bounds.length_scale.first);
        hi[1 + j] = std::log(bounds.length_scale.second);
    }
    lo[np - 1] = std::log(bounds.sigma_n.first);
    hi[np - 1] = std::log(bounds.sigma_n.second);

    auto unpack = [&](const std::vector<double>& t) {
        KernelHyperparameters h;
        h.sigma_f = std::exp(t[0]);
        h.length_scales.resize(d);
        for (std::size_t j = 0; j < d; ++j) h.length_scales[j] = std::exp(t[1 + j]);
        h.sigma_n = std::exp(t[np - 1]);
        return h;
    };
    auto objective = [&](const std::vector<double>& t) {
        try {
            const double v = nlml(X, y, unpack(t));
            return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        } catch (const GpFitError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> best_theta;
    double best_value = std::numeric_limits<double>::infinity();

    for (int s = 0; s < opts.starts; ++s) {
        std::vector<double> theta(np);
        for (std::size_t i = 0; i < np; ++i)
            theta[i] = s == 0 ? 0.5 * (lo[i] + hi[i]) : lo[i] + unit(rng) * (hi[i] - lo[i]);
        double value = objective(theta);
        int evals = 1;
        std::vector<double> step(np);
        for (std::size_t i = 0; i < np; ++i) step[i] = 0.25 * (hi[i] - lo[i]);

        while (evals < opts.max_evaluations) {
            const double sweep_start = value;
            bool moved = false;
            for (std::size_t i = 0; i < np && evals < opts.max_evaluations; ++i) {
                if (step[i] < opts.min_step) continue;
                for (double dir : {1.0, -1.0}) {
                    std::vector<double> trial = theta;
                    trial[i] = std::clamp(theta[i] + dir * step[i], lo[i], hi[i]);
                    if (trial[i] == theta[i]) continue;
                    const double v = objective(trial);
                    ++evals;
                    if (v < value) {
                        theta = std::move(trial);
                        value = v;
                        moved = true;
                        break;
                    }
                }
            }
            if (!moved) {
                bool any = false;
                for (double& st : step) {
                    st *= 0.5;
                    any = any || st >= opts.min_step;
                }
                if (!any) break;
            } else if (std::isfinite(sweep_start) && sweep_start - value < opts.tolerance) {
                break;
            }
        }
        if (value < best_value) {
            best_value = value;
            best_theta = theta;
        }
    }
    if (best_theta.empty()) throw GpFitError("hyperparameter fit failed: no start could factorize");
    return unpack(best_theta);
}

// Affine map of each input dimension onto [0, 1].
struct InputNormalization {
    std::vector<double> lower;
    std::vector<double> upper;

    [[nodiscard]] Point apply(std::span<const double> x) const {
        Point out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double span = upper[j] - lower[j];
            out[j] = span > 0.0 ? (x[j] - lower[j]) / span : 0.0;
        }
        return out;
    }
};

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
    [[nodiscard]] double sd() const { return std::sqrt(variance); }
};

// Zero-mean GP posterior conditioned on (X, y) in whatever coordinates X is
// given. Immutable once built.
class GpPosterior {
public:
    GpPosterior(std::vector<Point> X, Eigen::VectorXd y, KernelHyperparameters h)
        : X_(std::move(X)), y_(std::move(y)), h_(std::move(h)) {
        if (static_cast<Eigen::Index>(X_.size()) != y_.size())
            throw std::invalid_argument("GpPosterior: size mismatch");
        if (!X_.empty()) {
            h_.validate(X_.front().size());
            auto f = factorize_covariance(gram(X_, h_), h_);
            jitter_ = f.jitter;
            L_ = f.llt.matrixL();
            alpha_ = f.llt.solve(y_);
        }
    }

    [[nodiscard]] Prediction predict(std::span<const double> x) const {
        const double prior = se_kernel(x, x, h_);
        if (X_.empty()) return {0.0, prior};
        const auto n = static_cast<Eigen::Index>(X_.size());
        Eigen::VectorXd k(n);
        for (Eigen::Index i = 0; i < n; ++i) k(i) = se_kernel(x, X_[static_cast<std::size_t>(i)], h_);
        const double mean = k.dot(alpha_);
        const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
        return {mean, std::max(0.0, prior - v.squaredNorm())};
    }

    [[nodiscard]] const std::vector<Point>& inputs() const { return X_; }
    [[nodiscard]] const Eigen::VectorXd& targets() const { return y_; }
    [[nodiscard]] const KernelHyperparameters& hyperparameters() const { return h_; }
    [[nodiscard]] double jitter() const { return jitter_; }

private:
    std::vector<Point> X_;
    Eigen::VectorXd y_;
    KernelHyperparameters h_;
    Eigen::MatrixXd L_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

inline Prediction posterior(const GpPosterior& model, std::span<const double> x) { return model.predict(x); }

// GP over raw inputs: inputs normalized onto the unit box, targets
// standardized to zero mean and unit variance; predictions are returned in
// raw target units.
class GpModel {
public:
    GpModel(InputNormalization norm, const std::vector<Point>& X_raw, const std::vector<double>& y_raw,
            KernelHyperparameters h)
        : norm_(std::move(norm)), posterior_(build(X_raw, y_raw, std::move(h))) {}

    // Fits hyperparameters by NLML minimization before conditioning.
    static GpModel fit(InputNormalization norm, const std::vector<Point>& X_raw, const std::vector<double>& y_raw,
                       const HyperparameterBounds& bounds, const HyperparameterFitOptions& opts = {}) {
        auto [X, y, mean, scale] = standardize(norm, X_raw, y_raw);
        (void)mean;
        (void)scale;
        return {std::move(norm), X_raw, y_raw, fit_hyperparameters(X, y, bounds, opts)};
    }

    [[nodiscard]] Prediction predict(std::span<const double> x_raw) const {
        const auto p = posterior_.predict(norm_.apply(x_raw));
        return {mean_ + scale_ * p.mean, scale_ * scale_ * p.variance};
    }

    [[nodiscard]] const KernelHyperparameters& hyperparameters() const { return posterior_.hyperparameters(); }
    [[nodiscard]] const InputNormalization& normalization() const { return norm_; }
    [[nodiscard]] std::size_t size() const { return posterior_.inputs().size(); }
    [[nodiscard]] double target_mean() const { return mean_; }
    [[nodiscard]] double target_scale() const { return scale_; }

    // Training set and hyperparameters, for inspection and fixtures.
    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["normalization"] = {{"lower", norm_.lower}, {"upper", norm_.upper}};
        j["target"] = {{"mean", mean_}, {"scale", scale_}};
        const auto& h = posterior_.hyperparameters();
        j["hyperparameters"] = {{"sigma_f", h.sigma_f}, {"length_scales", h.length_scales}, {"sigma_n", h.sigma_n}};
        j["jitter"] = posterior_.jitter();
        nlohmann::json pts = nlohmann::json::array();
        for (std::size_t i = 0; i < posterior_.inputs().size(); ++i)
            pts.push_back({{"x", posterior_.inputs()[i]}, {"y", posterior_.targets()(static_cast<Eigen::Index>(i))}});
        j["training_set_normalized"] = pts;
        return j;
    }

private:
    struct Standardized {
        std::vector<Point> X;
        Eigen::VectorXd y;
        double mean;
        double scale;
    };

    static Standardized standardize(const InputNormalization& norm, const std::vector<Point>& X_raw,
                                    const std::vector<double>& y_raw) {
        if (X_raw.size() != y_raw.size()) throw std::invalid_argument("GpModel: size mismatch");
        Standardized s{{}, Eigen::VectorXd(static_cast<Eigen::Index>(y_raw.size())), 0.0, 1.0};
        for (const auto& x : X_raw) s.X.push_back(norm.apply(x));
        if (!y_raw.empty()) {
            double m = 0.0;
            for (double v : y_raw) m += v;
            m /= static_cast<double>(y_raw.size());
            double var = 0.0;
            for (double v : y_raw) var += (v - m) * (v - m);
            var /= static_cast<double>(y_raw.size());
            s.mean = m;
            s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        for (std::size_t i = 0; i < y_raw.size(); ++i)
            s.y(static_cast<Eigen::Index>(i)) = (y_raw[i] - s.mean) / s.scale;
        return s;
    }

    GpPosterior build(const std::vector<Point>& X_raw, const std::vector<double>& y_raw, KernelHyperparameters h) {
        auto s = standardize(norm_, X_raw, y_raw);
        mean_ = s.mean;
        scale_ = s.scale;
        return {std::move(s.X), std::move(s.y), std::move(h)};
    }

    InputNormalization norm_;
    double mean_ = 0.0;
    double scale_ = 1.0;
    GpPosterior posterior_;
};

}  // namespace cascade_tune
