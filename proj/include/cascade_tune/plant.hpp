#pragma once

// Motor + ball-screw plant: transfer-function builders, state-space
// realization and exact zero-order-hold simulation primitives.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace cascade_tune {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double rpm_to_rad_per_s(double rpm) { return rpm * kTwoPi / 60.0; }

// Electrical and mechanical constants of the axis. SI units throughout;
// L_a and B_m are taken as henry and N*m*s/rad.
struct PlantParameters {
    double R_a = 9.02;       // ohm
    double L_a = 0.0187;     // H
    double K_t = 0.515;      // N*m/A
    double K_b = 0.55;       // V*s/rad
    double J_m = 0.27e-4;    // kg*m^2
    double B_m = 0.0074;     // N*m*s/rad
    double J_l = 6.53e-4;    // kg*m^2
    double B_ml = 0.014;     // N*m*s/rad
    double B_l = 0.0;        // N*m*s/rad
    double K_s = 3e7;        // N*m/rad
    double Q = 0.018;        // m per revolution
    double omega_max = rpm_to_rad_per_s(8000.0);  // rad/s

    // Linear travel per radian of screw rotation.
    [[nodiscard]] double lead_per_rad() const { return Q / kTwoPi; }

    // Throws std::invalid_argument naming the first offending field.
    void validate() const {
        const std::pair<const char*, double> positive[] = {
            {"R_a", R_a}, {"L_a", L_a}, {"K_t", K_t}, {"K_b", K_b}, {"J_m", J_m},
            {"J_l", J_l}, {"K_s", K_s}, {"Q", Q}, {"omega_max", omega_max}};
        for (const auto& [name, v] : positive) {
            if (!std::isfinite(v) || v <= 0.0)
                throw std::invalid_argument(std::string("plant.") + name + " must be positive");
        }
        const std::pair<const char*, double> nonneg[] = {{"B_m", B_m}, {"B_ml", B_ml}, {"B_l", B_l}};
        for (const auto& [name, v] : nonneg) {
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument(std::string("plant.") + name + " must be nonnegative");
        }
    }
};

namespace detail {

// Builders accept degenerate limits (L_a = 0, K_b = 0, J_l = 0, ...) as long as
// every value is finite and nonnegative.
inline void require_builder_params(const PlantParameters& p) {
    const double all[] = {p.R_a, p.L_a, p.K_t, p.K_b, p.J_m, p.B_m, p.J_l, p.B_ml, p.B_l, p.K_s};
    for (double v : all) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("plant parameters must be finite and nonnegative");
    }
}

}  // namespace detail

// Polynomials are stored with coefficients in descending powers of s.
using Polynomial = std::vector<double>;

inline Polynomial poly_trim(Polynomial p) {
    std::size_t lead = 0;
    while (lead + 1 < p.size() && p[lead] == 0.0) ++lead;
    p.erase(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(lead));
    if (p.empty()) p.push_back(0.0);
    return p;
}

inline Polynomial poly_mul(const Polynomial& a, const Polynomial& b) {
    Polynomial out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return poly_trim(std::move(out));
}

inline Polynomial poly_add(const Polynomial& a, const Polynomial& b) {
    const std::size_t n = std::max(a.size(), b.size());
    Polynomial out(n, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[n - a.size() + i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[n - b.size() + i] += b[i];
    return poly_trim(std::move(out));
}

inline Polynomial poly_scale(Polynomial a, double k) {
    for (double& c : a) c *= k;
    return poly_trim(std::move(a));
}

inline std::complex<double> poly_eval(const Polynomial& p, std::complex<double> s) {
    std::complex<double> acc = 0.0;
    for (double c : p) acc = acc * s + c;
    return acc;
}

inline std::vector<std::complex<double>> poly_roots(const Polynomial& raw) {
    const Polynomial p = poly_trim(raw);
    const auto n = static_cast<Eigen::Index>(p.size()) - 1;
    if (n <= 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) companion(0, j) = -p[static_cast<std::size_t>(j) + 1] / p[0];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    std::vector<std::complex<double>> roots;
    for (Eigen::Index i = 0; i < n; ++i) roots.push_back(es.eigenvalues()(i));
    return roots;
}

class TransferFunction {
public:
    TransferFunction(Polynomial numerator, Polynomial denominator)
        : num_(poly_trim(std::move(numerator))), den_(poly_trim(std::move(denominator))) {
        if (den_[0] == 0.0) throw std::invalid_argument("transfer function denominator is zero");
    }

    [[nodiscard]] const Polynomial& numerator() const { return num_; }
    [[nodiscard]] const Polynomial& denominator() const { return den_; }
    [[nodiscard]] std::size_t order() const { return den_.size() - 1; }
    [[nodiscard]] bool is_proper() const { return num_.size() <= den_.size(); }

    [[nodiscard]] std::complex<double> operator()(std::complex<double> s) const {
        return poly_eval(num_, s) / poly_eval(den_, s);
    }
    [[nodiscard]] double dc_gain() const { return num_.back() / den_.back(); }
    [[nodiscard]] std::vector<std::complex<double>> poles() const { return poly_roots(den_); }

    friend TransferFunction operator*(const TransferFunction& a, const TransferFunction& b) {
        return {poly_mul(a.num_, b.num_), poly_mul(a.den_, b.den_)};
    }

private:
    Polynomial num_;
    Polynomial den_;
};

// M(s) = Omega_m / V_a with the mechanical load replaced by the rigid-body
// approximation (J_m + J_l) s + B_m.
inline TransferFunction build_motor_tf(const PlantParameters& p) {
    detail::require_builder_params(p);
    const Polynomial electrical{p.L_a, p.R_a};
    const Polynomial mechanical{p.J_m + p.J_l, p.B_m};
    return {{p.K_t}, poly_add(poly_mul(electrical, mechanical), {p.K_t * p.K_b})};
}

// T2(s) = Omega_l / Omega_m of the axial spring-damper.
inline TransferFunction build_axial_tf(const PlantParameters& p) {
    detail::require_builder_params(p);
    return {{p.B_ml, p.K_s}, {p.J_l, p.B_l + p.B_ml, p.K_s}};
}

// G(s) = Omega_l / V_a, the product M(s) T2(s).
inline TransferFunction build_plant_tf(const PlantParameters& p) {
    return build_motor_tf(p) * build_axial_tf(p);
}

// det H(s) of the two-mass stiffness/damping matrix.
inline Polynomial two_mass_determinant(const PlantParameters& p) {
    const Polynomial h11{p.J_m, p.B_m + p.B_ml, p.K_s};
    const Polynomial h22{p.J_l, p.B_l + p.B_ml, p.K_s};
    const Polynomial h12{p.B_ml, p.K_s};
    return poly_add(poly_mul(h11, h22), poly_scale(poly_mul(h12, h12), -1.0));
}

// Unapproximated T1(s) = (J_l s^2 + B_ml s + K_s) / det H(s): motor angle per
// unit motor torque. Multiply by s for the motor-speed response.
inline TransferFunction build_two_mass_tf(const PlantParameters& p) {
    detail::require_builder_params(p);
    return {{p.J_l, p.B_l + p.B_ml, p.K_s}, two_mass_determinant(p)};
}

struct StateSpace {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;

    [[nodiscard]] Eigen::Index states() const { return A.rows(); }
    [[nodiscard]] Eigen::Index inputs() const { return B.cols(); }
    [[nodiscard]] Eigen::Index outputs() const { return C.rows(); }

    void check_dimensions() const {
        const auto n = A.rows();
        const auto m = D.cols();
        const auto q = D.rows();
        if (A.cols() != n || B.rows() != n || B.cols() != m || C.rows() != q || C.cols() != n)
            throw std::invalid_argument("state-space matrices have inconsistent dimensions");
    }

    // C (sI - A)^{-1} B + D
    [[nodiscard]] Eigen::MatrixXcd frequency_response(std::complex<double> s) const {
        const auto n = states();
        Eigen::MatrixXcd resolvent = s * Eigen::MatrixXcd::Identity(n, n) - A.cast<std::complex<double>>();
        Eigen::MatrixXcd g = D.cast<std::complex<double>>();
        if (n > 0)
            g += C.cast<std::complex<double>>() *
                 resolvent.partialPivLu().solve(B.cast<std::complex<double>>());
        return g;
    }
};

// Controllable canonical realization of a proper SISO transfer function.
inline StateSpace tf_to_state_space(const TransferFunction& tf) {
    if (!tf.is_proper()) throw std::invalid_argument("transfer function is improper");
    const Polynomial& den = tf.denominator();
    const auto n = static_cast<Eigen::Index>(tf.order());
    const double a0 = den[0];

    // Numerator padded to n + 1 coefficients and normalized by a0.
    std::vector<double> b(static_cast<std::size_t>(n) + 1, 0.0);
    const Polynomial& num = tf.numerator();
    for (std::size_t i = 0; i < num.size(); ++i) b[b.size() - num.size() + i] = num[i] / a0;

    StateSpace ss;
    ss.A = Eigen::MatrixXd::Zero(n, n);
    ss.B = Eigen::MatrixXd::Zero(n, 1);
    ss.C = Eigen::MatrixXd::Zero(1, n);
    ss.D = Eigen::MatrixXd::Constant(1, 1, b[0]);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double aj = den[static_cast<std::size_t>(j) + 1] / a0;
        ss.A(0, j) = -aj;
        ss.C(0, j) = b[static_cast<std::size_t>(j) + 1] - b[0] * aj;
    }
    for (Eigen::Index i = 1; i < n; ++i) ss.A(i, i - 1) = 1.0;
    if (n > 0) ss.B(0, 0) = 1.0;
    return ss;
}

struct DiscreteStateSpace {
    Eigen::MatrixXd Ad;
    Eigen::MatrixXd Bd;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;
    double dt = 0.0;
};

// Exact ZOH discretization through the exponential of the augmented matrix
// [[A, B], [0, 0]] * dt.
inline DiscreteStateSpace discretize_zoh(const StateSpace& ss, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
    ss.check_dimensions();
    if (!ss.A.allFinite() || !ss.B.allFinite() || !ss.C.allFinite() || !ss.D.allFinite())
        throw std::invalid_argument("state-space matrices contain non-finite entries");
    const auto n = ss.states();
    const auto m = ss.inputs();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = ss.A * dt;
    aug.topRightCorner(n, m) = ss.B * dt;
    Eigen::MatrixXd e = n + m > 0 ? Eigen::MatrixXd(aug.exp()) : aug;
    return {e.topLeftCorner(n, n), e.topRightCorner(n, m), ss.C, ss.D, dt};
}

struct StepResult {
    Eigen::VectorXd next;
    Eigen::VectorXd output;
};

inline StepResult step_state(const DiscreteStateSpace& dss, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u) {
    if (x.size() != dss.Ad.rows() || u.size() != dss.Bd.cols())
        throw std::invalid_argument("state or input dimension mismatch");
    return {dss.Ad * x + dss.Bd * u, dss.C * x + dss.D * u};
}

// Physical state layout of the simulated axis.
enum PlantStateIndex : Eigen::Index {
    kCurrent = 0,     // i_a
    kMotorSpeed = 1,  // omega_m
    kDeflection = 2,  // theta_m - theta_l
    kLoadSpeed = 3,   // omega_l
    kMotorAngle = 4,  // theta_m
    kPlantStates = 5,
};

enum PlantInputIndex : Eigen::Index { kVoltage = 0, kLoadTorque = 1, kPlantInputs = 2 };

enum PlantOutputIndex : Eigen::Index {
    kOutCurrent = 0,
    kOutMotorSpeed = 1,
    kOutMotorAngle = 2,
    kOutLoadSpeed = 3,
    kOutLoadAngle = 4,
    kPlantOutputs = 5,
};

enum class PlantModel {
    // Rigid-body motor dynamics driving the axial spring-damper (the
    // approximated voltage-to-load-speed model).
    Approximated,
    // Full two-mass dynamics with the spring reacting on the rotor.
    TwoMass,
};

inline StateSpace plant_state_space(const PlantParameters& p, PlantModel model = PlantModel::Approximated) {
    p.validate();
    StateSpace ss;
    ss.A = Eigen::MatrixXd::Zero(kPlantStates, kPlantStates);
    ss.B = Eigen::MatrixXd::Zero(kPlantStates, kPlantInputs);
    ss.C = Eigen::MatrixXd::Zero(kPlantOutputs, kPlantStates);
    ss.D = Eigen::MatrixXd::Zero(kPlantOutputs, kPlantInputs);
    auto& A = ss.A;

    A(kCurrent, kCurrent) = -p.R_a / p.L_a;
    A(kCurrent, kMotorSpeed) = -p.K_b / p.L_a;
    ss.B(kCurrent, kVoltage) = 1.0 / p.L_a;

    if (model == PlantModel::Approximated) {
        const double J = p.J_m + p.J_l;
        A(kMotorSpeed, kCurrent) = p.K_t / J;
        A(kMotorSpeed, kMotorSpeed) = -p.B_m / J;
    } else {
        A(kMotorSpeed, kCurrent) = p.K_t / p.J_m;
        A(kMotorSpeed, kMotorSpeed) = -(p.B_m + p.B_ml) / p.J_m;
        A(kMotorSpeed, kLoadSpeed) = p.B_ml / p.J_m;
        A(kMotorSpeed, kDeflection) = -p.K_s / p.J_m;
    }

    A(kDeflection, kMotorSpeed) = 1.0;
    A(kDeflection, kLoadSpeed) = -1.0;

    A(kLoadSpeed, kMotorSpeed) = p.B_ml / p.J_l;
    A(kLoadSpeed, kLoadSpeed) = -(p.B_ml + p.B_l) / p.J_l;
    A(kLoadSpeed, kDeflection) = p.K_s / p.J_l;
    ss.B(kLoadSpeed, kLoadTorque) = 1.0 / p.J_l;

    A(kMotorAngle, kMotorSpeed) = 1.0;

    ss.C(kOutCurrent, kCurrent) = 1.0;
    ss.C(kOutMotorSpeed, kMotorSpeed) = 1.0;
    ss.C(kOutMotorAngle, kMotorAngle) = 1.0;
    ss.C(kOutLoadSpeed, kLoadSpeed) = 1.0;
    ss.C(kOutLoadAngle, kMotorAngle) = 1.0;
    ss.C(kOutLoadAngle, kDeflection) = -1.0;
    return ss;
}

}  // namespace cascade_tune
