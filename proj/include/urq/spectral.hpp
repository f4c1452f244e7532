#pragma once

// Decay rates of the stationary tail: the Feynman-Kac kernel of the free
// Model 1 process, the roots of its characteristic cubic, and the closed-form
// stability test.

#include <cmath>
#include <optional>

#include "urq/core.hpp"
#include "urq/matrix2.hpp"

namespace urq {

struct SpectralSolution {
    double p = 1.0;
    double s_p = 0.0;             ///< (mu p - lambda - beta - alpha)^2 + 4 alpha mu p
    double t1 = 0.0;              ///< larger root of the quadratic factor
    double t2 = 0.0;              ///< smaller root; 1/t2 is the decay rate
    double gamma_p = 0.0;         ///< 1 / t2
    double gamma_secondary = 0.0; ///< 1 / t1
    std::optional<double> g_constant; ///< defined for p = 1 only
    bool t2_valid = false;        ///< right side of the squared-root equation positive at t2
};

namespace detail {

/// lambda + beta - mu p - alpha + sqrt(s_p), evaluated without cancellation.
/// When mu p + alpha > lambda + beta the textbook form subtracts two nearly
/// equal numbers; multiplying through by the conjugate gives
/// 4 alpha (lambda + beta) / (sqrt(s_p) + mu p + alpha - lambda - beta).
inline double twist_gap(const ModelParams& pr, double sqrt_s) noexcept {
    const double excess = pr.mu * pr.p + pr.alpha - pr.lambda - pr.beta;
    if (excess > 0.0) return 4.0 * pr.alpha * (pr.lambda + pr.beta) / (sqrt_s + excess);
    return sqrt_s - excess;
}

inline double discriminant(const ModelParams& pr) noexcept {
    const double mp = pr.mu * pr.p;
    const double d = mp - pr.lambda - pr.beta - pr.alpha;
    return d * d + 4.0 * pr.alpha * mp;
}

} // namespace detail

/// W(t) = (t - 1) (lambda^2 t^2 - lambda (mu p + lambda + alpha + beta) t + mu p (lambda + beta)).
inline double characteristic_cubic(const ModelParams& pr, double t) noexcept {
    const double mp = pr.mu * pr.p;
    return (t - 1.0) * (pr.lambda * pr.lambda * t * t - pr.lambda * (mp + pr.lambda + pr.alpha + pr.beta) * t +
                        mp * (pr.lambda + pr.beta));
}

/// Sign test for a root t of the cubic: the squared equation only admits t
/// when 2 lambda t^2 - (alpha + beta + mu p + 2 lambda) t + mu p < 0.
inline double root_sign_test(const ModelParams& pr, double t) noexcept {
    const double mp = pr.mu * pr.p;
    return 2.0 * pr.lambda * t * t - (pr.alpha + pr.beta + mp + 2.0 * pr.lambda) * t + mp;
}

inline SpectralSolution characteristic_roots(const ModelParams& params) {
    const ModelParams& pr = validate_rates(params);
    const double mp = pr.mu * pr.p;
    SpectralSolution out;
    out.p = pr.p;
    out.s_p = detail::discriminant(pr);
    const double sq = std::sqrt(out.s_p);
    // larger root directly, smaller one from the product of the roots
    out.t1 = (mp + pr.lambda + pr.alpha + pr.beta + sq) / (2.0 * pr.lambda);
    out.t2 = mp * (pr.lambda + pr.beta) / (pr.lambda * pr.lambda * out.t1);
    out.gamma_p = 1.0 / out.t2;
    out.gamma_secondary = 1.0 / out.t1;
    if (pr.p == 1.0) {
        const double gap = detail::twist_gap(pr, sq);
        out.g_constant = 0.5 * gap + 2.0 * pr.alpha * pr.beta / gap;
    }
    out.t2_valid = root_sign_test(pr, out.t2) < 0.0;
    return out;
}

/// K_theta(s, s') = sum_z K((0,s),(z,s')) e^{theta z} for the free Model 1
/// process, with its Perron root.
struct FeynmanKac {
    Mat2 kernel;
    double largest = 0.0;
};

inline FeynmanKac feynman_kac(const ModelParams& params, double theta) {
    validate(params, Model::Model1);
    const auto& pr = params;
    const double C = pr.C;
    const double up = std::exp(theta);
    const double down = std::exp(-theta);
    FeynmanKac fk;
    fk.kernel = Mat2::of(pr.lambda / C * up + 1.0 - (pr.alpha + pr.mu + pr.lambda) / C + pr.mu / C * down,
                         pr.alpha / C, pr.beta / C, pr.lambda / C * up + 1.0 - (pr.lambda + pr.beta) / C);
    fk.largest = real_eigenvalues(fk.kernel).first;
    return fk;
}

struct StabilityVerdict {
    bool stable = false;
    double effective_rate = 0.0; ///< beta/(alpha+beta) * mu
    /// true for Model 1 and Model 2 with p = 1, where the condition is
    /// necessary and sufficient; for p < 1 it is only known to be sufficient.
    bool if_and_only_if = true;
};

inline StabilityVerdict stability(const ModelParams& params, Model model) {
    validate(params, model);
    StabilityVerdict v;
    v.effective_rate = effective_service_rate(params);
    v.stable = params.lambda < params.beta / (params.alpha + params.beta) * params.mu * params.p;
    v.if_and_only_if = model == Model::Model1 || params.p == 1.0;
    return v;
}

inline bool is_stable(const ModelParams& params) noexcept {
    return params.lambda < params.beta / (params.alpha + params.beta) * params.mu * params.p;
}

} // namespace urq
