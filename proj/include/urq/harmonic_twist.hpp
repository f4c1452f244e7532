#pragma once

// Harmonic functions of the free processes, their h-transforms (twisted
// kernels), the stationary law of the Markovian part of the twisted process
// and its horizontal drift.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "urq/core.hpp"
#include "urq/kernels.hpp"
#include "urq/spectral.hpp"

namespace urq {

/// h(x,U) = base^x, h(x,D) = base^x * down_weight for Model 1;
/// h(x,y,s) = base^(x+y) * weight(s) for Model 2. h(0,U) = 1.
struct HarmonicFunction {
    Model model = Model::Model1;
    double base = 1.0;        ///< 1/gamma_p
    double up_weight = 1.0;
    double down_weight = 1.0;

    std::int64_t exponent(const State& s) const noexcept {
        return model == Model::Model1 ? s.x : s.x + s.y;
    }
    double weight(ServerStatus s) const noexcept { return s == ServerStatus::Up ? up_weight : down_weight; }

    double operator()(const State& s) const noexcept {
        return std::pow(base, static_cast<double>(exponent(s))) * weight(s.status);
    }

    /// h(to) / h(from), without forming either value.
    double ratio(const State& from, const State& to) const noexcept {
        const auto dz = exponent(to) - exponent(from);
        return std::pow(base, static_cast<double>(dz)) * weight(to.status) / weight(from.status);
    }
};

namespace detail {
inline void require_stable(const ModelParams& params) {
    if (!is_stable(params))
        throw Unstable("lambda >= beta/(alpha+beta)*mu*p: the harmonic function does not grow");
}
} // namespace detail

inline HarmonicFunction harmonic(const ModelParams& params, Model model) {
    if (model == Model::RsRd) throw Unsupported("the RS-RD network has no free process");
    validate(params, model);
    detail::require_stable(params);
    const auto spec = characteristic_roots(params);
    HarmonicFunction h;
    h.model = model;
    h.base = spec.t2;
    h.down_weight = 2.0 * params.beta / detail::twist_gap(params, std::sqrt(spec.s_p));
    return h;
}

/// Row of the twisted free process: K(a,b) h(b) / h(a).
inline TransitionRow twisted_kernel(const ModelParams& params, Model model, const State& state,
                                    const HarmonicFunction& h) {
    const TransitionRow free_row = free_kernel(params, model, state);
    TransitionRow row(free_row.origin());
    for (const auto& t : free_row) row.add(t.to, t.prob * h.ratio(free_row.origin(), t.to));
    return row;
}

inline TransitionRow twisted_kernel(const ModelParams& params, Model model, const State& state) {
    return twisted_kernel(params, model, state, harmonic(params, model));
}

/// Twisted rates of the tandem (Model 2, p = 1), per uniformized step.
struct TwistRates {
    double lambda_t = 0.0; ///< y -> y+1
    double mu_t = 0.0;     ///< server-2 completion, = mu/C
    double alpha_t = 0.0;  ///< U -> D
    double beta_t = 0.0;   ///< D -> U
    double B = 0.0;        ///< 1 - lambda_t/mu_t
};

namespace detail {

/// Twisted Model 1 moves at level 0 (identical for every level).
struct Model1Twist {
    double right = 0.0;   ///< x -> x+1, both phases
    double left = 0.0;    ///< x -> x-1, phase U
    double up_down = 0.0; ///< U -> D
    double down_up = 0.0; ///< D -> U
};

inline Model1Twist model1_twist(const ModelParams& pr) {
    const auto spec = characteristic_roots(pr);
    const double sq = std::sqrt(spec.s_p);
    const double gap = twist_gap(pr, sq);
    const double sum_minus = 2.0 * pr.lambda * spec.t2; // lambda+beta+mu+alpha - sqrt(s1)
    Model1Twist tw;
    tw.right = sum_minus / (2.0 * pr.C);
    tw.left = 2.0 * pr.lambda * pr.mu / (pr.C * sum_minus);
    tw.up_down = 2.0 * pr.alpha * pr.beta / (pr.C * gap);
    tw.down_up = gap / (2.0 * pr.C);
    return tw;
}

inline void require_unit_p(const ModelParams& params, const char* what) {
    if (params.p != 1.0) throw Unsupported(std::string(what) + " is only defined for p = 1");
}

} // namespace detail

inline TwistRates model2_twist_rates(const ModelParams& params) {
    detail::require_unit_p(params, "the twisted tandem");
    validate(params, Model::Model2);
    detail::require_stable(params);
    const auto tw = detail::model1_twist(params);
    TwistRates r;
    r.lambda_t = tw.right;
    r.mu_t = params.mu / params.C;
    r.alpha_t = tw.up_down;
    r.beta_t = tw.down_up;
    r.B = 1.0 - r.lambda_t / r.mu_t;
    return r;
}

/// Product-form stationary law of the twisted tandem's Markovian part (y, s):
/// phi(y,U) = B rho^y beta'/(alpha'+beta'), phi(y,D) = B rho^y alpha'/(alpha'+beta').
struct ProductFormPhi {
    double B = 0.0;
    double ratio = 0.0;      ///< lambda'/mu'
    double up_share = 0.0;   ///< beta'/(alpha'+beta')
    double down_share = 0.0; ///< alpha'/(alpha'+beta')

    double operator()(std::int64_t y, ServerStatus s) const noexcept {
        if (y < 0) return 0.0;
        return B * std::pow(ratio, static_cast<double>(y)) * (s == ServerStatus::Up ? up_share : down_share);
    }
    /// Mass of {y > y_max}.
    double tail_mass(std::int64_t y_max) const noexcept { return std::pow(ratio, static_cast<double>(y_max + 1)); }
};

struct PhiEntry {
    std::int64_t y = 0;
    ServerStatus status = ServerStatus::Up;
    double prob = 0.0;
};

/// Stationary law of the Markovian part. Model 1 has two atoms; Model 2
/// (p = 1) has the product form, also tabulated up to table_y_max.
struct MarkovPartStationary {
    Model model = Model::Model1;
    double up = 0.0;   ///< Model 1 phi(U), or the Model 2 U-marginal
    double down = 0.0; ///< Model 1 phi(D), or the Model 2 D-marginal
    std::optional<ProductFormPhi> product;
    std::vector<PhiEntry> table;
    std::int64_t table_y_max = 0;
    double table_tail_mass = 0.0;
};

inline constexpr std::int64_t kDefaultPhiYMax = 200;

inline MarkovPartStationary markov_part_stationary(const ModelParams& params, Model model,
                                                   std::int64_t table_y_max = kDefaultPhiYMax) {
    if (model == Model::RsRd) throw Unsupported("the RS-RD network has no twisted process");
    detail::require_unit_p(params, "the Markovian-part stationary law");
    validate(params, model);
    detail::require_stable(params);
    const auto spec = characteristic_roots(params);
    const double G = *spec.g_constant;
    const double gap = detail::twist_gap(params, std::sqrt(spec.s_p));
    MarkovPartStationary out;
    out.model = model;
    out.up = 0.5 * gap / G;
    out.down = 2.0 * params.alpha * params.beta / gap / G;
    if (model == Model::Model2) {
        const auto r = model2_twist_rates(params);
        ProductFormPhi phi;
        phi.B = r.B;
        phi.ratio = r.lambda_t / r.mu_t;
        phi.up_share = r.beta_t / (r.alpha_t + r.beta_t);
        phi.down_share = r.alpha_t / (r.alpha_t + r.beta_t);
        out.product = phi;
        out.table_y_max = table_y_max;
        out.table.reserve(static_cast<std::size_t>(2 * (table_y_max + 1)));
        for (std::int64_t y = 0; y <= table_y_max; ++y)
            for (auto s : {ServerStatus::Up, ServerStatus::Down}) out.table.push_back({y, s, phi(y, s)});
        out.table_tail_mass = phi.tail_mass(table_y_max);
    }
    return out;
}

/// Horizontal drift of the twisted free process per uniformized step, by the
/// closed formula and by averaging the mean x-increment of the twisted rows
/// against phi. The two must agree within 1e-10.
struct DriftReport {
    double closed_form = 0.0;
    double phi_weighted = 0.0;
    double C = 0.0;

    double per_time() const noexcept { return closed_form * C; }
};

namespace detail {

inline double mean_increment(const TransitionRow& row) noexcept {
    double m = 0.0;
    for (const auto& t : row) m += t.prob * static_cast<double>(t.to.x - row.origin().x);
    return m;
}

/// Closed-form drift of the twisted Model 1 process.
inline double drift_model1_closed(const ModelParams& pr) {
    const auto spec = characteristic_roots(pr);
    const double sum_minus = 2.0 * pr.lambda * spec.t2;
    const double gap = twist_gap(pr, std::sqrt(spec.s_p));
    return (0.5 * sum_minus - pr.lambda * pr.mu * gap / (*spec.g_constant * sum_minus)) / pr.C;
}

/// Closed-form drift of the twisted tandem.
inline double drift_model2_closed(const ModelParams& pr) {
    const auto spec = characteristic_roots(pr);
    const double sum_minus = 2.0 * pr.lambda * spec.t2;
    const double gap = twist_gap(pr, std::sqrt(spec.s_p));
    const double gap2 = gap * gap;
    return (0.5 * sum_minus -
            2.0 * pr.lambda * pr.mu * gap2 / (sum_minus * (4.0 * pr.alpha * pr.beta + gap2))) /
           pr.C;
}

} // namespace detail

inline DriftReport horizontal_drift(const ModelParams& params, Model model) {
    if (model == Model::RsRd) throw Unsupported("the RS-RD network has no twisted process");
    detail::require_unit_p(params, "the horizontal drift");
    validate(params, model);
    detail::require_stable(params);
    const auto h = harmonic(params, model);
    const auto phi = markov_part_stationary(params, model, 0);
    DriftReport d;
    d.C = params.C;
    if (model == Model::Model1) {
        d.closed_form = detail::drift_model1_closed(params);
        d.phi_weighted =
            phi.up * detail::mean_increment(twisted_kernel(params, model, state1(0, ServerStatus::Up), h)) +
            phi.down * detail::mean_increment(twisted_kernel(params, model, state1(0, ServerStatus::Down), h));
    } else {
        d.closed_form = detail::drift_model2_closed(params);
        const auto& pf = *phi.product;
        // rows are identical for every y >= 1, so sum until the remaining
        // phi mass is below double resolution and add the tail in one piece
        double acc = 0.0;
        std::int64_t y = 0;
        double inc_up = 0.0;
        double inc_down = 0.0;
        for (; y <= 2; ++y) {
            inc_up = detail::mean_increment(twisted_kernel(params, model, state2(0, y, ServerStatus::Up), h));
            inc_down = detail::mean_increment(twisted_kernel(params, model, state2(0, y, ServerStatus::Down), h));
            acc += pf(y, ServerStatus::Up) * inc_up + pf(y, ServerStatus::Down) * inc_down;
        }
        const double tail = pf.tail_mass(2);
        acc += tail * (pf.up_share * inc_up + pf.down_share * inc_down);
        d.phi_weighted = acc;
    }
    if (std::abs(d.closed_form - d.phi_weighted) > 1e-10)
        throw NumericalError("horizontal drift: closed form and phi-weighted increments disagree");
    if (!(d.closed_form > 0.0))
        throw NumericalError("twisted process has nonpositive horizontal drift");
    return d;
}

/// Everything the h-transform produces for one parameter set.
struct TwistSummary {
    Model model = Model::Model1;
    HarmonicFunction harmonic;
    std::optional<TwistRates> rates; ///< Model 2 only
    MarkovPartStationary phi;
    DriftReport drift;
};

inline TwistSummary twist_summary(const ModelParams& params, Model model,
                                  std::int64_t table_y_max = kDefaultPhiYMax) {
    TwistSummary s;
    s.model = model;
    s.harmonic = harmonic(params, model);
    if (model == Model::Model2) s.rates = model2_twist_rates(params);
    s.phi = markov_part_stationary(params, model, table_y_max);
    s.drift = horizontal_drift(params, model);
    return s;
}

} // namespace urq
