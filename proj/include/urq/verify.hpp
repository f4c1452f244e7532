#pragma once

// Random parameter grids and the invariant suite behind the `verify` command.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "urq/asymptotics.hpp"
#include "urq/core.hpp"
#include "urq/harmonic_twist.hpp"
#include "urq/kernels.hpp"
#include "urq/qbd.hpp"
#include "urq/rng.hpp"
#include "urq/spectral.hpp"

namespace urq {

enum class GridKind { Stable, Unstable, Mixed };

struct GridOptions {
    GridKind kind = GridKind::Stable;
    bool vary_p = false;          ///< draw p in [0.3, 1] for half the points
    Model model = Model::Model1;  ///< decides the uniformization bound
};

/// mu ~ U[1, 50], alpha log-uniform on [0.01, 5], beta log-uniform on
/// [0.1, 20], then lambda = load * beta mu p / (alpha + beta) with load in
/// [0.3, 0.95] (stable) or [1.05, 2] (unstable).
inline std::vector<ModelParams> sample_grid(std::int64_t n, std::uint64_t seed, GridOptions opts = {}) {
    Rng rng(seed);
    const auto log_uniform = [&](double lo, double hi) {
        return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
    };
    std::vector<ModelParams> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double mu = 1.0 + 49.0 * rng.uniform();
        const double alpha = log_uniform(0.01, 5.0);
        const double beta = log_uniform(0.1, 20.0);
        double p = 1.0;
        if (opts.vary_p && rng.uniform() < 0.5) p = 0.3 + 0.7 * rng.uniform();
        bool stable = opts.kind == GridKind::Stable;
        if (opts.kind == GridKind::Mixed) stable = rng.uniform() < 0.5;
        const double load = stable ? 0.3 + 0.65 * rng.uniform() : 1.05 + 0.95 * rng.uniform();
        const double lambda = load * beta * mu * p / (alpha + beta);
        out.push_back(make_params(lambda, mu, alpha, beta, p, opts.model));
    }
    return out;
}

struct PropertyResult {
    std::string name;
    bool passed = true;
    std::int64_t checked = 0;
    double worst = 0.0;     ///< largest violation measure seen
    double tolerance = 0.0;
    std::string detail;     ///< first failing case, if any
};

namespace detail {

class PropertyRecorder {
public:
    PropertyRecorder(std::string name, double tolerance) {
        r_.name = std::move(name);
        r_.tolerance = tolerance;
    }
    /// Records a measured violation; fails when it exceeds the tolerance.
    void measure(double value, const std::string& where) {
        ++r_.checked;
        if (!(value <= r_.tolerance)) {
            if (r_.passed) r_.detail = where + ": " + fmt(value);
            r_.passed = false;
        }
        if (std::isnan(value) || value > r_.worst) r_.worst = value;
    }
    void require(bool ok, const std::string& where) { measure(ok ? 0.0 : 1.0, where); }
    void fail(const std::string& where) {
        ++r_.checked;
        if (r_.passed) r_.detail = where;
        r_.passed = false;
    }
    PropertyResult result() const { return r_; }

private:
    static std::string fmt(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return buf;
    }
    PropertyResult r_;
};

inline std::string describe(const ModelParams& p) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "lambda=%.6g mu=%.6g alpha=%.6g beta=%.6g p=%.6g", p.lambda, p.mu, p.alpha,
                  p.beta, p.p);
    return buf;
}

inline double harmonic_residual(const ModelParams& params, Model model, std::int64_t radius) {
    const auto h = harmonic(params, model);
    double worst = 0.0;
    const std::int64_t y_hi = model == Model::Model1 ? 0 : radius;
    for (std::int64_t x = -radius; x <= radius; ++x)
        for (std::int64_t y = 0; y <= y_hi; ++y)
            for (auto s : {ServerStatus::Up, ServerStatus::Down}) {
                const State st{model, x, y, s};
                // relative residual, computed through ratios so that h never overflows
                double acc = 0.0;
                for (const auto& t : free_kernel(params, model, st)) acc += t.prob * h.ratio(st, t.to);
                worst = std::max(worst, std::abs(acc - 1.0));
            }
    return worst;
}

} // namespace detail

/// Max relative harmonicity residual |sum K h / h - 1| over |x| <= radius
/// (and 0 <= y <= radius for Model 2).
inline double harmonicity_residual(const ModelParams& params, Model model, std::int64_t radius = 20) {
    return detail::harmonic_residual(params, model, radius);
}

/// Runs every invariant on `grid` random points drawn from `seed`.
inline std::vector<PropertyResult> run_invariant_suite(std::int64_t grid, std::uint64_t seed) {
    using detail::describe;
    std::vector<PropertyResult> out;
    const auto stable1 = sample_grid(grid, seed, {GridKind::Stable, false, Model::Model1});
    const auto stable2 = sample_grid(grid, seed + 1, {GridKind::Stable, true, Model::Model2});
    const auto mixed = sample_grid(grid, seed + 2, {GridKind::Mixed, true, Model::Model2});

    {
        detail::PropertyRecorder rec("kernel rows are stochastic", 1e-12);
        for (const auto& p : stable2) {
            const std::string where = describe(p);
            for (std::int64_t x = 0; x <= 6; ++x)
                for (std::int64_t y = 0; y <= 6; ++y)
                    for (auto s : {ServerStatus::Up, ServerStatus::Down}) {
                        for (const auto& row : {full_kernel(p, Model::Model2, state2(x, y, s)),
                                                rs_rd_kernel(p, state2(x, y, s, Model::RsRd)),
                                                free_kernel(p, Model::Model2, state2(x - 3, y, s))}) {
                            double neg = 0.0;
                            for (const auto& t : row) neg = std::max(neg, -t.prob);
                            rec.measure(std::max(std::abs(row.sum() - 1.0), neg), where);
                        }
                    }
        }
        for (const auto& p : stable1)
            for (std::int64_t x = -6; x <= 6; ++x)
                for (auto s : {ServerStatus::Up, ServerStatus::Down}) {
                    rec.measure(std::abs(free_kernel(p, Model::Model1, state1(x, s)).sum() - 1.0), describe(p));
                    if (x >= 0) rec.measure(std::abs(full_kernel(p, Model::Model1, state1(x, s)).sum() - 1.0), describe(p));
                }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("free kernels are shift invariant", 0.0);
        for (const auto& p : stable2)
            for (std::int64_t shift : {-7, 3, 11})
                for (auto s : {ServerStatus::Up, ServerStatus::Down})
                    for (std::int64_t y = 0; y <= 2; ++y) {
                        const auto a = free_kernel(p, Model::Model2, state2(0, y, s));
                        const auto b = free_kernel(p, Model::Model2, state2(shift, y, s));
                        bool same = a.size() == b.size();
                        for (std::size_t i = 0; same && i < a.size(); ++i) {
                            const auto& ta = a.targets()[i];
                            const auto& tb = b.targets()[i];
                            same = ta.prob == tb.prob && tb.to.x - shift == ta.to.x && tb.to.y == ta.to.y &&
                                   tb.to.status == ta.to.status;
                        }
                        rec.require(same, describe(p));
                    }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("harmonic functions are harmonic", 1e-10);
        for (const auto& p : stable1) rec.measure(harmonicity_residual(p, Model::Model1), describe(p));
        for (const auto& p : stable2) rec.measure(harmonicity_residual(p, Model::Model2, 8), describe(p));
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("characteristic roots solve the cubic and order correctly", 1e-9);
        for (const auto& p : stable2) {
            const auto s = characteristic_roots(p);
            const double scale = p.lambda * p.lambda * s.t1 * s.t1 * std::abs(s.t1 - 1.0) + 1.0;
            rec.measure(std::abs(characteristic_cubic(p, s.t1)) / scale, describe(p));
            const double scale2 = p.mu * p.p * (p.lambda + p.beta) * std::abs(s.t2 - 1.0) + 1e-300;
            rec.measure(std::abs(characteristic_cubic(p, s.t2)) / scale2, describe(p));
            rec.require(s.t1 >= s.t2 && s.t2 > 1.0 && s.gamma_p > 0.0 && s.gamma_p < 1.0, describe(p));
            rec.require(s.t2_valid, describe(p));
        }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("Feynman-Kac Perron root equals 1 at log t2", 1e-9);
        for (const auto& p : stable1)
            rec.measure(std::abs(feynman_kac(p, std::log(characteristic_roots(p).t2)).largest - 1.0), describe(p));
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("closed-form and iterated R agree", 1e-12);
        for (const auto& p : stable1) {
            const auto it = rate_matrix_iterate(qbd_blocks(p));
            rec.measure((it.R - rate_matrix_closed_form(p)).max_abs(), describe(p));
        }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("eigenvalues of R are gamma_1 and gamma", 1e-10);
        for (const auto& p : stable1) {
            const auto [big, small] = rate_matrix_spectrum(rate_matrix_closed_form(p));
            const auto s = characteristic_roots(p);
            rec.measure(std::max(std::abs(big - s.gamma_p), std::abs(small - s.gamma_secondary)), describe(p));
        }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("Neuts criterion matches the closed stability test", 0.0);
        const auto grid1 = sample_grid(grid, seed + 3, {GridKind::Mixed, false, Model::Model1});
        for (const auto& p : grid1) rec.require(neuts_stability(qbd_blocks(p)) == is_stable(p), describe(p));
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("gamma_p < 1 exactly when lambda < beta mu p/(alpha+beta)", 0.0);
        for (const auto& p : mixed) rec.require((characteristic_roots(p).gamma_p < 1.0) == is_stable(p), describe(p));
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("gamma_1 dominates the matched M/M/1 ratio", 0.0);
        for (const auto& p : stable1) rec.require(mm1_comparison(p).dominance, describe(p));
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("lambda/(mu p) < gamma_p on stable points", 0.0);
        for (const auto& p : stable2) rec.require(p.lambda / (p.mu * p.p) < characteristic_roots(p).gamma_p, describe(p));
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("twisted Markovian part: C(alpha'+beta') = G and phi is stationary", 1e-12);
        for (const auto& p : stable2) {
            if (p.p != 1.0) continue;
            const auto r = model2_twist_rates(p);
            const double G = *characteristic_roots(p).g_constant;
            rec.measure(std::abs(p.C * (r.alpha_t + r.beta_t) - G) / G, describe(p));
            const auto phi = markov_part_stationary(p, Model::Model1, 0);
            // two-state balance: phi(U) alpha' = phi(D) beta'
            rec.measure(std::abs(phi.up * r.alpha_t - phi.down * r.beta_t), describe(p));
            rec.measure(std::abs(phi.up + phi.down - 1.0), describe(p));
        }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("horizontal drift is positive and both routes agree", 1e-10);
        for (const auto& p : stable2) {
            if (p.p != 1.0) continue;
            for (auto m : {Model::Model1, Model::Model2}) {
                try {
                    const auto d = horizontal_drift(p, m);
                    rec.measure(std::abs(d.closed_form - d.phi_weighted), describe(p));
                } catch (const NumericalError& e) {
                    rec.fail(describe(p) + ": " + e.what());
                }
            }
        }
        out.push_back(rec.result());
    }
    {
        detail::PropertyRecorder rec("stationary ratio law pi(k,U)/pi(k,D) at k=400", 1e-6);
        const std::int64_t n = std::min<std::int64_t>(grid, 50);
        for (std::int64_t i = 0; i < n; ++i) {
            const auto& p = stable1[static_cast<std::size_t>(i)];
            const auto t = exact_stationary_model1(p, 400);
            const double ratio = t.at(400, ServerStatus::Up) / t.at(400, ServerStatus::Down);
            const double gap = detail::twist_gap(p, std::sqrt(characteristic_roots(p).s_p));
            const double expected = gap / (2.0 * p.alpha);
            rec.measure(std::abs(ratio / expected - 1.0), describe(p));
        }
        out.push_back(rec.result());
    }
    return out;
}

} // namespace urq
