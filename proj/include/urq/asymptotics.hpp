#pragma once

// Tail asymptotics: escape probabilities of the twisted chains, the constant
// eta, the prefactors C(Up) and C(Down), the two-term matrix-geometric tail,
// the alpha -> 0 limits, the M/M/1 comparison, empirical tail fits and the
// product-form RS-RD reference law.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "urq/core.hpp"
#include "urq/harmonic_twist.hpp"
#include "urq/kernels.hpp"
#include "urq/matrix2.hpp"
#include "urq/qbd.hpp"
#include "urq/rng.hpp"
#include "urq/spectral.hpp"

namespace urq {

// ---------------------------------------------------------------------------
// Escape probabilities of a level-skip-free chain with two phases
// ---------------------------------------------------------------------------

/// Level-independent blocks of a chain on Z x {U, D} that moves at most one
/// level per step.
struct SkipFreeBlocks {
    Mat2 up;    ///< level +1
    Mat2 local; ///< same level
    Mat2 down;  ///< level -1
};

/// Blocks of the twisted free Model 1 process, read off its rows at level 0.
inline SkipFreeBlocks twisted_model1_blocks(const ModelParams& params) {
    const auto h = harmonic(params, Model::Model1);
    SkipFreeBlocks b;
    for (int i = 0; i < 2; ++i) {
        const auto row = twisted_kernel(params, Model::Model1, state1(0, status_of(i)), h);
        for (const auto& t : row) {
            const int j = phase(t.to.status);
            if (t.to.x == 1) b.up(i, j) += t.prob;
            else if (t.to.x == 0) b.local(i, j) += t.prob;
            else b.down(i, j) += t.prob;
        }
    }
    return b;
}

/// Mean level increment per step under the stationary phase law.
inline double block_drift(const SkipFreeBlocks& b) {
    const Mat2 A = b.up + b.local + b.down;
    const Vec2 phi = two_state_stationary(A(0, 1), A(1, 0));
    return (phi * b.up).sum() - (phi * b.down).sum();
}

struct EscapeOptions {
    double route_tolerance = 1e-8;     ///< allowed gap between the two routes
    double doubling_tolerance = 1e-10; ///< successive truncations must agree this well
    int first_log2 = 10;
    int max_log2 = 24;
    double passage_tolerance = 1e-15;
    std::int64_t max_passage_iterations = 10'000'000;
};

/// H(0, s): probability that the chain started at (0, s) never returns to
/// level 0 at any step n >= 1. v1 holds the probability of never reaching
/// level 0 from (1, s).
struct EscapeProbabilities {
    double up = 0.0;
    double down = 0.0;
    Vec2 v1;
    Mat2 first_passage;           ///< G(s, s'): first visit to level x-1 happens in phase s'
    double absorbing_up = 0.0;    ///< H(0, U) by the truncated absorbing solve
    double absorbing_down = 0.0;
    std::int64_t absorbing_levels = 0;
    double route_gap = 0.0;
    double drift = 0.0;

    double operator[](ServerStatus s) const noexcept { return s == ServerStatus::Up ? up : down; }
};

namespace detail {

/// v(1) for the problem truncated at level X: v(0) = 0 and reaching X + 1
/// counts as escape. Block elimination gives v(x) = S_x v(x+1), so
/// v(1) = S_1 ... S_X 1.
inline Vec2 absorbing_escape(const SkipFreeBlocks& b, std::int64_t levels) {
    const Mat2 I = Mat2::identity();
    Mat2 S = (I - b.local).inverse() * b.up;
    Mat2 product = S;
    for (std::int64_t x = 2; x <= levels; ++x) {
        S = (I - b.local - b.down * S).inverse() * b.up;
        product = product * S;
    }
    return product * Vec2{{1.0, 1.0}};
}

/// Minimal solution of G = (I - A0 - A+ G)^{-1} A-, iterated from 0.
inline Mat2 first_passage_matrix(const SkipFreeBlocks& b, const EscapeOptions& opts) {
    const Mat2 I = Mat2::identity();
    Mat2 G = Mat2::zero();
    double prev = 0.0;
    for (std::int64_t n = 1; n <= opts.max_passage_iterations; ++n) {
        const Mat2 next = (I - b.local - b.up * G).inverse() * b.down;
        const double step = (next - G).max_abs();
        G = next;
        double bound = step;
        if (prev > 0.0 && step < prev) bound = step * (step / prev) / (1.0 - step / prev);
        prev = step;
        if (step == 0.0 || (n > 2 && bound <= opts.passage_tolerance)) return G;
    }
    throw NumericalError("first-passage matrix iteration did not converge");
}

} // namespace detail

inline EscapeProbabilities escape_probabilities(const SkipFreeBlocks& blocks, EscapeOptions opts = {}) {
    EscapeProbabilities out;
    out.drift = block_drift(blocks);
    if (!(out.drift > 0.0)) {
        // recurrent or transient to -infinity: level 0 is hit again a.s.
        out.first_passage = Mat2::identity();
        return out;
    }

    out.first_passage = detail::first_passage_matrix(blocks, opts);
    const Vec2 back = out.first_passage * Vec2{{1.0, 1.0}};
    out.v1 = {{1.0 - back[0], 1.0 - back[1]}};
    const Vec2 h = blocks.up * out.v1;
    out.up = h[0];
    out.down = h[1];

    std::int64_t levels = std::int64_t{1} << opts.first_log2;
    Vec2 previous = detail::absorbing_escape(blocks, levels);
    bool settled = false;
    for (int e = opts.first_log2 + 1; e <= opts.max_log2; ++e) {
        levels <<= 1;
        const Vec2 current = detail::absorbing_escape(blocks, levels);
        const double change = std::max(std::abs(current[0] - previous[0]), std::abs(current[1] - previous[1]));
        previous = current;
        if (change <= opts.doubling_tolerance) {
            settled = true;
            break;
        }
    }
    if (!settled) throw NumericalError("absorbing escape solve did not settle by 2^" + std::to_string(opts.max_log2) + " levels");
    const Vec2 ha = blocks.up * previous;
    out.absorbing_up = ha[0];
    out.absorbing_down = ha[1];
    out.absorbing_levels = levels;
    out.route_gap = std::max(std::abs(out.absorbing_up - out.up), std::abs(out.absorbing_down - out.down));
    if (out.route_gap > opts.route_tolerance)
        throw NumericalError("escape probabilities: absorbing solve and first-passage iteration disagree by " +
                             std::to_string(out.route_gap));
    return out;
}

inline EscapeProbabilities escape_probabilities(const ModelParams& params, EscapeOptions opts = {}) {
    validate(params, Model::Model1);
    return escape_probabilities(twisted_model1_blocks(params), opts);
}

/// Probability that the twisted Model 1 chain started at `s` never visits
/// level 0 at a step n >= 1. Starting below 0 the chain must climb through
/// level 0, so the answer is 0 there.
inline double escape_probability(const EscapeProbabilities& esc, const State& s) {
    if (s.x < 0) return 0.0;
    if (s.x == 0) return esc[s.status];
    Mat2 Gx = Mat2::identity();
    Mat2 base = esc.first_passage;
    for (std::int64_t e = s.x; e > 0; e >>= 1) {
        if (e & 1) Gx = Gx * base;
        base = base * base;
    }
    return 1.0 - Gx.row_sum(phase(s.status));
}

// ---------------------------------------------------------------------------
// eta
// ---------------------------------------------------------------------------

enum class EtaMethod { Exact, Lattice, MonteCarlo };

inline constexpr std::string_view to_string(EtaMethod m) noexcept {
    switch (m) {
    case EtaMethod::Exact: return "exact";
    case EtaMethod::Lattice: return "lattice";
    case EtaMethod::MonteCarlo: return "monte-carlo";
    }
    return "exact";
}

struct EtaEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0; ///< 95% interval; equals value for deterministic methods
    double ci_high = 0.0;
    EtaMethod method = EtaMethod::Exact;
    std::int64_t samples = 0;
    std::uint64_t seed = 0;
};

/// eta = sum over level 0 of pi * h * H, Model 1.
inline EtaEstimate eta_model1(const ModelParams& params, const EscapeProbabilities& esc) {
    const QbdBlocks blocks = qbd_blocks(params);
    const Vec2 pi0 = boundary_vector(blocks, rate_matrix_closed_form(params));
    const auto h = harmonic(params, Model::Model1);
    EtaEstimate e;
    e.value = pi0[0] * esc.up + pi0[1] * h.down_weight * esc.down;
    e.ci_low = e.ci_high = e.value;
    return e;
}

struct Model2EtaOptions {
    std::int64_t x_max = 60;         ///< truncated oracle for pi(0, y, s)
    std::int64_t y_max = 60;
    EtaMethod method = EtaMethod::MonteCarlo;
    // lattice route
    std::int64_t lattice_x = 300;
    std::int64_t lattice_y = 60;
    // Monte Carlo route
    std::int64_t samples = 200'000;
    std::uint64_t seed = 20240601;
    int streams = 8;
    std::int64_t escape_level = 200; ///< reaching this level counts as escape
    std::int64_t max_path_steps = 10'000'000;
    double sum_tolerance = 1e-8;     ///< last summand / total must be below this
};

namespace detail {

/// Weight pi(0,y,s) h(0,y,s) of each boundary state, with a convergence check
/// on the tail of the sum.
inline std::vector<double> boundary_weights(const StationaryTable& table, const HarmonicFunction& h,
                                            double tolerance) {
    std::vector<double> w;
    double total = 0.0;
    for (std::int64_t y = 0; y <= table.y_max(); ++y)
        for (auto s : {ServerStatus::Up, ServerStatus::Down}) {
            const State st = state2(0, y, s);
            w.push_back(std::max(0.0, table.prob(st)) * h(st));
            total += w.back();
        }
    const double last = w[w.size() - 1] + w[w.size() - 2];
    if (!(total > 0.0) || last > tolerance * total)
        throw NumericalError("eta sum over the boundary has not converged; increase y_max");
    return w;
}

/// Cached twisted rows of the Model 2 free process; rows depend on (y == 0, s) only.
class TwistedTandem {
public:
    TwistedTandem(const ModelParams& params, const HarmonicFunction& h) {
        for (int i = 0; i < 2; ++i)
            for (int y = 0; y < 2; ++y) rows_[y][i] = twisted_kernel(params, Model::Model2, state2(0, y, status_of(i)), h);
    }
    State step(const State& s, Rng& rng) const {
        const TransitionRow& row = rows_[s.y == 0 ? 0 : 1][phase(s.status)];
        const State& rel = rng.sample(row);
        const std::int64_t y0 = s.y == 0 ? 0 : 1;
        return state2(s.x + rel.x, s.y + (rel.y - y0), rel.status);
    }
    const TransitionRow& row(std::int64_t y, ServerStatus s) const { return rows_[y == 0 ? 0 : 1][phase(s)]; }

private:
    TransitionRow rows_[2][2];
};

} // namespace detail

/// eta for Model 2 with p = 1 by an absorbing sparse solve on the twisted
/// chain over [1, lattice_x] x [0, lattice_y]; y is clipped at lattice_y and
/// passing lattice_x counts as escape.
inline EtaEstimate eta_model2_lattice(const ModelParams& params, const StationaryTable& table,
                                      const Model2EtaOptions& opts = {}) {
    const auto h = harmonic(params, Model::Model2);
    const auto weights = detail::boundary_weights(table, h, opts.sum_tolerance);
    const std::int64_t X = opts.lattice_x;
    const std::int64_t Y = opts.lattice_y;
    const auto idx = [Y](std::int64_t x, std::int64_t y, int s) {
        return static_cast<Eigen::Index>(((x - 1) * (Y + 1) + y) * 2 + s);
    };
    const auto n = static_cast<Eigen::Index>(X * (Y + 1) * 2);
    const detail::TwistedTandem tw(params, h);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n) * 6);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (std::int64_t x = 1; x <= X; ++x)
        for (std::int64_t y = 0; y <= Y; ++y)
            for (int s = 0; s < 2; ++s) {
                const auto i = idx(x, y, s);
                trips.emplace_back(i, i, 1.0);
                const TransitionRow& row = tw.row(y, status_of(s));
                const std::int64_t y0 = y == 0 ? 0 : 1;
                for (const auto& t : row) {
                    const std::int64_t x2 = x + t.to.x;
                    const std::int64_t y2 = std::min(Y, y + t.to.y - y0);
                    if (x2 <= 0) continue;
                    if (x2 > X) {
                        rhs(i) += t.prob;
                        continue;
                    }
                    trips.emplace_back(i, idx(x2, y2, phase(t.to.status)), -t.prob);
                }
            }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw NumericalError("escape system of the twisted tandem is singular");
    const Eigen::VectorXd v = lu.solve(rhs);

    EtaEstimate e;
    e.method = EtaMethod::Lattice;
    std::size_t k = 0;
    for (std::int64_t y = 0; y <= table.y_max(); ++y)
        for (int s = 0; s < 2; ++s, ++k) {
            double H = 0.0;
            for (const auto& t : tw.row(y, status_of(s))) {
                if (t.to.x < 1) continue;
                const std::int64_t y2 = std::min(Y, y + t.to.y - (y == 0 ? 0 : 1));
                H += t.prob * v(idx(t.to.x, y2, phase(t.to.status)));
            }
            e.value += weights[k] * H;
        }
    e.ci_low = e.ci_high = e.value;
    return e;
}

/// eta for Model 2 with p = 1 by Monte Carlo. A boundary state is drawn with
/// probability proportional to pi h times its chance of stepping to x = 1,
/// the twisted chain is run from there, and eta = total weight x escape
/// fraction. Streams are seeded by stream_seed(seed, i) and merged by
/// summing counts, so the result does not depend on thread scheduling.
inline EtaEstimate eta_model2_monte_carlo(const ModelParams& params, const StationaryTable& table,
                                          const Model2EtaOptions& opts = {}) {
    if (opts.samples < 1 || opts.streams < 1) throw InvalidParameter("samples and streams must be positive");
    const auto h = harmonic(params, Model::Model2);
    const auto weights = detail::boundary_weights(table, h, opts.sum_tolerance);
    const detail::TwistedTandem tw(params, h);

    // entry distribution: boundary state s, then one of its moves to x = 1
    struct Entry {
        State to;
        double mass;
    };
    std::vector<Entry> entries;
    double total = 0.0;
    std::size_t k = 0;
    for (std::int64_t y = 0; y <= table.y_max(); ++y)
        for (int s = 0; s < 2; ++s, ++k)
            for (const auto& t : tw.row(y, status_of(s))) {
                if (t.to.x < 1) continue;
                const double m = weights[k] * t.prob;
                if (m <= 0.0) continue;
                entries.push_back({state2(t.to.x, y + t.to.y - (y == 0 ? 0 : 1), t.to.status), m});
                total += m;
            }
    std::vector<double> cumulative;
    cumulative.reserve(entries.size());
    double acc = 0.0;
    for (const auto& en : entries) cumulative.push_back(acc += en.mass / total);

    std::vector<std::int64_t> escaped(static_cast<std::size_t>(opts.streams), 0);
    std::vector<std::string> failures(static_cast<std::size_t>(opts.streams));
    const auto work = [&](int stream) {
        Rng rng(stream_seed(opts.seed, static_cast<std::uint64_t>(stream)));
        const std::int64_t share = opts.samples / opts.streams + (stream < opts.samples % opts.streams ? 1 : 0);
        std::int64_t hits = 0;
        for (std::int64_t i = 0; i < share; ++i) {
            const double u = rng.uniform();
            const auto pos = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
            State s = entries[static_cast<std::size_t>(std::min<std::ptrdiff_t>(pos, static_cast<std::ptrdiff_t>(entries.size()) - 1))].to;
            std::int64_t steps = 0;
            while (s.x > 0 && s.x < opts.escape_level) {
                s = tw.step(s, rng);
                if (++steps > opts.max_path_steps) {
                    failures[static_cast<std::size_t>(stream)] = "twisted path exceeded max_path_steps";
                    return;
                }
            }
            if (s.x >= opts.escape_level) ++hits;
        }
        escaped[static_cast<std::size_t>(stream)] = hits;
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < opts.streams; ++i) pool.emplace_back(work, i);
    for (auto& t : pool) t.join();
    for (const auto& f : failures)
        if (!f.empty()) throw NumericalError(f);

    std::int64_t hits = 0;
    for (auto c : escaped) hits += c;
    const double n = static_cast<double>(opts.samples);
    const double frac = static_cast<double>(hits) / n;
    EtaEstimate e;
    e.method = EtaMethod::MonteCarlo;
    e.samples = opts.samples;
    e.seed = opts.seed;
    e.value = total * frac;
    e.std_error = total * std::sqrt(frac * (1.0 - frac) / n);
    e.ci_low = e.value - 1.96 * e.std_error;
    e.ci_high = e.value + 1.96 * e.std_error;
    return e;
}

inline EtaEstimate eta(const ModelParams& params, Model model, const Model2EtaOptions& opts = {}) {
    if (model == Model::RsRd) throw Unsupported("eta is not defined for the RS-RD network");
    validate(params, model);
    if (!is_stable(params)) throw Unstable("eta requires a stable parameter set");
    if (model == Model::Model1) return eta_model1(params, escape_probabilities(params));
    detail::require_unit_p(params, "eta for model2");
    const auto table = truncated_stationary(params, Model::Model2, opts.x_max, opts.y_max);
    return opts.method == EtaMethod::Lattice ? eta_model2_lattice(params, table, opts)
                                             : eta_model2_monte_carlo(params, table, opts);
}

// ---------------------------------------------------------------------------
// Prefactors
// ---------------------------------------------------------------------------

enum class Provenance { ClosedForm, MonteCarlo, Lattice, ShapeOnly };

inline constexpr std::string_view to_string(Provenance p) noexcept {
    switch (p) {
    case Provenance::ClosedForm: return "closed-form";
    case Provenance::MonteCarlo: return "monte-carlo";
    case Provenance::Lattice: return "lattice";
    case Provenance::ShapeOnly: return "shape-only";
    }
    return "closed-form";
}

/// pi(k, U) ~ C(Up) gamma^k (Model 1); pi(k, y, s) ~ C(s) y_ratio^y gamma^k
/// (Model 2, p = 1). For p < 1 only the decay rate is known.
struct TailAsymptotic {
    Model model = Model::Model1;
    double gamma = 0.0;
    double secondary_gamma = 0.0;
    std::optional<double> y_ratio;
    std::optional<double> prefactor_up;
    std::optional<double> prefactor_down;
    std::optional<std::pair<double, double>> prefactor_up_ci;
    std::optional<std::pair<double, double>> prefactor_down_ci;
    std::optional<EtaEstimate> eta;
    std::optional<double> escape_up;
    std::optional<double> escape_down;
    std::optional<double> drift;
    std::optional<double> B;
    std::optional<double> secondary_weight; ///< fitted w3 of the two-term tail
    Provenance provenance = Provenance::ClosedForm;

    /// Predicted pi(k, y, s); requires prefactors.
    double predict(std::int64_t k, std::int64_t y, ServerStatus s) const {
        if (!prefactor_up) throw Unsupported("no prefactors for this parameter set");
        const double c = s == ServerStatus::Up ? *prefactor_up : *prefactor_down;
        const double yr = y_ratio ? std::pow(*y_ratio, static_cast<double>(y)) : 1.0;
        return c * yr * std::pow(gamma, static_cast<double>(k));
    }
};

inline TailAsymptotic prefactors(const ModelParams& params, Model model, const Model2EtaOptions& opts = {}) {
    if (model == Model::RsRd) throw Unsupported("the RS-RD network has a closed product form instead");
    validate(params, model);
    if (!is_stable(params)) throw Unstable("prefactors require a stable parameter set");
    const auto spec = characteristic_roots(params);
    TailAsymptotic t;
    t.model = model;
    t.gamma = spec.gamma_p;
    t.secondary_gamma = spec.gamma_secondary;
    if (params.p != 1.0) {
        t.provenance = Provenance::ShapeOnly;
        return t;
    }
    const double G = *spec.g_constant;
    const double gap = detail::twist_gap(params, std::sqrt(spec.s_p));
    const double up_factor = 0.5 * gap / G;
    const double down_factor = params.alpha / G;
    const auto drift = horizontal_drift(params, model);
    t.drift = drift.closed_form;
    if (model == Model::Model1) {
        const auto esc = escape_probabilities(params);
        t.escape_up = esc.up;
        t.escape_down = esc.down;
        t.eta = eta_model1(params, esc);
        const double scale = t.eta->value / drift.closed_form;
        t.prefactor_up = scale * up_factor;
        t.prefactor_down = scale * down_factor;
        t.prefactor_up_ci = std::pair{*t.prefactor_up, *t.prefactor_up};
        t.prefactor_down_ci = std::pair{*t.prefactor_down, *t.prefactor_down};
        t.provenance = Provenance::ClosedForm;
        return t;
    }
    const auto rates = model2_twist_rates(params);
    t.B = rates.B;
    t.y_ratio = params.lambda / params.mu;
    t.eta = eta(params, model, opts);
    const double scale = rates.B / drift.closed_form;
    t.prefactor_up = scale * t.eta->value * up_factor;
    t.prefactor_down = scale * t.eta->value * down_factor;
    t.prefactor_up_ci = std::pair{scale * t.eta->ci_low * up_factor, scale * t.eta->ci_high * up_factor};
    t.prefactor_down_ci = std::pair{scale * t.eta->ci_low * down_factor, scale * t.eta->ci_high * down_factor};
    t.provenance = t.eta->method == EtaMethod::MonteCarlo ? Provenance::MonteCarlo : Provenance::Lattice;
    return t;
}

// ---------------------------------------------------------------------------
// Empirical tail fits
// ---------------------------------------------------------------------------

struct TailFit {
    double gamma_est = 0.0;
    double log_prefactor_est = 0.0;
    std::int64_t k_min = 0;
    std::int64_t k_max = 0;
    double max_relative_deviation = 0.0; ///< of the data from the fitted line

    double prefactor_est() const noexcept { return std::exp(log_prefactor_est); }
};

/// Least-squares line through (k, log values[k]) for k in [k_min, k_max].
inline TailFit tail_fit(std::span<const double> values, std::int64_t k_min, std::int64_t k_max) {
    if (k_min < 0 || k_max >= static_cast<std::int64_t>(values.size()))
        throw InvalidParameter("fit window outside the table");
    if (k_max - k_min + 1 < 5) throw InvalidParameter("fit window needs at least 5 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(k_max - k_min + 1);
    for (std::int64_t k = k_min; k <= k_max; ++k) {
        const double v = values[static_cast<std::size_t>(k)];
        if (!(v > 1e-300)) throw NumericalError("tail fit needs entries above 1e-300 on the window (k=" + std::to_string(k) + ")");
        const double x = static_cast<double>(k);
        const double y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icept = (sy - slope * sx) / n;
    TailFit f;
    f.gamma_est = std::exp(slope);
    f.log_prefactor_est = icept;
    f.k_min = k_min;
    f.k_max = k_max;
    for (std::int64_t k = k_min; k <= k_max; ++k) {
        const double model = std::exp(icept + slope * static_cast<double>(k));
        f.max_relative_deviation =
            std::max(f.max_relative_deviation, std::abs(values[static_cast<std::size_t>(k)] / model - 1.0));
    }
    return f;
}

/// Column pi(., y, s) of a table as a vector indexed by x.
inline std::vector<double> table_column(const StationaryTable& table, ServerStatus s, std::int64_t y = 0) {
    std::vector<double> col(static_cast<std::size_t>(table.x_max() + 1));
    for (std::int64_t k = 0; k <= table.x_max(); ++k) col[static_cast<std::size_t>(k)] = table.at(k, y, s);
    return col;
}

inline TailFit tail_fit(const StationaryTable& table, ServerStatus s, std::int64_t k_min, std::int64_t k_max,
                        std::int64_t y = 0) {
    const auto col = table_column(table, s, y);
    return tail_fit(std::span<const double>(col), k_min, k_max);
}

// ---------------------------------------------------------------------------
// Two-term matrix-geometric tail of Model 1
// ---------------------------------------------------------------------------

/// pi(k, U) = w2 gamma_1^k + w3 gamma^k. w2 is the closed prefactor; w3 is
/// fitted by least squares on the residual over k in [k_min, k_max].
struct TwoTermTail {
    double w2 = 0.0;
    double w3 = 0.0;
    double gamma_1 = 0.0;
    double gamma = 0.0;
    std::int64_t k_min = 0;
    std::int64_t k_max = 0;
    double max_fit_deviation = 0.0;   ///< max |r_k - w3 gamma^k| / pi(k, U)
    bool geometric_warning = false;   ///< residual not geometric in gamma
};

inline TwoTermTail two_term_tail(const ModelParams& params, const StationaryTable& table, std::int64_t k_min = 0,
                                 std::int64_t k_max = 20) {
    if (table.model() != Model::Model1) throw InvalidParameter("two-term tail needs a model1 table");
    if (k_max > table.x_max() || k_min < 0 || k_max <= k_min) throw InvalidParameter("bad two-term fit window");
    const auto pre = prefactors(params, Model::Model1);
    TwoTermTail t;
    t.w2 = *pre.prefactor_up;
    t.gamma_1 = pre.gamma;
    t.gamma = pre.secondary_gamma;
    t.k_min = k_min;
    t.k_max = k_max;
    double num = 0.0;
    double den = 0.0;
    for (std::int64_t k = k_min; k <= k_max; ++k) {
        const double g = std::pow(t.gamma, static_cast<double>(k));
        const double r = table.at(k, ServerStatus::Up) - t.w2 * std::pow(t.gamma_1, static_cast<double>(k));
        num += r * g;
        den += g * g;
    }
    t.w3 = num / den;
    for (std::int64_t k = k_min; k <= k_max; ++k) {
        const double pi = table.at(k, ServerStatus::Up);
        const double rem = pi - t.w2 * std::pow(t.gamma_1, static_cast<double>(k)) -
                           t.w3 * std::pow(t.gamma, static_cast<double>(k));
        t.max_fit_deviation = std::max(t.max_fit_deviation, std::abs(rem) / pi);
    }
    t.geometric_warning = t.max_fit_deviation > 1e-6;
    return t;
}

// ---------------------------------------------------------------------------
// alpha -> 0 limits
// ---------------------------------------------------------------------------

enum class Regime { UpDominated, DownDominated };

inline constexpr std::string_view to_string(Regime r) noexcept {
    return r == Regime::UpDominated ? "UpDominated" : "DownDominated";
}

/// One limiting quantity: the limit, its value at the probe alpha and the gap.
/// `stated` carries an expression quoted for comparison when it differs from
/// the derived limit.
struct LimitEntry {
    std::string name;
    double limit = 0.0;
    std::optional<double> at_probe;
    std::optional<double> stated;

    std::optional<double> gap() const {
        if (!at_probe) return std::nullopt;
        return std::abs(*at_probe - limit);
    }
};

struct AlphaLimits {
    Model model = Model::Model1;
    Regime regime = Regime::UpDominated; ///< Up when mu p < lambda + beta
    double alpha_probe = 1e-6;
    ModelParams probe;
    std::vector<LimitEntry> entries;

    const LimitEntry& entry(std::string_view name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw InvalidParameter("no limit named " + std::string(name));
    }
};

inline AlphaLimits alpha_limits(double lambda, double mu, double beta, double p, Model model,
                                double alpha_probe = 1e-6) {
    if (model == Model::RsRd) throw Unsupported("no alpha limits for the RS-RD network");
    const double mp = mu * p;
    if (mp == lambda + beta) throw InvalidParameter("degenerate case, limit split undefined (mu p = lambda + beta)");
    AlphaLimits out;
    out.model = model;
    out.alpha_probe = alpha_probe;
    out.probe = make_params(lambda, mu, alpha_probe, beta, p, model);
    validate(out.probe, model);
    const bool below = mp < lambda + beta;
    out.regime = below ? Regime::UpDominated : Regime::DownDominated;

    const auto spec = characteristic_roots(out.probe);
    out.entries.push_back({"gamma_p", below ? lambda / mp : lambda / (lambda + beta), spec.gamma_p, {}});
    out.entries.push_back({"gamma_secondary", below ? lambda / (lambda + beta) : lambda / mp, spec.gamma_secondary, {}});
    if (p != 1.0) return out;
    if (!is_stable(out.probe)) throw Unstable("probe parameters are unstable");

    const double C = out.probe.C;
    out.entries.push_back({"G", below ? lambda + beta - mu : beta * (mu - lambda - beta) / (lambda + beta),
                           *spec.g_constant, {}});
    const auto drift = horizontal_drift(out.probe, model);
    out.entries.push_back({"drift", below ? (mu - lambda) / C : (lambda + beta) / C, drift.closed_form, {}});
    if (model == Model::Model1) {
        const auto pre = prefactors(out.probe, Model::Model1);
        out.entries.push_back({"prefactor_up", below ? pre.eta->value * C / (mu - lambda) : 0.0, *pre.prefactor_up, {}});
        out.entries.push_back({"prefactor_down", 0.0, *pre.prefactor_down, {}});
    } else {
        const auto rates = model2_twist_rates(out.probe);
        LimitEntry b{"B", below ? 0.0 : (mu - lambda - beta) / mu, rates.B, {}};
        if (!below) b.stated = (mu - (alpha_probe + beta)) / mu;
        out.entries.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparison with the M/M/1 queue of equal effective rates
// ---------------------------------------------------------------------------

struct Mm1Comparison {
    double gamma_1 = 0.0;
    double mm1_ratio = 0.0; ///< (alpha+beta)/beta * lambda/mu
    bool dominance = false; ///< gamma_1 >= mm1_ratio
    double mm1_empty = 0.0; ///< 1 - mm1_ratio, the M/M/1 empty probability
};

inline Mm1Comparison mm1_comparison(const ModelParams& params) {
    validate(params, Model::Model1);
    if (!is_stable(params)) throw Unstable("M/M/1 comparison requires a stable parameter set");
    Mm1Comparison c;
    c.gamma_1 = characteristic_roots(params).gamma_p;
    c.mm1_ratio = (params.alpha + params.beta) * params.lambda / (params.beta * params.mu);
    c.dominance = c.gamma_1 >= c.mm1_ratio;
    c.mm1_empty = 1.0 - c.mm1_ratio;
    return c;
}

// ---------------------------------------------------------------------------
// RS-RD product form
// ---------------------------------------------------------------------------

/// pi(x, y, s) = (1 - rho)^2 rho^(x+y) (beta or alpha)/(alpha+beta), rho = lambda/(mu p).
inline StationaryTable rs_rd_stationary(const ModelParams& params, std::int64_t x_max, std::int64_t y_max) {
    validate_rates(params);
    const double rho = params.lambda / (params.mu * params.p);
    if (!(rho < 1.0)) throw Unstable("RS-RD product form needs lambda < mu p");
    StationaryTable t(Model::RsRd, x_max, y_max);
    const double norm = (1.0 - rho) * (1.0 - rho);
    const double ab = params.alpha + params.beta;
    for (std::int64_t x = 0; x <= x_max; ++x)
        for (std::int64_t y = 0; y <= y_max; ++y) {
            const double g = norm * std::pow(rho, static_cast<double>(x + y));
            t.at(x, y, ServerStatus::Up) = g * params.beta / ab;
            t.at(x, y, ServerStatus::Down) = g * params.alpha / ab;
        }
    t.tail_mass_bound = 1.0 - t.total();
    return t;
}

/// Max global-balance violation |(pi P)(s) - pi(s)| of `table` under `rows`,
/// over states whose predecessors all lie inside the table.
inline double balance_residual(const StationaryTable& table, const RowFunction& rows) {
    std::vector<double> inflow(table.size(), 0.0);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const State s = table.state_at(i);
        for (const auto& t : rows(s))
            if (table.contains(t.to.x, t.to.y)) inflow[table.index(t.to.x, t.to.y, t.to.status)] += table.values()[i] * t.prob;
    }
    double r = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const State s = table.state_at(i);
        // predecessors sit at most one step above in x or y
        if (s.x >= table.x_max() || s.y >= table.y_max()) continue;
        r = std::max(r, std::abs(inflow[i] - table.values()[i]));
    }
    return r;
}

/// Compares the tail sums T(j) = sum_{y >= j} pi(0, y, s) of two tables.
struct DominanceReport {
    ServerStatus status = ServerStatus::Up;
    std::vector<double> gaps; ///< T_upper(j) - T_lower(j)
    std::optional<std::int64_t> first_violation;
    double min_gap = 0.0;
    bool holds = true;
};

inline DominanceReport tail_dominance(const StationaryTable& upper, const StationaryTable& lower, ServerStatus s,
                                      double tolerance = 1e-15) {
    const std::int64_t y_max = std::min(upper.y_max(), lower.y_max());
    DominanceReport d;
    d.status = s;
    d.gaps.assign(static_cast<std::size_t>(y_max + 1), 0.0);
    double tu = 0.0;
    double tl = 0.0;
    for (std::int64_t y = y_max; y >= 0; --y) {
        tu += upper.at(0, y, s);
        tl += lower.at(0, y, s);
        d.gaps[static_cast<std::size_t>(y)] = tu - tl;
    }
    d.min_gap = *std::min_element(d.gaps.begin(), d.gaps.end());
    for (std::int64_t y = 0; y <= y_max; ++y)
        if (d.gaps[static_cast<std::size_t>(y)] < -tolerance) {
            d.first_violation = y;
            d.holds = false;
            break;
        }
    return d;
}

/// sum_y pi(0, y, s) base^y, the moment that makes the eta sum finite.
inline double boundary_h_moment(const StationaryTable& table, ServerStatus s, double base) {
    double m = 0.0;
    for (std::int64_t y = 0; y <= table.y_max(); ++y) m += table.at(0, y, s) * std::pow(base, static_cast<double>(y));
    return m;
}

} // namespace urq
