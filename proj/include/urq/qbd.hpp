#pragma once

// Matrix-geometric machinery for the unreliable M/M/1 queue and a truncated
// linear-solve oracle for all three chains.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "urq/core.hpp"
#include "urq/kernels.hpp"
#include "urq/matrix2.hpp"
#include "urq/spectral.hpp"

namespace urq {

/// Level blocks of the Model 1 QBD, phases ordered (U, D).
struct QbdBlocks {
    Mat2 P1_0; ///< local block at level 0
    Mat2 P0;   ///< level k -> k+1
    Mat2 P1;   ///< local block at level k >= 1
    Mat2 P2;   ///< level k -> k-1

    Mat2 level_generator() const noexcept { return P0 + P1 + P2; }
};

inline QbdBlocks qbd_blocks(const ModelParams& params) {
    validate(params, Model::Model1);
    const double C = params.C;
    const double l = params.lambda;
    const double m = params.mu;
    const double a = params.alpha;
    const double b = params.beta;
    QbdBlocks q;
    q.P1_0 = Mat2::of(1.0 - (a + l) / C, a / C, b / C, 1.0 - (l + b) / C);
    q.P0 = Mat2::of(l / C, 0.0, 0.0, l / C);
    q.P2 = Mat2::of(m / C, 0.0, 0.0, 0.0);
    q.P1 = Mat2::of(1.0 - (m + l + a) / C, a / C, b / C, 1.0 - (l + b) / C);
    return q;
}

/// R = (lambda/mu) [[1, alpha/(lambda+beta)], [1, (alpha+mu)/(lambda+beta)]].
inline Mat2 rate_matrix_closed_form(const ModelParams& params) {
    validate(params, Model::Model1);
    const double r = params.lambda / params.mu;
    const double lb = params.lambda + params.beta;
    return r * Mat2::of(1.0, params.alpha / lb, 1.0, (params.alpha + params.mu) / lb);
}

/// Eigenvalues of R, larger first.
inline std::pair<double, double> rate_matrix_spectrum(const Mat2& R) { return real_eigenvalues(R); }

struct RateMatrixSolution {
    Mat2 R;
    double eig_large = 0.0;
    double eig_small = 0.0;
    std::int64_t iterations = 0;   ///< successive-substitution steps
    int newton_steps = 0;          ///< polishing steps accepted afterwards
    double residual = 0.0; ///< max |R - (R^2 P2 + R P1 + P0)|
    double spectral_radius() const noexcept { return std::max(std::abs(eig_large), std::abs(eig_small)); }
};

struct RateIterationOptions {
    double tol = 1e-13;
    std::int64_t max_iterations = 1'000'000;
    int max_newton_steps = 8;
};

namespace detail {

inline double fixed_point_residual(const QbdBlocks& b, const Mat2& R) {
    return (R * R * b.P2 + R * b.P1 + b.P0 - R).max_abs();
}

/// One Newton step for F(R) = R^2 P2 + R P1 + P0 - R. The derivative
/// H -> H R P2 + R H P2 + H P1 - H is assembled as a 4x4 matrix over the
/// row-major entries of H.
inline std::optional<Mat2> newton_step(const QbdBlocks& b, const Mat2& R) {
    Eigen::Matrix4d J;
    for (int k = 0; k < 4; ++k) {
        Mat2 E = Mat2::zero();
        E(k / 2, k % 2) = 1.0;
        const Mat2 d = E * R * b.P2 + R * E * b.P2 + E * b.P1 - E;
        for (int i = 0; i < 4; ++i) J(i, k) = d(i / 2, i % 2);
    }
    const Mat2 F = R * R * b.P2 + R * b.P1 + b.P0 - R;
    Eigen::Vector4d f;
    for (int i = 0; i < 4; ++i) f(i) = F(i / 2, i % 2);
    Eigen::FullPivLU<Eigen::Matrix4d> lu(J);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Vector4d h = lu.solve(f);
    Mat2 next = R;
    for (int i = 0; i < 4; ++i) next(i / 2, i % 2) -= h(i);
    return next;
}

} // namespace detail

/// Successive substitution R <- R^2 P2 + R P1 + P0 from R = 0, which converges
/// monotonically to the minimal nonnegative solution. The iteration is
/// linearly convergent, so a small step does not mean a small error: it stops
/// once step * c / (1 - c) <= tol, with c the observed contraction ratio of
/// successive steps, or once the steps stall at rounding level. When c is
/// close to 1 the substitution stalls short of full accuracy, so a few Newton
/// steps follow; each is kept only if it lowers the residual.
inline RateMatrixSolution rate_matrix_iterate(const QbdBlocks& blocks, RateIterationOptions opts = {}) {
    Mat2 R = Mat2::zero();
    double prev_step = 0.0;
    int stalled = 0;
    RateMatrixSolution out;
    std::int64_t n = 1;
    for (; n <= opts.max_iterations; ++n) {
        const Mat2 next = R * R * blocks.P2 + R * blocks.P1 + blocks.P0;
        const double step = (next - R).max_abs();
        R = next;
        double bound = step;
        if (prev_step > 0.0 && step < prev_step) {
            const double c = step / prev_step;
            bound = step * c / (1.0 - c);
        }
        stalled = step <= 64.0 * std::numeric_limits<double>::epsilon() * R.max_abs() ? stalled + 1 : 0;
        prev_step = step;
        if (step == 0.0 || (n > 2 && bound <= opts.tol && step <= opts.tol) || stalled >= 16) break;
    }
    if (n > opts.max_iterations)
        throw NumericalError("R iteration did not converge after " + std::to_string(opts.max_iterations) +
                             " iterations (last residual " + std::to_string(detail::fixed_point_residual(blocks, R)) +
                             ")");
    out.iterations = n;

    double residual = detail::fixed_point_residual(blocks, R);
    for (int k = 0; k < opts.max_newton_steps && residual > 0.0; ++k) {
        const auto next = detail::newton_step(blocks, R);
        if (!next) break;
        const double r = detail::fixed_point_residual(blocks, *next);
        if (!(r < residual) || (*next - R).max_abs() > 1e-6) break;
        R = *next;
        residual = r;
        ++out.newton_steps;
    }
    out.R = R;
    out.residual = residual;
    std::tie(out.eig_large, out.eig_small) = rate_matrix_spectrum(R);
    return out;
}

struct NeutsDrifts {
    Vec2 rho;            ///< stationary vector of the level generator
    double up = 0.0;     ///< rho P0 1
    double down = 0.0;   ///< rho P2 1
};

inline NeutsDrifts neuts_drifts(const QbdBlocks& blocks) {
    const Mat2 A = blocks.level_generator();
    NeutsDrifts d;
    d.rho = two_state_stationary(A(0, 1), A(1, 0));
    const Vec2 ones{{1.0, 1.0}};
    d.up = (d.rho * blocks.P0)[0] * ones[0] + (d.rho * blocks.P0)[1] * ones[1];
    d.down = (d.rho * blocks.P2)[0] * ones[0] + (d.rho * blocks.P2)[1] * ones[1];
    return d;
}

/// Positive recurrence of a QBD with irreducible level generator:
/// rho P0 1 < rho P2 1.
inline bool neuts_stability(const QbdBlocks& blocks) {
    const auto d = neuts_drifts(blocks);
    return d.up < d.down;
}

// ---------------------------------------------------------------------------
// Stationary tables
// ---------------------------------------------------------------------------

/// Probabilities on the lattice [0, x_max] x [0, y_max] x {U, D}
/// (y_max = 0 for Model 1).
class StationaryTable {
public:
    StationaryTable() = default;
    StationaryTable(Model model, std::int64_t x_max, std::int64_t y_max)
        : model_(model), x_max_(x_max), y_max_(y_max),
          probs_(static_cast<std::size_t>((x_max + 1) * (y_max + 1) * 2), 0.0) {}

    Model model() const noexcept { return model_; }
    std::int64_t x_max() const noexcept { return x_max_; }
    std::int64_t y_max() const noexcept { return y_max_; }
    std::size_t size() const noexcept { return probs_.size(); }

    bool contains(std::int64_t x, std::int64_t y) const noexcept {
        return x >= 0 && y >= 0 && x <= x_max_ && y <= y_max_;
    }
    std::size_t index(std::int64_t x, std::int64_t y, ServerStatus s) const noexcept {
        return static_cast<std::size_t>((x * (y_max_ + 1) + y) * 2 + phase(s));
    }
    State state_at(std::size_t i) const noexcept {
        const auto k = static_cast<std::int64_t>(i);
        const auto cell = k / 2;
        return {model_, cell / (y_max_ + 1), cell % (y_max_ + 1), status_of(static_cast<int>(k % 2))};
    }

    double& at(std::int64_t x, std::int64_t y, ServerStatus s) { return probs_[index(x, y, s)]; }
    double at(std::int64_t x, std::int64_t y, ServerStatus s) const { return probs_[index(x, y, s)]; }
    double& at(std::int64_t x, ServerStatus s) { return at(x, 0, s); }
    double at(std::int64_t x, ServerStatus s) const { return at(x, 0, s); }

    /// 0 outside the lattice.
    double prob(const State& s) const noexcept {
        return contains(s.x, s.y) ? probs_[index(s.x, s.y, s.status)] : 0.0;
    }

    std::vector<double>& values() noexcept { return probs_; }
    const std::vector<double>& values() const noexcept { return probs_; }

    double total() const noexcept {
        double t = 0.0;
        for (double v : probs_) t += v;
        return t;
    }

    double residual = 0.0;        ///< max global-balance violation
    double tail_mass_bound = 0.0; ///< mass outside (or at the cut of) the lattice
    bool truncation_warning = false;

private:
    Model model_ = Model::Model1;
    std::int64_t x_max_ = 0;
    std::int64_t y_max_ = 0;
    std::vector<double> probs_;
};

/// Stationary vector of level 0 for a stable Model 1 QBD:
/// pi0 (P1_0 + R P2) = pi0 with pi0 (I - R)^{-1} 1 = 1.
inline Vec2 boundary_vector(const QbdBlocks& blocks, const Mat2& R) {
    const Mat2 M = blocks.P1_0 + R * blocks.P2;
    const Vec2 norm = (Mat2::identity() - R).inverse() * Vec2{{1.0, 1.0}};
    // stationary 2-state vector of M, scaled to the normalization
    const Vec2 shape = two_state_stationary(M(0, 1), M(1, 0));
    const double scale = shape[0] * norm[0] + shape[1] * norm[1];
    if (!(scale > 0.0) || !std::isfinite(scale)) throw NumericalError("singular QBD boundary system");
    return {{shape[0] / scale, shape[1] / scale}};
}

/// pi(k, s) = pi0 R^k for k <= k_max, with R in closed form.
inline StationaryTable exact_stationary_model1(const ModelParams& params, std::int64_t k_max) {
    validate(params, Model::Model1);
    if (!is_stable(params)) throw Unstable("model1 is not ergodic: lambda >= beta/(alpha+beta)*mu");
    const QbdBlocks blocks = qbd_blocks(params);
    const Mat2 R = rate_matrix_closed_form(params);
    StationaryTable table(Model::Model1, k_max, 0);
    Vec2 level = boundary_vector(blocks, R);
    for (std::int64_t k = 0; k <= k_max; ++k) {
        table.at(k, ServerStatus::Up) = level[0];
        table.at(k, ServerStatus::Down) = level[1];
        level = level * R;
    }
    // mass beyond k_max: pi_{k_max+1} (I - R)^{-1} 1
    const Vec2 beyond = level * (Mat2::identity() - R).inverse();
    table.tail_mass_bound = beyond.sum();

    double residual = 0.0;
    for (std::int64_t k = 0; k < k_max; ++k) {
        for (auto s : {ServerStatus::Up, ServerStatus::Down}) {
            // inflow into (k, s) from levels k-1, k, k+1
            const int j = phase(s);
            double inflow = 0.0;
            for (int i = 0; i < 2; ++i) {
                const auto si = status_of(i);
                if (k >= 1) inflow += table.at(k - 1, si) * blocks.P0(i, j);
                inflow += table.at(k, si) * (k == 0 ? blocks.P1_0(i, j) : blocks.P1(i, j));
                inflow += table.at(k + 1, si) * blocks.P2(i, j);
            }
            residual = std::max(residual, std::abs(inflow - table.at(k, s)));
        }
    }
    table.residual = residual;
    return table;
}

/// Row generator for the truncated oracle.
using RowFunction = std::function<TransitionRow(const State&)>;

struct TruncationOptions {
    double warn_tail_mass = 1e-8;
    double max_tail_mass = 1e-2;
};

/// Solves pi P = pi on [0, x_max] x [0, y_max] x {U, D}. Moves leaving the
/// lattice are folded into the self-loop, which keeps every row stochastic.
/// The tail mass estimate is the probability of the states on the cut.
inline StationaryTable truncated_stationary(Model model, const RowFunction& rows, std::int64_t x_max,
                                            std::int64_t y_max, TruncationOptions opts = {}) {
    if (model == Model::Model1) y_max = 0;
    if (x_max < 1 || y_max < 0) throw InvalidParameter("truncation bounds must be positive");
    StationaryTable table(model, x_max, y_max);
    const auto n = static_cast<Eigen::Index>(table.size());

    // transposed, so column i holds the row of state i
    std::vector<Eigen::Triplet<double>> pt;
    pt.reserve(table.size() * TransitionRow::kMaxTargets);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const State s = table.state_at(i);
        const TransitionRow row = rows(s);
        double folded = 0.0;
        for (const auto& t : row) {
            if (t.to == s) continue;
            if (!table.contains(t.to.x, t.to.y)) {
                folded += t.prob;
                continue;
            }
            pt.emplace_back(static_cast<Eigen::Index>(table.index(t.to.x, t.to.y, t.to.status)),
                            static_cast<Eigen::Index>(i), t.prob);
        }
        pt.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), row.prob(s) + folded);
    }
    Eigen::SparseMatrix<double> P_T(n, n);
    P_T.setFromTriplets(pt.begin(), pt.end());

    // (P^T - I) pi = 0 with the first equation replaced by sum(pi) = 1
    std::vector<Eigen::Triplet<double>> at;
    at.reserve(pt.size() + static_cast<std::size_t>(2 * n));
    for (Eigen::Index c = 0; c < P_T.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(P_T, c); it; ++it) {
            if (it.row() == 0) continue;
            const double v = it.row() == it.col() ? it.value() - 1.0 : it.value();
            at.emplace_back(it.row(), it.col(), v);
        }
    }
    for (Eigen::Index c = 0; c < n; ++c) at.emplace_back(0, c, 1.0);
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(at.begin(), at.end());
    A.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw NumericalError("truncated stationary system is singular");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(0) = 1.0;
    const Eigen::VectorXd pi = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw NumericalError("truncated stationary solve failed");

    auto& values = table.values();
    for (Eigen::Index i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = pi(i);

    const Eigen::VectorXd balance = P_T * pi - pi;
    table.residual = balance.cwiseAbs().maxCoeff();

    double cut = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const State s = table.state_at(i);
        if (s.x == x_max || (model != Model::Model1 && s.y == y_max)) cut += std::abs(values[i]);
    }
    table.tail_mass_bound = cut;
    if (cut > opts.max_tail_mass)
        throw NumericalError("truncation too small: mass on the cut is " + std::to_string(cut) +
                             ", increase x_max/y_max");
    table.truncation_warning = cut > opts.warn_tail_mass;
    return table;
}

inline StationaryTable truncated_stationary(const ModelParams& params, Model model, std::int64_t x_max,
                                            std::int64_t y_max, RerouteRule rule = RerouteRule::RandomDestination,
                                            TruncationOptions opts = {}) {
    validate(params, model);
    if (model != Model::RsRd && !is_stable(params))
        throw Unstable("truncated oracle requires a stable parameter set");
    RowFunction rows;
    if (model == Model::RsRd)
        rows = [&params, rule](const State& s) { return rs_rd_kernel(params, s, rule); };
    else
        rows = [&params, model](const State& s) { return full_kernel(params, model, s); };
    return truncated_stationary(model, rows, x_max, y_max, opts);
}

} // namespace urq
