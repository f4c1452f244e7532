#pragma once

// Reference computations used only by the tests. None of them calls the
// library routine it is meant to check; they trade speed for transparency.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

/// Parameter set used across the suite.
struct Rates {
    double lambda, mu, alpha, beta, p = 1.0;
};

inline constexpr Rates kParamsA{10.0, 11.0, 0.1, 10.0};
inline constexpr Rates kParamsB{20.0, 60.0, 0.01, 1.0};

/// Root of f on [lo, hi] by bisection; f(lo) and f(hi) must differ in sign.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-13) {
    double flo = f(lo);
    if (flo * f(hi) > 0.0) throw std::invalid_argument("bisection bracket has no sign change");
    for (int i = 0; i < 500 && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Quadratic factor of the characteristic cubic.
inline double quadratic_factor(const Rates& r, double t) {
    const double mp = r.mu * r.p;
    return r.lambda * r.lambda * t * t - r.lambda * (mp + r.lambda + r.alpha + r.beta) * t + mp * (r.lambda + r.beta);
}

/// Smaller root t2, bracketed in (0, vertex); the quadratic is positive at 0.
inline double root_t2(const Rates& r) {
    const double vertex = (r.mu * r.p + r.lambda + r.alpha + r.beta) / (2.0 * r.lambda);
    return bisect([&](double t) { return quadratic_factor(r, t); }, 0.0, vertex);
}

/// Larger root t1, bracketed in (vertex, big).
inline double root_t1(const Rates& r) {
    const double vertex = (r.mu * r.p + r.lambda + r.alpha + r.beta) / (2.0 * r.lambda);
    double hi = 2.0 * vertex + 1.0;
    while (quadratic_factor(r, hi) < 0.0) hi *= 2.0;
    return bisect([&](double t) { return quadratic_factor(r, t); }, vertex, hi);
}

/// Perron root of a 2x2 nonnegative matrix by the plain quadratic formula.
inline double perron_root(double a, double b, double c, double d) {
    const double tr = a + d;
    const double det = a * d - b * c;
    return 0.5 * (tr + std::sqrt(tr * tr - 4.0 * det));
}

/// Largest eigenvalue of the Model 1 Feynman-Kac kernel at theta.
inline double feynman_kac_root(const Rates& r, double C, double theta) {
    const double up = std::exp(theta), down = std::exp(-theta);
    const double a = r.lambda / C * up + 1.0 - (r.alpha + r.mu + r.lambda) / C + r.mu / C * down;
    const double d = r.lambda / C * up + 1.0 - (r.lambda + r.beta) / C;
    return perron_root(a, r.alpha / C, r.beta / C, d);
}

/// Down weight of the harmonic function from the Down row of K h = h:
/// lambda t w + beta + (C - lambda - beta) w = C w.
inline double down_weight_from_down_row(const Rates& r, double t) { return r.beta / (r.lambda + r.beta - r.lambda * t); }

/// Stationary vector of a 2x2 stochastic matrix by power iteration.
inline std::pair<double, double> power_stationary(double a, double b, double c, double d, int iters = 200000) {
    double u = 0.5, v = 0.5;
    for (int i = 0; i < iters; ++i) {
        const double nu = u * a + v * c;
        const double nv = u * b + v * d;
        const double s = nu + nv;
        u = nu / s;
        v = nv / s;
    }
    return {u, v};
}

/// Dense Gaussian elimination with partial pivoting; A is row-major n x n.
inline std::vector<double> dense_solve(std::vector<double> A, std::vector<double> b) {
    const auto n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
        if (A[piv * n + col] == 0.0) throw std::runtime_error("singular system");
        if (piv != col) {
            for (std::size_t k = 0; k < n; ++k) std::swap(A[col * n + k], A[piv * n + k]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r * n + col] / A[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t k = col; k < n; ++k) A[r * n + k] -= f * A[col * n + k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= A[i * n + k] * x[k];
        x[i] = s / A[i * n + i];
    }
    return x;
}

/// Stationary law of a dense stochastic matrix P (row-major) by a dense solve
/// of pi (P - I) = 0 with sum(pi) = 1.
inline std::vector<double> dense_stationary(const std::vector<double>& P, std::size_t n) {
    std::vector<double> A(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) A[i * n + j] = P[j * n + i] - (i == j ? 1.0 : 0.0);
    for (std::size_t j = 0; j < n; ++j) A[j] = 1.0;
    std::vector<double> rhs(n, 0.0);
    rhs[0] = 1.0;
    return dense_solve(A, rhs);
}

/// Twisted Model 1 moves written from their closed formulas.
struct TwistedMoves {
    double right, left, up_down, down_up;
};

inline TwistedMoves twisted_moves(const Rates& r, double C) {
    const double s = (r.mu - r.lambda - r.beta - r.alpha) * (r.mu - r.lambda - r.beta - r.alpha) + 4.0 * r.alpha * r.mu;
    const double plus = r.lambda + r.beta + r.mu + r.alpha - std::sqrt(s);
    const double gap = r.lambda + r.beta - r.mu - r.alpha + std::sqrt(s);
    return {plus / (2.0 * C), 2.0 * r.lambda * r.mu / (C * plus), 2.0 * r.alpha * r.beta / (C * gap), gap / (2.0 * C)};
}

/// Probability that the twisted Model 1 chain started at (1, s) reaches
/// level X + 1 before level 0, by Gauss-Seidel sweeps on the absorbing
/// equations until the sweep no longer changes anything.
inline std::pair<double, double> escape_from_level_one(const TwistedMoves& m, int X) {
    std::vector<double> u(static_cast<std::size_t>(X + 2), 0.0), d(static_cast<std::size_t>(X + 2), 0.0);
    u[static_cast<std::size_t>(X + 1)] = d[static_cast<std::size_t>(X + 1)] = 1.0;
    const double stay_u = 1.0 - m.right - m.left - m.up_down;
    const double stay_d = 1.0 - m.right - m.down_up;
    for (int sweep = 0; sweep < 5'000'000; ++sweep) {
        double change = 0.0;
        for (int x = X; x >= 1; --x) {
            const auto i = static_cast<std::size_t>(x);
            const double nd = (m.right * d[i + 1] + m.down_up * u[i]) / (1.0 - stay_d);
            const double nu = (m.right * u[i + 1] + m.left * u[i - 1] + m.up_down * nd) / (1.0 - stay_u);
            change = std::max({change, std::abs(nu - u[i]), std::abs(nd - d[i])});
            u[i] = nu;
            d[i] = nd;
        }
        if (change < 1e-16) break;
    }
    return {u[1], d[1]};
}

/// Least-squares slope of log(values) against k.
inline double log_slope(const std::vector<double>& values, int k0) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = k0 + static_cast<double>(i), y = std::log(values[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace oracle
