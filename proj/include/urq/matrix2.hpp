#pragma once

// Dense 2x2 matrices indexed by server phase (Up = 0, Down = 1).

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "urq/core.hpp"

namespace urq {

struct Vec2 {
    std::array<double, 2> v{};

    constexpr double& operator[](int i) noexcept { return v[static_cast<std::size_t>(i)]; }
    constexpr double operator[](int i) const noexcept { return v[static_cast<std::size_t>(i)]; }
    constexpr double sum() const noexcept { return v[0] + v[1]; }
};

struct Mat2 {
    std::array<std::array<double, 2>, 2> a{};

    static constexpr Mat2 zero() noexcept { return {}; }
    static constexpr Mat2 identity() noexcept { return {{{{1.0, 0.0}, {0.0, 1.0}}}}; }
    static constexpr Mat2 of(double a00, double a01, double a10, double a11) noexcept {
        return {{{{a00, a01}, {a10, a11}}}};
    }

    constexpr double& operator()(int i, int j) noexcept {
        return a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    constexpr double operator()(int i, int j) const noexcept {
        return a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }

    constexpr double trace() const noexcept { return a[0][0] + a[1][1]; }
    constexpr double det() const noexcept { return a[0][0] * a[1][1] - a[0][1] * a[1][0]; }
    constexpr double row_sum(int i) const noexcept { return (*this)(i, 0) + (*this)(i, 1); }

    double max_abs() const noexcept {
        return std::max({std::abs(a[0][0]), std::abs(a[0][1]), std::abs(a[1][0]), std::abs(a[1][1])});
    }

    Mat2 inverse() const {
        const double d = det();
        if (d == 0.0) throw NumericalError("singular 2x2 matrix");
        return of(a[1][1] / d, -a[0][1] / d, -a[1][0] / d, a[0][0] / d);
    }

    friend constexpr Mat2 operator+(const Mat2& x, const Mat2& y) noexcept {
        return of(x(0, 0) + y(0, 0), x(0, 1) + y(0, 1), x(1, 0) + y(1, 0), x(1, 1) + y(1, 1));
    }
    friend constexpr Mat2 operator-(const Mat2& x, const Mat2& y) noexcept {
        return of(x(0, 0) - y(0, 0), x(0, 1) - y(0, 1), x(1, 0) - y(1, 0), x(1, 1) - y(1, 1));
    }
    friend constexpr Mat2 operator*(double s, const Mat2& x) noexcept {
        return of(s * x(0, 0), s * x(0, 1), s * x(1, 0), s * x(1, 1));
    }
    friend constexpr Mat2 operator*(const Mat2& x, const Mat2& y) noexcept {
        Mat2 r;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) r(i, j) = x(i, 0) * y(0, j) + x(i, 1) * y(1, j);
        return r;
    }
    /// Column vector product x * v.
    friend constexpr Vec2 operator*(const Mat2& x, const Vec2& v) noexcept {
        return {{x(0, 0) * v[0] + x(0, 1) * v[1], x(1, 0) * v[0] + x(1, 1) * v[1]}};
    }
    /// Row vector product v * x.
    friend constexpr Vec2 operator*(const Vec2& v, const Mat2& x) noexcept {
        return {{v[0] * x(0, 0) + v[1] * x(1, 0), v[0] * x(0, 1) + v[1] * x(1, 1)}};
    }
};

/// Real eigenvalues of a 2x2 matrix, larger first. The smaller one comes from
/// det / larger so that it keeps full relative precision.
inline std::pair<double, double> real_eigenvalues(const Mat2& m) {
    const double tr = m.trace();
    const double half_diff = 0.5 * (m(0, 0) - m(1, 1));
    const double disc = half_diff * half_diff + m(0, 1) * m(1, 0);
    if (disc < 0.0) throw NumericalError("2x2 matrix has complex eigenvalues");
    const double root = std::sqrt(disc);
    const double big = tr >= 0.0 ? 0.5 * tr + root : 0.5 * tr - root; // larger magnitude
    const double other = big != 0.0 ? m.det() / big : 0.0;
    return {std::max(big, other), std::min(big, other)};
}

/// Stationary law of the two-state chain [[1-a, a], [b, 1-b]].
inline Vec2 two_state_stationary(double up_to_down, double down_to_up) noexcept {
    const double total = up_to_down + down_to_up;
    return {{down_to_up / total, up_to_down / total}};
}

} // namespace urq
