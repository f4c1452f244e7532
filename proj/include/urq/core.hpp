#pragma once

// Parameter and state types shared by every part of the library.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace urq {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rate, probability or uniformization constant violates its invariant.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// A state outside the domain of the requested kernel.
class InvalidState : public Error {
public:
    using Error::Error;
};

/// The parameters describe a non-ergodic system where a stable one is needed.
class Unstable : public Error {
public:
    using Error::Error;
};

/// The quantity exists only for a sub-family (e.g. p = 1).
class Unsupported : public Error {
public:
    using Error::Error;
};

/// Iteration failed to converge, two independent routes disagree, or a
/// truncation is too coarse.
class NumericalError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Models and states
// ---------------------------------------------------------------------------

/// Model1: unreliable M/M/1. Model2: reliable server 2 feeding unreliable
/// server 1 with feedback. RsRd: Model 2 with rerouting while server 1 is down.
enum class Model { Model1, Model2, RsRd };

/// Up is phase 0 and Down is phase 1 in every 2x2 matrix.
enum class ServerStatus : int { Up = 0, Down = 1 };

constexpr int phase(ServerStatus s) noexcept { return static_cast<int>(s); }
constexpr ServerStatus status_of(int phase) noexcept {
    return phase == 0 ? ServerStatus::Up : ServerStatus::Down;
}
constexpr ServerStatus flip(ServerStatus s) noexcept {
    return s == ServerStatus::Up ? ServerStatus::Down : ServerStatus::Up;
}

inline constexpr std::string_view to_string(Model m) noexcept {
    switch (m) {
    case Model::Model1: return "model1";
    case Model::Model2: return "model2";
    case Model::RsRd: return "rsrd";
    }
    return "model1";
}

inline constexpr std::string_view to_string(ServerStatus s) noexcept {
    return s == ServerStatus::Up ? "U" : "D";
}

inline Model parse_model(std::string_view s) {
    if (s == "model1") return Model::Model1;
    if (s == "model2") return Model::Model2;
    if (s == "rsrd") return Model::RsRd;
    throw InvalidParameter("unknown model '" + std::string(s) + "' (expected model1, model2 or rsrd)");
}

inline ServerStatus parse_status(std::string_view s) {
    if (s == "U" || s == "Up") return ServerStatus::Up;
    if (s == "D" || s == "Down") return ServerStatus::Down;
    throw InvalidState("unknown server status '" + std::string(s) + "'");
}

constexpr bool is_two_queue(Model m) noexcept { return m != Model::Model1; }

/// x is the server-1 queue, y the server-2 queue (always 0 for Model 1).
/// On the full chains x, y >= 0; free processes allow any integer x.
struct State {
    Model model = Model::Model1;
    std::int64_t x = 0;
    std::int64_t y = 0;
    ServerStatus status = ServerStatus::Up;

    friend constexpr bool operator==(const State&, const State&) = default;
};

constexpr State state1(std::int64_t x, ServerStatus s) noexcept {
    return {Model::Model1, x, 0, s};
}
constexpr State state2(std::int64_t x, std::int64_t y, ServerStatus s, Model m = Model::Model2) noexcept {
    return {m, x, y, s};
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ModelParams {
    double lambda = 0.0; ///< arrival rate
    double mu = 0.0;     ///< service rate (both servers in Model 2)
    double alpha = 0.0;  ///< Up -> Down rate
    double beta = 0.0;   ///< Down -> Up rate
    double p = 1.0;      ///< departure probability after server 1
    double C = 0.0;      ///< uniformization constant

    friend constexpr bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Smallest C keeping every diagonal kernel entry nonnegative. Model 2 and
/// RS-RD have both servers active in the Up phase.
inline double minimal_uniformization(double lambda, double mu, double alpha, double beta, Model model) noexcept {
    return model == Model::Model1 ? lambda + mu + alpha + beta : lambda + 2.0 * mu + alpha + beta;
}

namespace detail {
inline void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw InvalidParameter(std::string(name) + " must be > 0");
}
} // namespace detail

inline double default_uniformization(double lambda, double mu, double alpha, double beta, Model model) {
    detail::require_positive(lambda, "lambda");
    detail::require_positive(mu, "mu");
    detail::require_positive(alpha, "alpha");
    detail::require_positive(beta, "beta");
    return minimal_uniformization(lambda, mu, alpha, beta, model);
}

/// Parameters with C filled in by default_uniformization.
inline ModelParams make_params(double lambda, double mu, double alpha, double beta, double p = 1.0,
                               Model model = Model::Model1) {
    return {lambda, mu, alpha, beta, p, default_uniformization(lambda, mu, alpha, beta, model)};
}

/// Rates and routing only; C is not inspected.
inline const ModelParams& validate_rates(const ModelParams& params) {
    detail::require_positive(params.lambda, "lambda");
    detail::require_positive(params.mu, "mu");
    detail::require_positive(params.alpha, "alpha");
    detail::require_positive(params.beta, "beta");
    if (!(params.p > 0.0 && params.p <= 1.0))
        throw InvalidParameter("p must lie in (0,1]");
    return params;
}

/// Returns the parameters unchanged or throws InvalidParameter naming the
/// violated invariant.
inline const ModelParams& validate(const ModelParams& params, Model model) {
    validate_rates(params);
    if (model == Model::Model1 && params.p != 1.0)
        throw InvalidParameter("p must equal 1 for model1");
    const double floor = minimal_uniformization(params.lambda, params.mu, params.alpha, params.beta, model);
    // relative slack absorbs the rounding of the caller's own sum
    if (!std::isfinite(params.C) || params.C < floor * (1.0 - 1e-12)) {
        throw InvalidParameter(model == Model::Model1 ? "C below lambda+mu+alpha+beta"
                                                      : "C below lambda+2mu+alpha+beta");
    }
    return params;
}

/// beta/(alpha+beta) * mu: long-run service capacity of the unreliable server.
inline double effective_service_rate(const ModelParams& params) noexcept {
    return params.beta / (params.alpha + params.beta) * params.mu;
}

} // namespace urq
