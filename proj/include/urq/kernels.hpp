#pragma once

// One-step transition rows of the uniformized chains. Kernels are never
// stored as matrices; every row is built on demand from (params, state).

#include <array>
#include <cstddef>
#include <span>
#include <string>

#include "urq/core.hpp"

namespace urq {

struct Transition {
    State to;
    double prob = 0.0;
};

/// Sparse distribution over the successors of one state. Zero-probability
/// moves are never stored; the self-loop is always the last entry.
class TransitionRow {
public:
    static constexpr std::size_t kMaxTargets = 6;

    TransitionRow() = default;
    explicit TransitionRow(const State& origin) : origin_(origin) {}

    const State& origin() const noexcept { return origin_; }
    std::span<const Transition> targets() const noexcept { return {targets_.data(), size_}; }
    std::size_t size() const noexcept { return size_; }
    const Transition* begin() const noexcept { return targets_.data(); }
    const Transition* end() const noexcept { return targets_.data() + size_; }

    /// Probability of moving to `s` (0 when absent).
    double prob(const State& s) const noexcept {
        for (const auto& t : targets())
            if (t.to == s) return t.prob;
        return 0.0;
    }

    double sum() const noexcept {
        double total = 0.0;
        for (const auto& t : targets()) total += t.prob;
        return total;
    }

    /// Adds a move; probabilities that are exactly zero are dropped.
    void add(const State& to, double prob) {
        if (prob == 0.0) return;
        if (size_ == kMaxTargets) throw NumericalError("transition row exceeds six targets");
        targets_[size_++] = {to, prob};
    }

    /// Closes the row with the self-loop carrying the remaining mass.
    void close_with_diagonal() {
        double moved = 0.0;
        for (const auto& t : targets()) moved += t.prob;
        add(origin_, 1.0 - moved);
    }

private:
    State origin_{};
    std::array<Transition, kMaxTargets> targets_{};
    std::size_t size_ = 0;
};

/// How RS-RD reroutes a server-2 completion whose destination (server 1) is
/// Down. RandomDestination draws the next destination from server 1's routing
/// (leave w.p. p, back to server 2 w.p. 1-p); StayAtServer2 keeps the customer
/// at server 2 with probability 1.
enum class RerouteRule { RandomDestination, StayAtServer2 };

inline constexpr std::string_view to_string(RerouteRule r) noexcept {
    return r == RerouteRule::RandomDestination ? "random-destination" : "stay-at-server2";
}

namespace detail {

inline void check_full_state(const State& s) {
    if (s.x < 0 || s.y < 0)
        throw InvalidState("negative queue length in state (" + std::to_string(s.x) + "," +
                           std::to_string(s.y) + ")");
}

inline TransitionRow model1_row(const ModelParams& pr, const State& s, bool with_boundary) {
    const double C = pr.C;
    TransitionRow row(state1(s.x, s.status));
    row.add(state1(s.x + 1, s.status), pr.lambda / C);
    if (s.status == ServerStatus::Up) {
        if (!with_boundary || s.x >= 1) row.add(state1(s.x - 1, ServerStatus::Up), pr.mu / C);
        row.add(state1(s.x, ServerStatus::Down), pr.alpha / C);
    } else {
        row.add(state1(s.x, ServerStatus::Up), pr.beta / C);
    }
    row.close_with_diagonal();
    return row;
}

enum class Server2Down { Serve, Stay, Depart };

inline TransitionRow model2_row(const ModelParams& pr, const State& s, Model tag, bool with_boundary,
                                Server2Down down_rule) {
    const double C = pr.C;
    const auto at = [&](std::int64_t x, std::int64_t y, ServerStatus st) { return state2(x, y, st, tag); };
    TransitionRow row(at(s.x, s.y, s.status));
    row.add(at(s.x, s.y + 1, s.status), pr.lambda / C);
    if (s.status == ServerStatus::Up && (!with_boundary || s.x >= 1)) {
        row.add(at(s.x - 1, s.y, ServerStatus::Up), pr.mu * pr.p / C);
        row.add(at(s.x - 1, s.y + 1, ServerStatus::Up), pr.mu * (1.0 - pr.p) / C);
    }
    if (s.y >= 1) {
        if (s.status == ServerStatus::Up || down_rule == Server2Down::Serve)
            row.add(at(s.x + 1, s.y - 1, s.status), pr.mu / C);
        else if (down_rule == Server2Down::Depart)
            row.add(at(s.x, s.y - 1, s.status), pr.mu * pr.p / C);
    }
    if (s.status == ServerStatus::Up)
        row.add(at(s.x, s.y, ServerStatus::Down), pr.alpha / C);
    else
        row.add(at(s.x, s.y, ServerStatus::Up), pr.beta / C);
    row.close_with_diagonal();
    return row;
}

} // namespace detail

/// RS-RD comparison network: Model 2 except for server-2 completions while
/// server 1 is Down.
inline TransitionRow rs_rd_kernel(const ModelParams& params, const State& state,
                                  RerouteRule rule = RerouteRule::RandomDestination) {
    detail::check_full_state(state);
    return detail::model2_row(params, state, Model::RsRd, true,
                              rule == RerouteRule::RandomDestination ? detail::Server2Down::Depart
                                                                     : detail::Server2Down::Stay);
}

/// Row of the full chain (boundary included). Moves that would leave the
/// state space are folded into the self-loop.
inline TransitionRow full_kernel(const ModelParams& params, Model model, const State& state) {
    detail::check_full_state(state);
    switch (model) {
    case Model::Model1: return detail::model1_row(params, state, true);
    case Model::Model2: return detail::model2_row(params, state, Model::Model2, true, detail::Server2Down::Serve);
    case Model::RsRd: return rs_rd_kernel(params, state);
    }
    return {};
}

/// Row of the free process: the x >= 0 boundary is removed and the kernel is
/// shift invariant in x. Model 2 keeps y >= 0.
inline TransitionRow free_kernel(const ModelParams& params, Model model, const State& state) {
    if (model == Model::Model1) return detail::model1_row(params, state, false);
    if (state.y < 0) throw InvalidState("free process of model2 requires y >= 0");
    if (model == Model::RsRd) throw Unsupported("the RS-RD network has no free process");
    return detail::model2_row(params, state, Model::Model2, false, detail::Server2Down::Serve);
}

} // namespace urq
