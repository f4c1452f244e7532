#pragma once

// Monte Carlo on the uniformized chains: seeded trajectories, occupation
// estimates, and large-deviation excursions with their regime classification.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "urq/asymptotics.hpp"
#include "urq/core.hpp"
#include "urq/kernels.hpp"
#include "urq/qbd.hpp"
#include "urq/rng.hpp"

namespace urq {

struct SimulationConfig {
    std::int64_t steps = 1;
    std::uint64_t seed = 0;
    std::optional<State> start; ///< defaults to the empty system, Up
    std::int64_t thin = 1;      ///< keep every thin-th state
    RerouteRule rule = RerouteRule::RandomDestination;
};

/// states[i] is the state after i * thin steps; states[0] is the start.
struct Trajectory {
    ModelParams params;
    Model model = Model::Model1;
    std::uint64_t seed = 0;
    std::int64_t thin = 1;
    std::int64_t step_count = 0;
    std::vector<State> states;
};

namespace detail {

inline State default_start(Model model) { return {model, 0, 0, ServerStatus::Up}; }

inline TransitionRow simulation_row(const ModelParams& params, Model model, const State& s, RerouteRule rule) {
    return model == Model::RsRd ? rs_rd_kernel(params, s, rule) : full_kernel(params, model, s);
}

/// Drives the chain for `steps` steps and calls visit(step, state) for the
/// start and every successor.
template <class Visit>
void run_chain(const ModelParams& params, Model model, const SimulationConfig& cfg, Visit&& visit) {
    validate(params, model);
    if (cfg.steps < 1) throw InvalidParameter("steps must be >= 1");
    State s = cfg.start.value_or(default_start(model));
    s.model = model;
    if (model == Model::Model1) s.y = 0;
    detail::check_full_state(s);
    Rng rng(cfg.seed);
    visit(std::int64_t{0}, s);
    for (std::int64_t n = 1; n <= cfg.steps; ++n) {
        s = rng.sample(simulation_row(params, model, s, cfg.rule));
        visit(n, s);
    }
}

} // namespace detail

inline Trajectory simulate(const ModelParams& params, Model model, const SimulationConfig& cfg) {
    if (cfg.thin < 1) throw InvalidParameter("thin must be >= 1");
    Trajectory t;
    t.params = params;
    t.model = model;
    t.seed = cfg.seed;
    t.thin = cfg.thin;
    t.step_count = cfg.steps;
    t.states.reserve(static_cast<std::size_t>(cfg.steps / cfg.thin + 1));
    detail::run_chain(params, model, cfg, [&](std::int64_t n, const State& s) {
        if (n % cfg.thin == 0) t.states.push_back(s);
    });
    return t;
}

inline Trajectory simulate(const ModelParams& params, Model model, std::int64_t steps, std::uint64_t seed,
                           std::optional<State> start = std::nullopt) {
    SimulationConfig cfg;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.start = start;
    return simulate(params, model, cfg);
}

// ---------------------------------------------------------------------------
// Occupation measures
// ---------------------------------------------------------------------------

/// Signs of a chain running away: the level keeps climbing.
struct TransienceDiagnostic {
    double mean_level_first_half = 0.0;
    double mean_level_second_half = 0.0;
    std::int64_t max_level_at_half = 0;
    std::int64_t max_level_at_end = 0;
    bool suspect_transient = false;
};

struct Occupation {
    StationaryTable table;
    std::int64_t counted_steps = 0;
    TransienceDiagnostic transience;
};

namespace detail {

/// Counts visits on a growing lattice without storing the path.
class OccupationCounter {
public:
    explicit OccupationCounter(Model model) : model_(model) {}

    void add(const State& s) {
        if (s.x > x_max_ || s.y > y_max_) grow(std::max(s.x, x_max_), std::max(s.y, y_max_));
        ++counts_[index(s.x, s.y, s.status)];
        ++total_;
    }

    Occupation finish() const {
        Occupation o;
        o.table = StationaryTable(model_, x_max_, model_ == Model::Model1 ? 0 : y_max_);
        if (total_ == 0) throw InvalidParameter("empty occupation window");
        for (std::int64_t x = 0; x <= x_max_; ++x)
            for (std::int64_t y = 0; y <= y_max_; ++y)
                for (auto st : {ServerStatus::Up, ServerStatus::Down})
                    o.table.at(x, y, st) =
                        static_cast<double>(counts_[index(x, y, st)]) / static_cast<double>(total_);
        o.counted_steps = total_;
        return o;
    }

    void merge(const OccupationCounter& other) {
        grow(std::max(x_max_, other.x_max_), std::max(y_max_, other.y_max_));
        for (std::int64_t x = 0; x <= other.x_max_; ++x)
            for (std::int64_t y = 0; y <= other.y_max_; ++y)
                for (auto st : {ServerStatus::Up, ServerStatus::Down})
                    counts_[index(x, y, st)] += other.counts_[other.index(x, y, st)];
        total_ += other.total_;
    }

private:
    std::size_t index(std::int64_t x, std::int64_t y, ServerStatus s) const noexcept {
        return static_cast<std::size_t>((x * (y_max_ + 1) + y) * 2 + phase(s));
    }
    void grow(std::int64_t nx, std::int64_t ny) {
        if (nx == x_max_ && ny == y_max_ && !counts_.empty()) return;
        // double the extent to keep regrowth rare
        const std::int64_t gx = nx > x_max_ ? std::max(nx, 2 * x_max_ + 1) : x_max_;
        const std::int64_t gy = ny > y_max_ ? std::max(ny, 2 * y_max_ + 1) : y_max_;
        std::vector<std::int64_t> next(static_cast<std::size_t>((gx + 1) * (gy + 1) * 2), 0);
        for (std::int64_t x = 0; x <= x_max_ && !counts_.empty(); ++x)
            for (std::int64_t y = 0; y <= y_max_; ++y)
                for (int st = 0; st < 2; ++st)
                    next[static_cast<std::size_t>((x * (gy + 1) + y) * 2 + st)] =
                        counts_[index(x, y, status_of(st))];
        counts_ = std::move(next);
        x_max_ = gx;
        y_max_ = gy;
    }

    Model model_;
    std::int64_t x_max_ = 0;
    std::int64_t y_max_ = 0;
    std::vector<std::int64_t> counts_ = std::vector<std::int64_t>(2, 0);
    std::int64_t total_ = 0;
};

inline void trim(StationaryTable& t) {
    std::int64_t xm = 0;
    std::int64_t ym = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t.values()[i] > 0.0) {
            const State s = t.state_at(i);
            xm = std::max(xm, s.x);
            ym = std::max(ym, s.y);
        }
    if (xm == t.x_max() && ym == t.y_max()) return;
    StationaryTable out(t.model(), std::max<std::int64_t>(xm, 1), ym);
    for (std::int64_t x = 0; x <= out.x_max(); ++x)
        for (std::int64_t y = 0; y <= ym; ++y)
            for (auto st : {ServerStatus::Up, ServerStatus::Down}) out.at(x, y, st) = t.prob({t.model(), x, y, st});
    t = std::move(out);
}

} // namespace detail

/// Occupation frequencies of a stored trajectory after burn_in steps.
inline StationaryTable empirical_distribution(const Trajectory& traj, std::int64_t burn_in) {
    if (burn_in < 0 || burn_in >= traj.step_count) throw InvalidParameter("burn_in must lie in [0, step_count)");
    detail::OccupationCounter counter(traj.model);
    for (std::size_t i = 0; i < traj.states.size(); ++i)
        if (static_cast<std::int64_t>(i) * traj.thin >= burn_in) counter.add(traj.states[i]);
    auto table = counter.finish().table;
    detail::trim(table);
    return table;
}

/// Streaming occupation estimate for long runs: nothing but counts is stored.
inline Occupation occupation(const ModelParams& params, Model model, const SimulationConfig& cfg,
                             std::int64_t burn_in) {
    if (burn_in < 0 || burn_in >= cfg.steps) throw InvalidParameter("burn_in must lie in [0, steps)");
    detail::OccupationCounter counter(model);
    const std::int64_t half = cfg.steps / 2;
    double sum_first = 0.0;
    double sum_second = 0.0;
    std::int64_t running_max = 0;
    TransienceDiagnostic diag;
    detail::run_chain(params, model, cfg, [&](std::int64_t n, const State& s) {
        const std::int64_t level = s.x + s.y;
        running_max = std::max(running_max, level);
        if (n <= half) {
            sum_first += static_cast<double>(level);
            diag.max_level_at_half = running_max;
        } else {
            sum_second += static_cast<double>(level);
        }
        if (n >= burn_in) counter.add(s);
    });
    diag.max_level_at_end = running_max;
    diag.mean_level_first_half = sum_first / static_cast<double>(half + 1);
    diag.mean_level_second_half = sum_second / static_cast<double>(cfg.steps - half);
    // a positive recurrent chain has the same mean level in both halves; a
    // transient one keeps climbing roughly linearly
    diag.suspect_transient = diag.mean_level_second_half > 1.5 * diag.mean_level_first_half + 10.0 &&
                             diag.max_level_at_end > diag.max_level_at_half + 10;
    Occupation o = counter.finish();
    detail::trim(o.table);
    o.transience = diag;
    return o;
}

inline TransienceDiagnostic transience_diagnostic(const Trajectory& traj) {
    TransienceDiagnostic d;
    const std::size_t n = traj.states.size();
    const std::size_t half = n / 2;
    std::int64_t running = 0;
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t level = traj.states[i].x + traj.states[i].y;
        running = std::max(running, level);
        if (i < half) {
            s1 += static_cast<double>(level);
            d.max_level_at_half = running;
        } else {
            s2 += static_cast<double>(level);
        }
    }
    d.max_level_at_end = running;
    d.mean_level_first_half = half ? s1 / static_cast<double>(half) : 0.0;
    d.mean_level_second_half = n > half ? s2 / static_cast<double>(n - half) : 0.0;
    d.suspect_transient = d.mean_level_second_half > 1.5 * d.mean_level_first_half + 10.0 &&
                          d.max_level_at_end > d.max_level_at_half + 10;
    return d;
}

/// 0.5 * sum |a - b| over the union of both lattices; mass of `b` beyond its
/// own lattice (tail_mass_bound) counts as disagreement.
inline double total_variation(const StationaryTable& a, const StationaryTable& b) {
    const std::int64_t xm = std::max(a.x_max(), b.x_max());
    const std::int64_t ym = std::max(a.y_max(), b.y_max());
    double tv = 0.0;
    for (std::int64_t x = 0; x <= xm; ++x)
        for (std::int64_t y = 0; y <= ym; ++y)
            for (auto s : {ServerStatus::Up, ServerStatus::Down}) {
                const State st{a.model(), x, y, s};
                tv += std::abs(a.prob(st) - b.prob(st));
            }
    return 0.5 * (tv + b.tail_mass_bound);
}

/// Fraction of stationary time in the Up phase.
inline double up_marginal(const StationaryTable& t) {
    double up = 0.0;
    double all = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        all += t.values()[i];
        if (t.state_at(i).status == ServerStatus::Up) up += t.values()[i];
    }
    return up / all;
}

// ---------------------------------------------------------------------------
// Excursions
// ---------------------------------------------------------------------------

struct Excursion {
    std::int64_t start_step = 0; ///< last visit to the base level before the climb
    std::int64_t end_step = 0;   ///< first passage to level K
    std::int64_t start_level = 0;
    std::int64_t peak = 0;       ///< K
    double down_fraction = 0.0;
    double slope_estimate = 0.0; ///< (K - start_level) / (end_step - start_step), per step
};

/// Climbs of the server-1 queue from base_level to level_K. After each
/// passage the queue must fall back to base_level before the next one counts.
inline std::vector<Excursion> ld_excursions(const Trajectory& traj, std::int64_t level_K,
                                            std::int64_t base_level = 2) {
    if (traj.thin != 1) throw InvalidParameter("excursion analysis needs an unthinned trajectory");
    if (base_level < 0 || level_K <= base_level) throw InvalidParameter("need level_K > base_level >= 0");
    std::vector<Excursion> out;
    std::optional<std::size_t> last_base;
    bool armed = true;
    std::vector<std::int64_t> down_prefix(traj.states.size() + 1, 0);
    for (std::size_t i = 0; i < traj.states.size(); ++i)
        down_prefix[i + 1] = down_prefix[i] + (traj.states[i].status == ServerStatus::Down ? 1 : 0);

    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const std::int64_t x = traj.states[i].x;
        if (x <= base_level) {
            last_base = i;
            armed = true;
        }
        if (armed && last_base && x >= level_K) {
            Excursion e;
            e.start_step = static_cast<std::int64_t>(*last_base);
            e.end_step = static_cast<std::int64_t>(i);
            e.start_level = traj.states[*last_base].x;
            e.peak = x;
            const auto len = static_cast<double>(i - *last_base);
            e.down_fraction = static_cast<double>(down_prefix[i + 1] - down_prefix[*last_base]) / (len + 1.0);
            e.slope_estimate = static_cast<double>(x - e.start_level) / len;
            out.push_back(e);
            armed = false;
        }
    }
    return out;
}

/// UpDominated when mu p < lambda + beta: large queues build up while the
/// server works. DownDominated otherwise: they build up during repairs.
inline Regime regime_prediction(const ModelParams& params, Model model = Model::Model1) {
    validate_rates(params);
    const double mp = model == Model::Model1 ? params.mu : params.mu * params.p;
    if (mp == params.lambda + params.beta) throw InvalidParameter("degenerate regime boundary (mu p = lambda + beta)");
    return mp < params.lambda + params.beta ? Regime::UpDominated : Regime::DownDominated;
}

struct RegimeVote {
    std::int64_t excursions = 0;
    std::int64_t up_dominated = 0;   ///< down_fraction < 0.5
    std::int64_t down_dominated = 0; ///< down_fraction >= 0.5
    std::array<std::int64_t, 10> histogram{}; ///< down_fraction in tenths
    double mean_slope = 0.0;
    std::optional<Regime> verdict; ///< empty when no excursion was found

    std::int64_t ties() const noexcept { return excursions - up_dominated - down_dominated; }
};

/// Majority vote over excursions; a strict majority above 50% decides.
inline RegimeVote regime_vote(const std::vector<Excursion>& excursions) {
    RegimeVote v;
    v.excursions = static_cast<std::int64_t>(excursions.size());
    double slope = 0.0;
    for (const auto& e : excursions) {
        if (e.down_fraction < 0.5) ++v.up_dominated;
        else ++v.down_dominated;
        const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(e.down_fraction * 10.0));
        ++v.histogram[bin];
        slope += e.slope_estimate;
    }
    if (v.excursions == 0) return v;
    v.mean_slope = slope / static_cast<double>(v.excursions);
    if (2 * v.up_dominated > v.excursions) v.verdict = Regime::UpDominated;
    else if (2 * v.down_dominated > v.excursions) v.verdict = Regime::DownDominated;
    return v;
}

// ---------------------------------------------------------------------------
// Replications
// ---------------------------------------------------------------------------

/// Runs fn(seed, index) for index in [0, count) with seed = stream_seed(master,
/// index), spread over `threads` workers. Results come back in index order.
template <class Fn>
auto run_replications(std::int64_t count, std::uint64_t master, unsigned threads, Fn fn)
    -> std::vector<decltype(fn(std::uint64_t{}, std::int64_t{}))> {
    using Result = decltype(fn(std::uint64_t{}, std::int64_t{}));
    if (count < 1) throw InvalidParameter("replication count must be >= 1");
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    std::vector<std::optional<Result>> slots(static_cast<std::size_t>(count));
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (auto i = static_cast<std::int64_t>(w); i < count; i += threads)
                    slots[static_cast<std::size_t>(i)] = fn(stream_seed(master, static_cast<std::uint64_t>(i)), i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<Result> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

} // namespace urq
