#include <gtest/gtest.h>

#include "oracles.hpp"
#include "urq/asymptotics.hpp"
#include "urq/simulate.hpp"

using namespace urq;
using S = ServerStatus;

namespace {

ModelParams params_a() { return make_params(10, 11, 0.1, 10); }

Trajectory synthetic(const std::vector<std::pair<std::int64_t, S>>& path) {
    Trajectory t;
    t.step_count = static_cast<std::int64_t>(path.size()) - 1;
    for (const auto& [x, s] : path) t.states.push_back(state1(x, s));
    return t;
}

} // namespace

TEST(Simulate, SeededRunsAreReproducible) {
    const auto a = simulate(params_a(), Model::Model1, 5000, 17);
    const auto b = simulate(params_a(), Model::Model1, 5000, 17);
    const auto c = simulate(params_a(), Model::Model1, 5000, 18);
    ASSERT_EQ(a.states.size(), 5001u);
    EXPECT_EQ(a.states, b.states);
    EXPECT_NE(a.states, c.states);
    EXPECT_EQ(a.states.front(), state1(0, S::Up));
}

TEST(Simulate, EveryStepFollowsTheKernel) {
    const auto p = make_params(5, 9, 0.5, 2, 0.7, Model::Model2);
    const auto t = simulate(p, Model::Model2, 20000, 3, state2(4, 2, S::Down));
    EXPECT_EQ(t.states.front(), state2(4, 2, S::Down));
    for (std::size_t i = 1; i < t.states.size(); ++i) {
        const auto row = full_kernel(p, Model::Model2, t.states[i - 1]);
        ASSERT_GT(row.prob(t.states[i]), 0.0) << i;
    }
}

TEST(Simulate, ThinningKeepsEveryNthState) {
    SimulationConfig cfg;
    cfg.steps = 1000;
    cfg.seed = 5;
    const auto full = simulate(params_a(), Model::Model1, cfg);
    cfg.thin = 10;
    const auto thin = simulate(params_a(), Model::Model1, cfg);
    ASSERT_EQ(thin.states.size(), 101u);
    for (std::size_t i = 0; i < thin.states.size(); ++i) EXPECT_EQ(thin.states[i], full.states[10 * i]);
    EXPECT_THROW(ld_excursions(thin, 30), InvalidParameter);
    cfg.thin = 0;
    EXPECT_THROW(simulate(params_a(), Model::Model1, cfg), InvalidParameter);
}

TEST(Simulate, StreamingOccupationEqualsStoredPath) {
    SimulationConfig cfg;
    cfg.steps = 50000;
    cfg.seed = 9;
    const auto traj = simulate(params_a(), Model::Model1, cfg);
    const auto stored = empirical_distribution(traj, 1000);
    const auto streamed = occupation(params_a(), Model::Model1, cfg, 1000);
    EXPECT_EQ(stored.values(), streamed.table.values());
    EXPECT_NEAR(stored.total(), 1.0, 1e-12);
}

TEST(Simulate, EmpiricalLawApproachesExactTable) {
    const auto p = make_params(3, 8, 0.5, 2);
    SimulationConfig cfg;
    cfg.steps = 2'000'000;
    cfg.seed = 2024;
    const auto occ = occupation(p, Model::Model1, cfg, 10000);
    const auto exact = exact_stationary_model1(p, 200);
    EXPECT_LT(total_variation(occ.table, exact), 0.01);
    EXPECT_NEAR(up_marginal(occ.table), 2.0 / 2.5, 0.01);
    EXPECT_FALSE(occ.transience.suspect_transient);
}

TEST(Simulate, UnstableRunsLookTransient) {
    const auto p = make_params(12, 11, 0.1, 10);
    const auto t = simulate(p, Model::Model1, 200000, 1);
    EXPECT_TRUE(transience_diagnostic(t).suspect_transient);
}

TEST(Excursions, SyntheticPath) {
    const auto t = synthetic({{0, S::Up}, {1, S::Up}, {2, S::Down}, {3, S::Down}, {4, S::Down},
                              {3, S::Up}, {4, S::Up}, {2, S::Up}, {3, S::Up}, {4, S::Up}});
    const auto ex = ld_excursions(t, 4, 1);
    ASSERT_EQ(ex.size(), 1u);
    EXPECT_EQ(ex[0].start_step, 1);
    EXPECT_EQ(ex[0].end_step, 4);
    EXPECT_DOUBLE_EQ(ex[0].slope_estimate, 1.0);
    EXPECT_DOUBLE_EQ(ex[0].down_fraction, 0.75);
    // no return to the base level after the first passage, so no second climb
    const auto vote = regime_vote(ex);
    EXPECT_EQ(vote.verdict, Regime::DownDominated);
    EXPECT_EQ(vote.histogram[7], 1);
    EXPECT_THROW(ld_excursions(t, 1, 1), InvalidParameter);
}

TEST(Excursions, VoteNeedsStrictMajority) {
    std::vector<Excursion> ex(2);
    ex[0].down_fraction = 0.2;
    ex[1].down_fraction = 0.8;
    EXPECT_FALSE(regime_vote(ex).verdict.has_value());
    EXPECT_FALSE(regime_vote({}).verdict.has_value());
}

TEST(Excursions, RegimePrediction) {
    EXPECT_EQ(regime_prediction(params_a()), Regime::UpDominated);
    EXPECT_EQ(regime_prediction(make_params(20, 60, 0.01, 1)), Regime::DownDominated);
    EXPECT_THROW(regime_prediction(make_params(10, 20, 0.1, 10)), InvalidParameter);
}

TEST(Replications, ResultsInIndexOrderAndSeeded) {
    const auto a = run_replications(9, 77, 4, [](std::uint64_t seed, std::int64_t i) {
        return std::pair{seed, i};
    });
    for (std::int64_t i = 0; i < 9; ++i) {
        EXPECT_EQ(a[static_cast<std::size_t>(i)].second, i);
        EXPECT_EQ(a[static_cast<std::size_t>(i)].first, stream_seed(77, static_cast<std::uint64_t>(i)));
    }
    EXPECT_THROW(run_replications(3, 1, 2, [](std::uint64_t, std::int64_t) -> int { throw NumericalError("x"); }),
                 NumericalError);
}
