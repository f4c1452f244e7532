#include <gtest/gtest.h>

#include "oracles.hpp"
#include "urq/qbd.hpp"

using namespace urq;
using S = ServerStatus;

namespace {

ModelParams to_params(const oracle::Rates& r) { return make_params(r.lambda, r.mu, r.alpha, r.beta, r.p); }

/// Dense Model 1 chain on [0, n] with out-of-range moves kept on the diagonal,
/// written directly from the rates.
std::vector<double> dense_model1(const ModelParams& p, std::size_t n_levels) {
    const std::size_t n = 2 * n_levels;
    std::vector<double> P(n * n, 0.0);
    const auto idx = [](std::size_t x, int s) { return 2 * x + static_cast<std::size_t>(s); };
    for (std::size_t x = 0; x < n_levels; ++x) {
        const std::size_t u = idx(x, 0), d = idx(x, 1);
        if (x + 1 < n_levels) {
            P[u * n + idx(x + 1, 0)] += p.lambda / p.C;
            P[d * n + idx(x + 1, 1)] += p.lambda / p.C;
        }
        if (x > 0) P[u * n + idx(x - 1, 0)] += p.mu / p.C;
        P[u * n + d] += p.alpha / p.C;
        P[d * n + u] += p.beta / p.C;
        for (std::size_t s : {u, d}) {
            double off = 0.0;
            for (std::size_t j = 0; j < n; ++j) off += P[s * n + j];
            P[s * n + s] += 1.0 - off;
        }
    }
    return P;
}

} // namespace

TEST(Qbd, BlocksAreStochastic) {
    const auto b = qbd_blocks(to_params(oracle::kParamsA));
    const Mat2 interior = b.P0 + b.P1 + b.P2;
    const Mat2 bottom = b.P0 + b.P1_0;
    for (int i = 0; i < 2; ++i) {
        EXPECT_NEAR(interior.row_sum(i), 1.0, 1e-15);
        EXPECT_NEAR(bottom.row_sum(i), 1.0, 1e-15);
    }
}

TEST(Qbd, IterationMatchesClosedForm) {
    for (const auto& r : {oracle::kParamsA, oracle::kParamsB}) {
        const auto p = to_params(r);
        const auto blocks = qbd_blocks(p);
        const Mat2 closed = rate_matrix_closed_form(p);
        const auto sol = rate_matrix_iterate(blocks);
        EXPECT_LE((sol.R - closed).max_abs(), 1e-12);
        EXPECT_LE(detail::fixed_point_residual(blocks, closed), 1e-15);
        const auto [big, small] = rate_matrix_spectrum(closed);
        EXPECT_NEAR(big, 1.0 / oracle::root_t2(r), 1e-10);
        EXPECT_NEAR(small, 1.0 / oracle::root_t1(r), 1e-10);
    }
}

TEST(Qbd, IterationConvergesForSlowMixing) {
    // load 0.99: the fixed-point map contracts slowly
    const double lambda = 0.99 * 3.0 / 3.5 * 4.0;
    const auto p = make_params(lambda, 4, 0.5, 3);
    const auto sol = rate_matrix_iterate(qbd_blocks(p));
    EXPECT_LE((sol.R - rate_matrix_closed_form(p)).max_abs(), 1e-12);
    EXPECT_LT(sol.spectral_radius(), 1.0);
}

TEST(Qbd, NeutsCriterionAtTheBoundary) {
    // alpha=1, beta=3, mu=4 gives effective rate 3 exactly
    EXPECT_TRUE(neuts_stability(qbd_blocks(make_params(2.9, 4, 1, 3))));
    EXPECT_FALSE(neuts_stability(qbd_blocks(make_params(3.1, 4, 1, 3))));
    auto p = make_params(3, 4, 1, 3);
    p.C = 16;
    const auto d = neuts_drifts(qbd_blocks(p));
    EXPECT_NEAR(d.up, d.down, 1e-15);
    EXPECT_FALSE(neuts_stability(qbd_blocks(p)));
}

TEST(Qbd, ExactStationaryMatchesDenseSolve) {
    const auto p = to_params(oracle::kParamsA);
    const std::size_t levels = 420;
    const auto dense = oracle::dense_stationary(dense_model1(p, levels), 2 * levels);
    const auto exact = exact_stationary_model1(p, 200);
    // the reflecting cut perturbs level k by about gamma^(levels - k)
    for (std::int64_t k = 0; k <= 100; ++k)
        for (auto s : {S::Up, S::Down}) {
            const double ref = dense[static_cast<std::size_t>(2 * k + phase(s))];
            ASSERT_NEAR(exact.at(k, s), ref, 1e-9 * ref) << k;
        }
    EXPECT_NEAR(exact.at(0, S::Up), 0.0810081, 1e-7);
    EXPECT_NEAR(exact.at(0, S::Down), 0.00040504, 1e-8);
    EXPECT_LE(exact.residual, 1e-15);
    EXPECT_NEAR(exact.total() + exact.tail_mass_bound, 1.0, 1e-13);
}

TEST(Qbd, TruncatedSolveAgreesWithDenseOracle) {
    const auto p = to_params(oracle::kParamsB);
    const auto dense = oracle::dense_stationary(dense_model1(p, 120), 240);
    const auto table = truncated_stationary(p, Model::Model1, 119, 0);
    for (std::size_t i = 0; i < dense.size(); ++i) ASSERT_NEAR(table.values()[i], dense[i], 1e-13);
    EXPECT_LE(table.residual, 1e-14);
}

TEST(Qbd, TruncatedModel2SmallLatticeAgreesWithDenseOracle) {
    const auto p = make_params(2, 5, 0.3, 1.5, 0.6, Model::Model2);
    const std::int64_t X = 7, Y = 7;
    StationaryTable shape(Model::Model2, X, Y);
    const std::size_t n = shape.size();
    std::vector<double> P(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const State s = shape.state_at(i);
        double kept = 0.0;
        for (const auto& t : full_kernel(p, Model::Model2, s)) {
            if (shape.contains(t.to.x, t.to.y)) {
                P[i * n + shape.index(t.to.x, t.to.y, t.to.status)] += t.prob;
                kept += t.prob;
            }
        }
        P[i * n + i] += 1.0 - kept;
    }
    const auto dense = oracle::dense_stationary(P, n);
    const auto table = truncated_stationary(p, Model::Model2, X, Y, RerouteRule::RandomDestination,
                                            {1e-8, 1.0});
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(table.values()[i], dense[i], 1e-13);
    EXPECT_TRUE(table.truncation_warning);
}

TEST(Qbd, TruncationTooSmallIsReported) {
    const auto p = to_params(oracle::kParamsA);
    EXPECT_THROW(truncated_stationary(p, Model::Model1, 10, 0), NumericalError);
    EXPECT_THROW(exact_stationary_model1(make_params(11, 11, 0.1, 10), 10), Unstable);
}
