#include "aggdp/fixtures.hpp"
#include "aggdp/multistep.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace aggdp;

namespace {

AggregationScheme single_cell(std::size_t n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return build_hard_aggregation(n, {all});
}

Vector random_vector(CounterRng& rng, std::size_t n, double scale) {
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

std::vector<std::vector<std::size_t>> random_partition(std::size_t n, std::size_t q, CounterRng& rng) {
    std::vector<std::size_t> states(n);
    for (std::size_t i = 0; i < n; ++i) states[i] = i;
    rng.shuffle(states);
    std::vector<std::vector<std::size_t>> cells(q);
    for (std::size_t k = 0; k < n; ++k) cells[k < q ? k : rng.below(q)].push_back(states[k]);
    return cells;
}

Mdp random_model(std::size_t n, std::uint64_t seed, double discount = 0.9) {
    fixtures::RandomMdpOptions opt;
    opt.states = n;
    opt.max_controls = 3;
    opt.discount = discount;
    return fixtures::random_discounted(opt, seed);
}

/// T_mu^(lambda) J summed term by term with no tail folding.
oracle::Vec lambda_series(const Mdp& mdp, const std::vector<std::size_t>& mu, double lambda, const oracle::Vec& j,
                          std::size_t terms) {
    const std::size_t n = mdp.num_states();
    auto apply = [&](const oracle::Vec& x) {
        oracle::Vec out(n, 0.0);
        for (std::size_t s = 0; s < n; ++s) out[s] = oracle::q_factor(mdp, s, mu[s], x);
        return out;
    };
    oracle::Vec sum(n, 0.0);
    oracle::Vec power = apply(j);
    double weight = 1.0 - lambda;
    for (std::size_t l = 0; l < terms; ++l) {
        for (std::size_t s = 0; s < n; ++s) sum[s] += weight * power[s];
        power = apply(power);
        weight *= lambda;
    }
    return sum;
}

} // namespace

TEST(KStepOperator, OneStepIsAggregateOperator) {
    CounterRng rng(11);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = random_model(8, seed);
        const auto s = build_hard_aggregation(8, random_partition(8, 3, rng));
        const Vector r = random_vector(rng, 3, 5.0);
        EXPECT_LE(sup_distance(kstep_operator(m, s, 1, r), aggregate_operator_H(m, s, r)), 1e-14);
    }
}

TEST(KStepOperator, TwoStateTwoSweeps) {
    const Vector r = Vector::Ones(1);
    EXPECT_NEAR(kstep_operator(fixtures::two_state(), single_cell(2), 2, r)[0], 1.0, 1e-15);
    const Vector r3 = Vector::Constant(1, 3.0);
    EXPECT_NEAR(kstep_operator(fixtures::two_state(), single_cell(2), 2, r3)[0], 0.75 + 0.25 * 3.0, 1e-15);
}

TEST(KStepOperator, LongHorizonForgetsStart) {
    fixtures::RandomMdpOptions opt;
    opt.states = 6;
    opt.discount = 0.5;
    const Mdp m = fixtures::random_discounted(opt, 5);
    const oracle::Vec jstar = oracle::optimal_cost_by_enumeration(m);
    const Vector dj = contiguous_scheme(6, 2).disaggregation() * oracle::to_eigen(jstar);
    const auto s = contiguous_scheme(6, 2);
    CounterRng rng(3);
    for (int t = 0; t < 5; ++t) {
        const Vector r = random_vector(rng, 2, 20.0);
        const double start_gap = sup_distance(s.aggregation() * r, oracle::to_eigen(jstar));
        const double gap = sup_distance(kstep_operator(m, s, 64, r), dj);
        EXPECT_LE(gap, std::pow(0.5, 64) * start_gap + 1e-14);
    }
}

TEST(KStepOperator, ContractionModulus) {
    CounterRng rng(21);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Mdp m = random_model(7, seed);
        const auto s = build_hard_aggregation(7, random_partition(7, 3, rng));
        for (std::size_t k : {1u, 2u, 5u}) {
            const Vector a = random_vector(rng, 3, 10.0);
            const Vector b = random_vector(rng, 3, 10.0);
            EXPECT_LE(sup_distance(kstep_operator(m, s, k, a), kstep_operator(m, s, k, b)),
                      std::pow(0.9, static_cast<double>(k)) * sup_distance(a, b) + 1e-12);
        }
    }
}

TEST(KStepOperator, RejectsBadInput) {
    EXPECT_THROW(kstep_operator(fixtures::two_state(), single_cell(2), 0, Vector::Ones(1)), ValidationError);
    EXPECT_THROW(kstep_operator(fixtures::two_state(), single_cell(2), 2, Vector::Ones(2)), ValidationError);
    EXPECT_THROW(kstep_operator(fixtures::two_state(), single_cell(3), 2, Vector::Ones(1)), ValidationError);
}

TEST(SolveKStep, OneStepMatchesAggregateVi) {
    CounterRng rng(31);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = random_model(9, seed);
        const auto s = build_hard_aggregation(9, random_partition(9, 4, rng));
        EXPECT_LE(sup_distance(solve_kstep(m, s, 1, 1e-12).r, solve_aggregate_vi(m, s, 1e-12).r), 1e-10);
    }
}

TEST(SolveKStep, TwoStateScalarFixedPoint) {
    const oracle::Vec expect = oracle::iterate([](const oracle::Vec& r) { return oracle::Vec{0.75 + 0.25 * r[0]}; },
                                               {0.0}, 1e-15);
    const auto sol = solve_kstep(fixtures::two_state(), single_cell(2), 2, 1e-13);
    EXPECT_NEAR(sol.r[0], expect[0], 1e-12);
    EXPECT_NEAR(sol.r[0], 1.0, 1e-12);
    // J~0 = T^2 (Phi r*) = (1 + r/4, 1/2 + r/4)
    EXPECT_NEAR(sol.j0[0], 1.25, 1e-12);
    EXPECT_NEAR(sol.j0[1], 0.75, 1e-12);
}

TEST(SolveKStep, LiftedCostWithinImprovedBound) {
    CounterRng rng(41);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = random_model(10, 100 + seed);
        const Vector jstar = solve_exact_vi(m, 1e-13).values;
        const auto s = build_hard_aggregation(10, random_partition(10, 3, rng));
        const auto sol = solve_kstep(m, s, 8, 1e-12);
        const double eps = detail::max_within_cell_variation(detail::unit_aggregation_cells(s), jstar);
        EXPECT_LE(sup_distance(sol.j0, jstar), eps / (1.0 - std::pow(0.9, 8)) + 1e-9) << "seed " << seed;
    }
}

TEST(SolveKStep, SixteenStepsBeatOneStepBound) {
    CounterRng rng(51);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Mdp m = random_model(10, 200 + seed);
        const Vector jstar = solve_exact_vi(m, 1e-13).values;
        const auto s = build_hard_aggregation(10, random_partition(10, 4, rng));
        const double eps = detail::max_within_cell_variation(detail::unit_aggregation_cells(s), jstar);
        const auto sol = solve_kstep(m, s, 16, 1e-12);
        EXPECT_LE(sup_distance(sol.j0, jstar), eps / (1.0 - 0.9) + 1e-9) << "seed " << seed;
    }
}

TEST(SolveKStep, RejectsBadInput) {
    EXPECT_THROW(solve_kstep(fixtures::two_state(), single_cell(2), 0, 1e-9), ValidationError);
    EXPECT_THROW(solve_kstep(fixtures::two_state(), single_cell(2), 1, 0.0), ValidationError);
}

TEST(KStepBound, ExactWhenCellsAreFlat) {
    const Mdp m = random_model(6, 7);
    const Vector jstar = solve_exact_vi(m, 1e-13).values;
    const auto s = identity_scheme(6);
    for (std::size_t k : {1u, 2u, 4u, 9u}) {
        const auto sol = solve_kstep(m, s, k, 1e-13);
        const auto report = check_kstep_bound(m, s, k, sol.r, jstar);
        EXPECT_EQ(report.epsilon, 0.0);
        EXPECT_TRUE(report.ok());
        EXPECT_LE(report.max_gap, 1e-10);
    }
}

TEST(KStepBound, TwoStateTwoStep) {
    const Mdp m = fixtures::two_state();
    const Vector jstar = oracle::to_eigen(oracle::optimal_cost_by_enumeration(m));
    const auto sol = solve_kstep(m, single_cell(2), 2, 1e-13);
    const auto report = check_kstep_bound(m, single_cell(2), 2, sol.r, jstar);
    EXPECT_NEAR(report.epsilon, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(report.bound, 8.0 / 9.0, 1e-12);
    EXPECT_NEAR(report.max_gap, 1.0 / 3.0, 1e-12);
    EXPECT_TRUE(report.ok());
}

TEST(KStepBound, RandomSuiteHasNoViolations) {
    CounterRng rng(61);
    std::size_t violations = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Mdp m = random_model(8, 300 + seed);
        const Vector jstar = solve_exact_vi(m, 1e-13).values;
        const auto s = build_hard_aggregation(8, random_partition(8, 1 + rng.below(4), rng));
        for (std::size_t k : {1u, 2u, 4u}) {
            const auto sol = solve_kstep(m, s, k, 1e-12);
            violations += check_kstep_bound(m, s, k, sol.r, jstar).violations.size();
        }
    }
    EXPECT_EQ(violations, 0u);
}

TEST(KStepBound, ImprovedBoundDominates) {
    const Mdp m = fixtures::two_state();
    const Vector jstar = oracle::to_eigen(oracle::optimal_cost_by_enumeration(m));
    const Vector r = Vector::Ones(1);
    const double one = check_kstep_bound(m, single_cell(2), 1, r, jstar).bound;
    for (std::size_t k = 1; k <= 6; ++k) EXPECT_LE(check_kstep_bound(m, single_cell(2), k, r, jstar).bound, one);
}

TEST(KStepBound, ReportsViolation) {
    const Mdp m = fixtures::two_state();
    const Vector jstar = oracle::to_eigen(oracle::optimal_cost_by_enumeration(m));
    const auto report = check_kstep_bound(m, single_cell(2), 2, Vector::Constant(1, 5.0), jstar);
    EXPECT_FALSE(report.ok());
    ASSERT_EQ(report.violations.size(), 2u);
    EXPECT_NEAR(report.violations[1].gap, 5.0 - 2.0 / 3.0, 1e-12);
}

TEST(LambdaEvaluate, ZeroLambdaIsPolicyEvaluation) {
    CounterRng rng(71);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = random_model(8, 400 + seed);
        const Policy mu = fixtures::random_policy(m, seed);
        const auto s = build_hard_aggregation(8, random_partition(8, 3, rng));
        const auto ev = lambda_evaluate(m, s, mu, 0.0, 1e-12);
        EXPECT_EQ(ev.terms, 0u);
        EXPECT_LE(sup_distance(ev.r, evaluate_aggregate_policy(m, s, mu)), 1e-10);
    }
}

TEST(LambdaEvaluate, IdentitySchemeGivesPolicyCost) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Mdp m = random_model(7, 500 + seed);
        const Policy mu = fixtures::random_policy(m, seed);
        const Vector jmu = oracle::to_eigen(oracle::policy_cost(m, mu.controls));
        for (double lambda : {0.0, 0.3, 0.9}) {
            const auto ev = lambda_evaluate(m, identity_scheme(7), mu, lambda, 1e-11);
            EXPECT_LE(sup_distance(ev.r, jmu), 1e-9) << "lambda " << lambda;
        }
    }
}

TEST(LambdaEvaluate, TwoStateMatchesLongSeries) {
    const Mdp m = fixtures::two_state();
    const std::vector<std::size_t> mu{0, 0};
    const oracle::Vec expect = oracle::iterate(
        [&](const oracle::Vec& r) {
            const oracle::Vec t = lambda_series(m, mu, 0.5, {r[0], r[0]}, 200);
            return oracle::Vec{0.5 * (t[0] + t[1])};
        },
        {0.0}, 1e-15);
    const auto ev = lambda_evaluate(m, single_cell(2), Policy{mu}, 0.5, 1e-12);
    EXPECT_NEAR(ev.r[0], expect[0], 1e-11);
}

TEST(LambdaEvaluate, TruncatedOperatorMatchesSeries) {
    const Mdp m = random_model(6, 9);
    const Policy mu = fixtures::random_policy(m, 4);
    CounterRng rng(81);
    const Vector j = random_vector(rng, 6, 3.0);
    for (double lambda : {0.2, 0.7, 0.95}) {
        const std::size_t terms = lambda_truncation(0.9, lambda, 1e-10);
        EXPECT_LE(std::pow(0.9 * lambda, static_cast<double>(terms)), 1e-11);
        const Vector got = lambda_operator(m, mu, lambda, j, terms);
        const Vector want = oracle::to_eigen(lambda_series(m, mu.controls, lambda, oracle::to_vec(j), 2000));
        EXPECT_LE(sup_distance(got, want), 1e-9) << "lambda " << lambda;
    }
}

TEST(LambdaEvaluate, RejectsBadLambda) {
    const Policy mu{{0, 0}};
    EXPECT_THROW(lambda_evaluate(fixtures::two_state(), single_cell(2), mu, 1.0, 1e-9), ValidationError);
    EXPECT_THROW(lambda_evaluate(fixtures::two_state(), single_cell(2), mu, -0.1, 1e-9), ValidationError);
    EXPECT_THROW(lambda_evaluate(fixtures::two_state(), single_cell(2), Policy{{0}}, 0.5, 1e-9), ValidationError);
}
