#include "aggdp/aggregation.hpp"
#include "aggdp/fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

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

/// Random partition of 0..n-1 into exactly q nonempty cells.
std::vector<std::vector<std::size_t>> random_partition(std::size_t n, std::size_t q, CounterRng& rng) {
    std::vector<std::size_t> states(n);
    for (std::size_t i = 0; i < n; ++i) states[i] = i;
    rng.shuffle(states);
    std::vector<std::vector<std::size_t>> cells(q);
    for (std::size_t k = 0; k < n; ++k) cells[k < q ? k : rng.below(q)].push_back(states[k]);
    return cells;
}

} // namespace

TEST(HardAggregation, SingleCellOfTwo) {
    const auto s = single_cell(2);
    EXPECT_EQ(s.disaggregation(), (Matrix(1, 2) << 0.5, 0.5).finished());
    EXPECT_EQ(s.aggregation(), (Matrix(2, 1) << 1.0, 1.0).finished());
    EXPECT_TRUE(s.is_hard());
}

TEST(HardAggregation, ProductIsIdentity) {
    const auto s = build_hard_aggregation(3, {{0}, {1, 2}});
    EXPECT_EQ(s.disaggregation() * s.aggregation(), Matrix::Identity(2, 2));
}

TEST(HardAggregation, SingletonPartitionIsIdentity) {
    const auto s = identity_scheme(4);
    EXPECT_EQ(s.disaggregation(), Matrix::Identity(4, 4));
    EXPECT_EQ(s.aggregation(), Matrix::Identity(4, 4));
}

TEST(HardAggregation, RejectsOverlapEmptyAndUncovered) {
    EXPECT_THROW(build_hard_aggregation(3, {{0, 1}, {1, 2}}), ValidationError);
    EXPECT_THROW(build_hard_aggregation(3, {{0, 1, 2}, {}}), ValidationError);
    EXPECT_THROW(build_hard_aggregation(3, {{0, 1}}), ValidationError);
    EXPECT_THROW(build_hard_aggregation(3, {{0, 1}, {2}}, std::vector<std::vector<double>>{{0.5, 0.6}, {1.0}}),
                 ValidationError);
}

TEST(HardAggregation, CustomWeights) {
    const auto s = build_hard_aggregation(3, {{0, 2}, {1}}, std::vector<std::vector<double>>{{0.25, 0.75}, {1.0}});
    EXPECT_DOUBLE_EQ(s.disaggregation()(0, 2), 0.75);
    EXPECT_DOUBLE_EQ(s.disaggregation()(0, 1), 0.0);
}

TEST(RepresentativeStates, TwoStateEvaluationFixedPoint) {
    const Mdp m = fixtures::two_state();
    Matrix interp(2, 1);
    interp << 1.0, 1.0;
    const auto s = build_representative_states(2, {0}, interp);
    const Vector r = evaluate_aggregate_policy(m, s, first_control_policy(m));
    EXPECT_NEAR(r[0], 2.0, 1e-11);  // r = 1 + 0.5 r
}

TEST(RepresentativeStates, AllStatesGiveIdentity) {
    const auto s = build_representative_states(4, {0, 1, 2, 3});
    EXPECT_EQ(s.disaggregation(), Matrix::Identity(4, 4));
    EXPECT_EQ(s.aggregation(), Matrix::Identity(4, 4));
}

TEST(RepresentativeStates, DefaultInterpolationOnChain) {
    const auto s = build_representative_states(5, {0, 4});
    const Matrix& phi = s.aggregation();
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(phi.row(j).sum(), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(phi(1, 0), 0.75);
    EXPECT_DOUBLE_EQ(phi(2, 1), 0.5);
    EXPECT_DOUBLE_EQ(phi(3, 1), 0.75);
}

TEST(RepresentativeStates, OutsideSpanIsUniform) {
    const auto s = build_representative_states(5, {1, 3});
    EXPECT_DOUBLE_EQ(s.aggregation()(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(s.aggregation()(4, 1), 0.5);
}

TEST(RepresentativeStates, RejectsNonDistributionRows) {
    Matrix interp(2, 1);
    interp << 1.0, 0.8;
    EXPECT_THROW(build_representative_states(2, {0}, interp), ValidationError);
    Matrix wrong_unit(2, 2);
    wrong_unit << 0.5, 0.5, 0.0, 1.0;
    EXPECT_THROW(build_representative_states(2, {0, 1}, wrong_unit), ValidationError);
    EXPECT_THROW(build_representative_states(3, {1, 1}), ValidationError);
}

TEST(OperatorH, TwoStateSingleCell) {
    const Mdp m = fixtures::two_state();
    const auto s = single_cell(2);
    EXPECT_DOUBLE_EQ(aggregate_operator_H(m, s, Vector::Zero(1))[0], 0.5);
    EXPECT_DOUBLE_EQ(aggregate_operator_H(m, s, Vector::Ones(1))[0], 1.0);
}

TEST(OperatorH, IdentitySchemeReducesToT) {
    const Mdp m = fixtures::random_discounted({.states = 6, .max_controls = 3}, 4);
    const auto s = identity_scheme(6);
    CounterRng rng(9);
    for (int k = 0; k < 10; ++k) {
        const Vector r = random_vector(rng, 6, 5.0);
        EXPECT_EQ(aggregate_operator_H(m, s, r), bellman_optimal(m, r));
    }
}

TEST(OperatorH, DimensionMismatch) {
    EXPECT_THROW(aggregate_operator_H(fixtures::two_state(), single_cell(2), Vector::Zero(2)), ValidationError);
    EXPECT_THROW(aggregate_operator_H(fixtures::two_state(), single_cell(3), Vector::Zero(1)), ValidationError);
}

TEST(OperatorH, MatchesPlainMatrixOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = fixtures::random_discounted({.states = 8, .max_controls = 3}, seed);
        CounterRng rng(seed, 3);
        const auto s = build_hard_aggregation(8, random_partition(8, 3, rng));
        const Vector r = random_vector(rng, 3, 4.0);
        const auto ref = oracle::aggregate_H(m, oracle::to_mat(s.disaggregation()), oracle::to_mat(s.aggregation()),
                                             oracle::to_vec(r));
        EXPECT_LE(oracle::sup_diff(oracle::to_vec(aggregate_operator_H(m, s, r)), ref), 1e-12);
    }
}

TEST(SolveAggregateVi, TwoStateSingleCell) {
    const auto res = solve_aggregate_vi(fixtures::two_state(), single_cell(2), 1e-13);
    EXPECT_NEAR(res.r[0], 1.0, 1e-12);
    EXPECT_EQ(lift_costs(single_cell(2), res.r), Vector::Constant(2, res.r[0]));
}

TEST(SolveAggregateVi, IdentitySchemeMatchesExactVi) {
    const Mdp m = fixtures::random_discounted({.states = 7, .max_controls = 3}, 21);
    const auto agg = solve_aggregate_vi(m, identity_scheme(7), 1e-13);
    EXPECT_LE(sup_distance(agg.r, solve_exact_vi(m, 1e-13).values), 1e-9);
}

TEST(SolveAggregateVi, MatchesIndependentIteration) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = fixtures::random_discounted({.states = 8, .max_controls = 2}, seed);
        CounterRng rng(seed, 5);
        const auto s = build_hard_aggregation(8, random_partition(8, 3, rng));
        const auto d = oracle::to_mat(s.disaggregation());
        const auto phi = oracle::to_mat(s.aggregation());
        const auto ref = oracle::iterate([&](const oracle::Vec& r) { return oracle::aggregate_H(m, d, phi, r); },
                                         oracle::Vec(3, 0.0), 1e-13);
        const auto res = solve_aggregate_vi(m, s, 1e-13);
        EXPECT_LE(oracle::sup_diff(oracle::to_vec(res.r), ref), 1e-11);
        EXPECT_LE(sup_distance(aggregate_operator_H(m, s, res.r), res.r), 1e-13);
    }
}

TEST(LiftCosts, InterpolatedIsConvexCombination) {
    const auto s = build_representative_states(5, {0, 4});
    Vector r(2);
    r << 2.0, 6.0;
    const Vector j = lift_costs(s, r);
    EXPECT_DOUBLE_EQ(j[2], 4.0);
    EXPECT_TRUE((j.array() >= 2.0).all() && (j.array() <= 6.0).all());
}

TEST(ExtractPolicy, Basics) {
    const Mdp m = fixtures::random_discounted({.states = 6, .max_controls = 3}, 2);
    const Vector jstar = solve_exact_vi(m, 1e-12).values;
    const Policy mu = extract_policy(m, identity_scheme(6), jstar);
    EXPECT_LE(sup_distance(evaluate_policy(m, mu), jstar), 1e-9);

    const Mdp single = fixtures::two_state();
    EXPECT_EQ(extract_policy(single, single_cell(2), Vector::Ones(1)), first_control_policy(single));
}

TEST(ExtractPolicy, SelfLoopChosen) {
    const Mdp m = fixtures::two_state_with_self_loop();
    const auto s = single_cell(2);
    const auto r = solve_aggregate_vi(m, s, 1e-13).r;
    EXPECT_EQ(extract_policy(m, s, r)[0], 1u);
}

TEST(AggregationPi, SinglePolicyStopsAfterOneEvaluation) {
    const Mdp m = fixtures::two_state();
    const auto res = aggregation_policy_iteration(m, single_cell(2), first_control_policy(m));
    EXPECT_EQ(res.trace.size(), 1u);
    EXPECT_NEAR(res.r[0], 1.0, 1e-11);
}

TEST(AggregationPi, IdentitySchemeReplicatesExactPi) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = fixtures::random_discounted({.states = 6, .max_controls = 3}, seed);
        const Policy mu0 = fixtures::random_policy(m, seed);
        const auto agg = aggregation_policy_iteration(m, identity_scheme(6), mu0);
        const auto exact = solve_exact_pi(m, mu0);
        EXPECT_LE(sup_distance(evaluate_policy(m, agg.policy), exact.values), 1e-9);
        EXPECT_LE(sup_distance(agg.r, exact.values), 1e-9);
    }
}

TEST(AggregationPi, MatchesAggregateViAndIsMonotone) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Mdp m = fixtures::random_discounted({.states = 6, .min_controls = 2, .max_controls = 2}, seed);
        CounterRng rng(seed, 8);
        const auto s = build_hard_aggregation(6, random_partition(6, 2, rng));
        const auto res = aggregation_policy_iteration(m, s, fixtures::random_policy(m, seed));
        EXPECT_LE(sup_distance(res.r, solve_aggregate_vi(m, s, 1e-13).r), 1e-9);
        EXPECT_LE(res.trace.size(), fixtures::count_policies(m));
        for (std::size_t k = 1; k < res.trace.size(); ++k)
            EXPECT_TRUE((res.trace[k].array() <= res.trace[k - 1].array() + 1e-10).all());
    }
}

TEST(AggregationPi, ImproperPolicyNamed) {
    MdpBuilder b = MdpBuilder::ssp(1);
    b.add_control(0);
    b.add_control(0);
    b.add_transition(0, 0, 0, 1.0, 1.0);
    b.add_transition(0, 1, MdpBuilder::kTerminal, 1.0, 1.0);
    const Mdp m = b.build();
    try {
        aggregation_policy_iteration(m, identity_scheme(1), Policy{{0}});
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("[1]"), std::string::npos) << e.what();
    }
}

TEST(ErrorBound, TwoStateSingleCell) {
    const Mdp m = fixtures::two_state();
    const auto s = single_cell(2);
    const auto report = check_error_bound(m, s, solve_aggregate_vi(m, s, 1e-13).r, solve_exact_vi(m, 1e-13).values);
    EXPECT_NEAR(report.epsilon, 2.0 / 3.0, 1e-9);
    EXPECT_NEAR(report.bound, 4.0 / 3.0, 1e-9);
    EXPECT_NEAR(report.max_gap, 1.0 / 3.0, 1e-9);
    EXPECT_TRUE(report.ok());
}

TEST(ErrorBound, ZeroVariationGivesExactness) {
    // states 1 and 2 both go to 3 at cost 1; 3 self-loops at cost 0: J* = (1, 1, 0)
    MdpBuilder b = MdpBuilder::discounted(3, 0.8);
    for (std::size_t s = 0; s < 3; ++s) b.add_control(s);
    b.add_transition(0, 0, 2, 1.0, 1.0).add_transition(1, 0, 2, 1.0, 1.0).add_transition(2, 0, 2, 1.0, 0.0);
    const Mdp m = b.build();
    const auto s = build_hard_aggregation(3, {{0, 1}, {2}});
    const auto r = solve_aggregate_vi(m, s, 1e-13).r;
    const auto report = check_error_bound(m, s, r, solve_exact_vi(m, 1e-13).values);
    EXPECT_EQ(report.epsilon, 0.0);
    EXPECT_NEAR(r[0], 1.0, 1e-12);
    EXPECT_NEAR(r[1], 0.0, 1e-12);
}

TEST(ErrorBound, ViolationReported) {
    const Mdp m = fixtures::two_state();
    const auto s = single_cell(2);
    const auto report = check_error_bound(m, s, Vector::Constant(1, 10.0), solve_exact_vi(m, 1e-13).values);
    ASSERT_FALSE(report.ok());
    EXPECT_GT(report.violations.front().margin, 0.0);
}

TEST(ErrorBound, RequiresBinaryAggregation) {
    const Mdp m = fixtures::two_state();
    const auto s = build_representative_states(3, {0, 2});
    MdpBuilder b = MdpBuilder::discounted(3, 0.5);
    for (std::size_t i = 0; i < 3; ++i) b.add_control(i), b.add_transition(i, 0, i, 1.0, 0.0);
    EXPECT_THROW(check_error_bound(b.build(), s, Vector::Zero(2), Vector::Zero(3)), ValidationError);
}

TEST(ErrorBound, RandomSuiteHasNoViolations) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        CounterRng rng(seed, 9);
        const std::size_t n = 3 + rng.below(18), q = 1 + rng.below(std::min<std::size_t>(5, n));
        const Mdp m = fixtures::random_discounted({.states = n, .max_controls = 3}, seed);
        const auto s = build_hard_aggregation(n, random_partition(n, q, rng));
        const auto report = check_error_bound(m, s, solve_aggregate_vi(m, s, 1e-12).r, solve_exact_vi(m, 1e-12).values);
        EXPECT_TRUE(report.ok()) << "seed " << seed;
    }
}

TEST(Properties, ContractionOfH) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = fixtures::random_discounted({.states = 9, .max_controls = 3}, seed);
        CounterRng rng(seed, 2);
        const auto s = build_hard_aggregation(9, random_partition(9, 4, rng));
        for (int k = 0; k < 50; ++k) {
            const Vector a = random_vector(rng, 4, 10.0), b = random_vector(rng, 4, 10.0);
            EXPECT_LE(sup_distance(aggregate_operator_H(m, s, a), aggregate_operator_H(m, s, b)),
                      m.discount() * sup_distance(a, b) + 1e-12);
        }
    }
}

TEST(Properties, PhiDPIsStochastic) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mdp m = fixtures::random_discounted({.states = 9, .max_controls = 3}, seed);
        CounterRng rng(seed, 4);
        const auto s = build_hard_aggregation(9, random_partition(9, 4, rng));
        const Matrix p = s.aggregation() * s.disaggregation() * transition_matrix(m, fixtures::random_policy(m, seed));
        EXPECT_GE(p.minCoeff(), 0.0);
        EXPECT_LE((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    }
}

TEST(SchemeValidation, RejectsInconsistentMatrices) {
    Matrix d(1, 2), phi(2, 1);
    d << 0.5, 0.5;
    phi << 1.0, 1.0;
    EXPECT_NO_THROW(AggregationScheme({{0, 1}}, d, phi));
    EXPECT_THROW(AggregationScheme({{0}}, d, phi), ValidationError);  // mass outside I_1
    phi << 1.0, 0.5;
    EXPECT_THROW(AggregationScheme({{0, 1}}, d, phi), ValidationError);
}
