#include "aggdp/discrete_opt.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

using namespace aggdp;

namespace {

/// Optimal cost-to-go of every feasible prefix, by exhaustive recursion over the feasibility predicate.
double brute_cost_to_go(const DiscreteOptProblem& p, Solution& prefix, std::map<Solution, double>* memo = nullptr) {
    if (prefix.size() == p.size()) return p.cost(prefix);
    double best = std::numeric_limits<double>::infinity();
    for (int v : p.domains[prefix.size()]) {
        prefix.push_back(v);
        if (!p.feasible || p.feasible(prefix)) best = std::min(best, brute_cost_to_go(p, prefix, memo));
        prefix.pop_back();
    }
    if (memo) (*memo)[prefix] = best;
    return best;
}

double brute_optimum(const DiscreteOptProblem& p) {
    Solution empty;
    return brute_cost_to_go(p, empty);
}

bool feasible_full(const DiscreteOptProblem& p, const Solution& u) {
    if (u.size() != p.size()) return false;
    for (std::size_t m = 1; m <= u.size(); ++m) {
        const auto& dom = p.domains[m - 1];
        if (std::find(dom.begin(), dom.end(), u[m - 1]) == dom.end()) return false;
        if (p.feasible && !p.feasible(std::span<const int>(u).first(m))) return false;
    }
    return true;
}

DiscreteOptProblem binary_pair(std::function<bool(std::span<const int>)> feasible = {}) {
    return {"pair", {{0, 1}, {0, 1}}, std::move(feasible), [](std::span<const int> u) { return double(u[0] + 2 * u[1]); }};
}

StageAggregationOptions with_q(std::size_t q) {
    StageAggregationOptions opt;
    opt.q = {q};
    return opt;
}

struct Instance {
    DiscreteOptProblem problem;
    std::vector<Heuristic> heuristics;
};

/// Random table instance with N in [2, 8], binary or ternary components.
DiscreteOptProblem random_instance(std::uint64_t seed) {
    CounterRng rng(seed, 99);
    const std::size_t n = 2 + static_cast<std::size_t>(rng.below(7));
    return random_table_problem(n, 2, 3, seed);
}

} // namespace

TEST(DpReformulate, StageCounts) {
    EXPECT_EQ(dp_reformulate(binary_pair()).nodes, (std::vector<std::size_t>{1, 2, 4}));
    const auto distinct = binary_pair([](std::span<const int> u) { return u.size() < 2 || u[1] != u[0]; });
    EXPECT_EQ(dp_reformulate(distinct).nodes, (std::vector<std::size_t>{1, 2, 2}));
    EXPECT_EQ(successors(distinct, {0}), (std::vector<int>{1}));
    EXPECT_EQ(successors(distinct, {1}), (std::vector<int>{0}));
}

TEST(DpReformulate, RejectsInfeasibleRootAndDeadEnds) {
    EXPECT_THROW(dp_reformulate(binary_pair([](std::span<const int>) { return false; })), ValidationError);
    const auto dead = binary_pair([](std::span<const int> u) { return u.size() < 2 || u[0] == 0; });
    EXPECT_THROW(dp_reformulate(dead), ValidationError);
}

TEST(DpReformulate, TinyGOptimum) {
    const auto p = tiny_g_problem();
    EXPECT_EQ(brute_force_optimum(p).cost, 0.0);
    EXPECT_EQ(brute_force_optimum(p).u, (Solution{0, 0}));
    EXPECT_EQ(brute_optimum(p), 0.0);
}

TEST(ScorePartial, FullSolutionScoresItsCost) {
    const auto p = tiny_g_problem();
    const std::vector<Heuristic> hs{first_fit_heuristic(p), last_fit_heuristic(p), greedy_heuristic(p)};
    for (const Solution& u : {Solution{0, 0}, Solution{0, 1}, Solution{1, 0}, Solution{1, 1}})
        EXPECT_EQ(score_partial(p, hs, u), Vector::Constant(3, p.cost(u)));
}

TEST(ScorePartial, TinyGTable) {
    const auto p = tiny_g_problem();
    EXPECT_EQ(score_partial(p, {first_fit_heuristic(p)}, {1}), Vector::Constant(1, 3.0));
    const Vector v = score_partial(p, {first_fit_heuristic(p), last_fit_heuristic(p)}, {0});
    EXPECT_EQ(v[0], 0.0);
    EXPECT_EQ(v[1], 1.0);
}

TEST(ScorePartial, RecordsCompletionsInPool) {
    const auto p = tiny_g_problem();
    SolutionPool pool;
    score_partial(p, {last_fit_heuristic(p)}, {1}, &pool);
    ASSERT_TRUE(pool.best.has_value());
    EXPECT_EQ(*pool.best, (Solution{1, 1}));
    EXPECT_EQ(pool.best_cost, 2.0);
}

TEST(ScorePartial, RejectsBadHeuristic) {
    const auto p = tiny_g_problem();
    const Heuristic wrong{"drops-prefix", [](const Solution&) { return Solution{1, 1}; }};
    try {
        score_partial(p, {wrong}, {0});
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("drops-prefix"), std::string::npos);
    }
    const Heuristic out_of_domain{"bad-value", [](const Solution& u) { return Solution{u[0], 7}; }};
    EXPECT_THROW(score_partial(p, {out_of_domain}, {0}), ValidationError);
    EXPECT_THROW(score_partial(p, {}, {0}), ValidationError);
}

TEST(StageAggregation, TinyGCells) {
    const auto p = tiny_g_problem();
    Scorer scorer(p, {first_fit_heuristic(p)});
    const auto two = build_stage_aggregation(scorer, with_q(2));
    ASSERT_EQ(two.stages.size(), 1u);
    const auto& st = two.stage(1);
    ASSERT_EQ(st.grid.num_cells(), 2u);
    EXPECT_EQ(st.members[st.grid.members()[0][0]], (Solution{0}));
    EXPECT_EQ(st.members[st.grid.members()[1][0]], (Solution{1}));
    const auto one = build_stage_aggregation(scorer, with_q(1));
    EXPECT_EQ(one.stage(1).grid.num_cells(), 1u);
    EXPECT_EQ(one.stage(1).grid.members()[0].size(), 2u);
}

TEST(StageAggregation, SingletonCellsHaveZeroSpread) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_instance(seed);
        Scorer scorer(p, {first_fit_heuristic(p), last_fit_heuristic(p)});
        const auto agg = build_stage_aggregation(scorer);
        for (const auto& st : agg.stages) {
            EXPECT_TRUE(st.exhaustive);
            for (const auto& cell : st.grid.members())
                for (std::size_t i : cell) EXPECT_EQ(st.scores.row(static_cast<Eigen::Index>(i)), st.scores.row(static_cast<Eigen::Index>(cell[0])));
        }
    }
}

TEST(StageAggregation, RejectsBadQ) {
    const auto p = random_table_problem(4, 2, 2, 1);
    Scorer scorer(p, {first_fit_heuristic(p)});
    StageAggregationOptions opt;
    opt.q = {2, 2};
    EXPECT_THROW(build_stage_aggregation(scorer, opt), ValidationError);
    opt.q = {0};
    EXPECT_THROW(build_stage_aggregation(scorer, opt), ValidationError);
    opt.q = {1, 2, 4};
    EXPECT_NO_THROW(build_stage_aggregation(scorer, opt));
}

TEST(SolveStageAggregate, TinyGSingleCell) {
    const auto p = tiny_g_problem();
    Scorer scorer(p, {first_fit_heuristic(p)});
    const auto agg = build_stage_aggregation(scorer, with_q(1));
    const auto sol = solve_stage_aggregate(scorer, agg);
    // 0.5 min(G(0,0), G(0,1)) + 0.5 min(G(1,0), G(1,1))
    EXPECT_DOUBLE_EQ(sol.r[0][0], 0.5 * 0.0 + 0.5 * 2.0);
    EXPECT_DOUBLE_EQ(sol.root, 1.0);
    EXPECT_EQ(sol.outside, 0u);
}

TEST(SolveStageAggregate, SingletonCellsGiveExactCostToGo) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = random_instance(seed);
        std::map<Solution, double> exact;
        Solution empty;
        const double opt = brute_cost_to_go(p, empty, &exact);
        Scorer scorer(p, {first_fit_heuristic(p)});
        const auto agg = build_stage_aggregation(scorer);
        const auto sol = solve_stage_aggregate(scorer, agg);
        EXPECT_DOUBLE_EQ(sol.root, opt);
        for (std::size_t m = 1; m < p.size(); ++m) {
            const auto& st = agg.stage(m);
            for (std::size_t i = 0; i < st.members.size(); ++i)
                EXPECT_DOUBLE_EQ(sol.r[m - 1][st.grid.assignment()[i]], exact.at(st.members[i])) << "seed " << seed;
        }
    }
}

TEST(SolveStageAggregate, SingleComponent) {
    const auto p = table_problem("one", {4}, {0.7, 0.2, 0.9, 0.2});
    Scorer scorer(p, {first_fit_heuristic(p)});
    const auto agg = build_stage_aggregation(scorer);
    EXPECT_TRUE(agg.stages.empty());
    const auto sol = solve_stage_aggregate(scorer, agg);
    EXPECT_EQ(sol.root, 0.2);
    const auto built = construct_solution(scorer, agg, sol);
    EXPECT_EQ(built.u, (Solution{1}));
    EXPECT_EQ(built.cost, 0.2);
}

TEST(ConstructSolution, TinyG) {
    const auto p = tiny_g_problem();
    for (std::size_t q : {kSingletonCells, std::size_t{1}}) {
        Scorer scorer(p, {first_fit_heuristic(p)});
        const auto agg = build_stage_aggregation(scorer, with_q(q));
        const auto sol = solve_stage_aggregate(scorer, agg);
        const auto built = construct_solution(scorer, agg, sol);
        EXPECT_EQ(built.u, (Solution{0, 0}));
        EXPECT_EQ(built.cost, 0.0);
        const auto two = construct_solution_twostep(scorer, agg, sol);
        EXPECT_EQ(two.u, (Solution{0, 0}));
    }
}

TEST(ConstructSolution, ExactUnderZeroQuantization) {
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const auto p = random_instance(seed);
        Scorer scorer(p, {greedy_heuristic(p), last_fit_heuristic(p)});
        const auto agg = build_stage_aggregation(scorer);
        const auto sol = solve_stage_aggregate(scorer, agg);
        const auto built = construct_solution(scorer, agg, sol);
        EXPECT_TRUE(feasible_full(p, built.u));
        EXPECT_DOUBLE_EQ(built.cost, brute_optimum(p)) << "seed " << seed;
        const auto two = construct_solution_twostep(scorer, agg, sol);
        EXPECT_DOUBLE_EQ(two.cost, built.cost) << "seed " << seed;
        EXPECT_LE(fortify(scorer.pool(), built).cost, built.cost);
    }
}

TEST(ConstructSolution, TwoStepOnTwoComponentsIsExhaustive) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = random_table_problem(2, 2, 4, 500 + seed);
        Scorer scorer(p, {first_fit_heuristic(p)});
        const auto agg = build_stage_aggregation(scorer, with_q(1));
        const auto sol = solve_stage_aggregate(scorer, agg);
        EXPECT_DOUBLE_EQ(construct_solution_twostep(scorer, agg, sol).cost, brute_optimum(p));
    }
    const auto single = table_problem("one", {3}, {1, 0, 2});
    Scorer scorer(single, {first_fit_heuristic(single)});
    const auto agg = build_stage_aggregation(scorer);
    EXPECT_THROW(construct_solution_twostep(scorer, agg, solve_stage_aggregate(scorer, agg)), ValidationError);
}

TEST(ConstructSolution, FeasibleOnCoarseCells) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = random_instance(700 + seed);
        Scorer scorer(p, {first_fit_heuristic(p), last_fit_heuristic(p)});
        for (std::size_t q : {1u, 2u, 3u}) {
            const auto agg = build_stage_aggregation(scorer, with_q(q));
            const auto sol = solve_stage_aggregate(scorer, agg);
            EXPECT_TRUE(feasible_full(p, construct_solution(scorer, agg, sol).u));
            if (p.size() >= 2) EXPECT_TRUE(feasible_full(p, construct_solution_twostep(scorer, agg, sol).u));
        }
    }
}

TEST(ConstructSolution, MedianCostImprovesWithRefinement) {
    const std::vector<std::size_t> qs{1, 2, 4, kSingletonCells};
    std::vector<std::vector<double>> costs(qs.size());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = random_instance(900 + seed);
        for (std::size_t k = 0; k < qs.size(); ++k) {
            Scorer scorer(p, {first_fit_heuristic(p), last_fit_heuristic(p)});
            const auto agg = build_stage_aggregation(scorer, with_q(qs[k]));
            costs[k].push_back(construct_solution(scorer, agg, solve_stage_aggregate(scorer, agg)).cost);
        }
    }
    std::vector<double> medians;
    for (auto& c : costs) {
        std::sort(c.begin(), c.end());
        medians.push_back(0.5 * (c[9] + c[10]));
    }
    for (std::size_t k = 1; k < medians.size(); ++k) EXPECT_LE(medians[k], medians[k - 1]) << "q index " << k;
}

TEST(Rollout, TinyG) {
    const auto p = tiny_g_problem();
    Scorer scorer(p, {first_fit_heuristic(p)});
    const auto r = rollout_solve(scorer);
    EXPECT_EQ(r.u, (Solution{0, 0}));
    EXPECT_EQ(r.cost, 0.0);
}

TEST(Rollout, ExactHeuristicOnOneComponent) {
    const auto p = table_problem("one", {4}, {0.5, 0.1, 0.3, 0.1});
    Scorer scorer(p, {first_fit_heuristic(p)});
    EXPECT_EQ(rollout_solve(scorer).u, (Solution{1}));
}

TEST(Rollout, ImprovesOnSequentiallyConsistentHeuristic) {
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const auto p = random_instance(seed);
        const Heuristic greedy = greedy_heuristic(p);
        const double base = p.cost(greedy.complete({}));
        Scorer scorer(p, {greedy});
        const auto r = rollout_solve(scorer);
        EXPECT_TRUE(feasible_full(p, r.u));
        EXPECT_LE(r.cost, base) << "seed " << seed;
    }
}

TEST(Fortify, KeepsBetterOfPoolAndConstructed) {
    SolutionPool empty;
    const ConstructedSolution c{{1, 0}, 3.0, 0};
    EXPECT_EQ(fortify(empty, c).u, c.u);
    SolutionPool pool;
    pool.offer({0, 1}, 1.0);
    EXPECT_EQ(fortify(pool, c).u, (Solution{0, 1}));
    const ConstructedSolution optimal{{0, 0}, 0.0, 0};
    EXPECT_EQ(fortify(pool, optimal).u, optimal.u);
}

TEST(Fortify, TinyGPoolRecoversOptimum) {
    const auto p = tiny_g_problem();
    Scorer scorer(p, {first_fit_heuristic(p), last_fit_heuristic(p)});
    build_stage_aggregation(scorer, with_q(1));
    const ConstructedSolution poor{{1, 1}, 2.0, 0};
    const auto best = fortify(scorer.pool(), poor);
    EXPECT_EQ(best.cost, 0.0);
    EXPECT_EQ(best.u, (Solution{0, 0}));
}

TEST(Instances, KnapsackExactAndFeasible) {
    const std::vector<double> w{3, 4, 2, 5, 1, 4}, v{4, 5, 3, 6, 1, 5};
    const auto p = knapsack_problem(w, v, 9.0);
    const auto best = brute_force_optimum(p);
    EXPECT_DOUBLE_EQ(best.cost, brute_optimum(p));
    Scorer scorer(p, {density_greedy_heuristic(p, w, v, 9.0), first_fit_heuristic(p)});
    const auto agg = build_stage_aggregation(scorer);
    const auto built = construct_solution(scorer, agg, solve_stage_aggregate(scorer, agg));
    EXPECT_TRUE(feasible_full(p, built.u));
    EXPECT_LE(fortify(scorer.pool(), built).cost, built.cost);
    const auto r = rollout_solve(scorer);
    EXPECT_TRUE(feasible_full(p, r.u));
    EXPECT_LE(r.cost, p.cost(density_greedy_heuristic(p, w, v, 9.0).complete({})));
}

TEST(Instances, TspExactAndFeasible) {
    CounterRng rng(17);
    const std::size_t n = 6;
    Matrix xy(n, 2);
    for (auto& x : xy.reshaped()) x = rng.uniform();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d(i, j) = (xy.row(i) - xy.row(j)).norm();
    const auto p = tsp_problem(d);
    EXPECT_EQ(dp_reformulate(p).nodes.back(), 120u);
    Scorer scorer(p, {nearest_neighbor_heuristic(p, d)});
    const auto agg = build_stage_aggregation(scorer);
    const auto built = construct_solution(scorer, agg, solve_stage_aggregate(scorer, agg));
    EXPECT_TRUE(feasible_full(p, built.u));
    EXPECT_NEAR(built.cost, brute_optimum(p), 1e-12);
    const auto r = rollout_solve(scorer);
    EXPECT_LE(r.cost, p.cost(nearest_neighbor_heuristic(p, d).complete({})) + 1e-12);
}

TEST(Instances, RejectMalformedInput) {
    EXPECT_THROW(knapsack_problem({1, 2}, {1}, 3), ValidationError);
    EXPECT_THROW(tsp_problem(Matrix::Zero(1, 1)), ValidationError);
    EXPECT_THROW(tsp_problem((Matrix(2, 2) << 0, 1, 2, 0).finished()), ValidationError);
    EXPECT_THROW(table_problem("t", {2, 2}, {1, 2, 3}), ValidationError);
}

TEST(Sampler, RandomStagesWhenLarge) {
    const auto p = random_table_problem(8, 3, 3, 42);
    SamplerOptions opt;
    opt.exhaustive_limit = 50;
    opt.samples = 40;
    opt.seed = 9;
    bool exhaustive = true;
    const auto s = sample_stage(p, 6, opt, &exhaustive);
    EXPECT_FALSE(exhaustive);
    EXPECT_LE(s.size(), 40u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
    for (const auto& u : s) EXPECT_EQ(u.size(), 6u);
    EXPECT_EQ(sample_stage(p, 6, opt), s);

    Scorer scorer(p, {first_fit_heuristic(p), last_fit_heuristic(p)});
    StageAggregationOptions agg_opt;
    agg_opt.q = {3};
    agg_opt.sampler = opt;
    const auto agg = build_stage_aggregation(scorer, agg_opt);
    const auto sol = solve_stage_aggregate(scorer, agg);
    const auto built = construct_solution(scorer, agg, sol);
    EXPECT_TRUE(feasible_full(p, built.u));
}

TEST(Scorer, ParallelScoringMatchesSerial) {
    const auto p = random_table_problem(7, 2, 3, 5);
    StageAggregationOptions serial = with_q(3), parallel = with_q(3);
    parallel.jobs = 3;
    Scorer a(p, {greedy_heuristic(p), last_fit_heuristic(p)});
    Scorer b(p, {greedy_heuristic(p), last_fit_heuristic(p)});
    const auto sa = solve_stage_aggregate(a, build_stage_aggregation(a, serial));
    const auto sb = solve_stage_aggregate(b, build_stage_aggregation(b, parallel));
    EXPECT_EQ(sa.r, sb.r);
    EXPECT_EQ(a.pool().best, b.pool().best);
}
