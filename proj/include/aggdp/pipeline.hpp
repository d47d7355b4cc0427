#pragma once

#include "aggdp/aggregation.hpp"
#include "aggdp/error.hpp"
#include "aggdp/feature_net.hpp"
#include "aggdp/mdp.hpp"
#include "aggdp/scoring.hpp"
#include "aggdp/simulation.hpp"
#include "aggdp/ssp_bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace aggdp {

struct PipelineOptions {
    std::size_t cycles = 1;
    std::vector<std::size_t> widths{8, 1};  ///< hidden layer widths; the last one is the feature count s
    std::vector<Activation> activations;    ///< empty means tanh
    TrainOptions training{300, 0.02, 0.0, 0.0, 0};
    std::size_t q = 2;                      ///< intervals per feature dimension (kSingletonCells for one per value)
    std::size_t samples = 0;                ///< sampled states per cycle; 0 means 2n
    bool include_all_states = false;        ///< add every state to the sample set
    double target_noise = 0.0;              ///< standard deviation of Gaussian noise added to the J_mu targets
    bool freeze_features = false;           ///< train only in the first cycle and reuse its features
    double tol = 1e-10;                     ///< aggregate solve accuracy
    std::uint64_t seed = 0;
    std::optional<Policy> initial_policy;   ///< default: first control everywhere
};

struct CycleReport {
    Policy policy;            ///< policy evaluated in this cycle
    CostVector j_mu;          ///< its exact cost
    double train_loss = 0.0;  ///< final-epoch training loss (0 when features were frozen)
    std::size_t cells = 0;
    std::size_t sampled_states = 0;
    AggregateCosts r_star;
    double sup_difference = 0.0;  ///< max_i |(Phi r*)(i) - J_mu(i)|
    Policy next_policy;
    CostVector j_next;            ///< exact cost of next_policy
};

struct PipelineResult {
    Policy policy;
    std::vector<CycleReport> cycles;
};

namespace detail {

/// Standard normal draw by Box-Muller on the counter generator (portable across standard libraries).
inline double standard_normal(CounterRng& rng) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Half uniform states, half states along a simulated trajectory of mu (restarted uniformly on termination).
inline std::vector<std::size_t> explore_states(const Mdp& mdp, const Policy& mu, std::size_t count, bool all,
                                               CounterRng& rng) {
    const std::size_t n = mdp.num_states();
    std::set<std::size_t> picked;
    if (all)
        for (std::size_t i = 0; i < n; ++i) picked.insert(i);
    std::size_t at = static_cast<std::size_t>(rng.below(n));
    for (std::size_t k = 0; k < count; ++k) {
        if (k % 2 == 0) {
            picked.insert(static_cast<std::size_t>(rng.below(n)));
        } else {
            picked.insert(at);
            const auto t = sample_transition(mdp, at, mu[at], rng);
            at = t.target < 0 ? static_cast<std::size_t>(rng.below(n)) : static_cast<std::size_t>(t.target);
        }
    }
    return {picked.begin(), picked.end()};
}

/// Hard scheme whose disaggregation sets are the sampled states of each feature cell (uniform D);
/// every state, sampled or not, aggregates to the cell containing its feature vector or the nearest one.
inline AggregationScheme feature_scheme(const Matrix& features, const std::vector<std::size_t>& sampled, std::size_t q) {
    Matrix points(static_cast<Eigen::Index>(sampled.size()), features.cols());
    for (std::size_t k = 0; k < sampled.size(); ++k) points.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(sampled[k]));
    const ScoreGrid grid = ScoreGrid::quantile(points, std::vector<std::size_t>(static_cast<std::size_t>(features.cols()), q));
    const auto cells = static_cast<Eigen::Index>(grid.num_cells());
    const Eigen::Index n = features.rows();
    std::vector<std::vector<std::size_t>> sets(grid.num_cells());
    Matrix d = Matrix::Zero(cells, n);
    Matrix phi = Matrix::Zero(n, cells);
    for (std::size_t l = 0; l < grid.num_cells(); ++l) {
        for (std::size_t k : grid.members()[l]) sets[l].push_back(sampled[k]);
        for (std::size_t i : sets[l]) d(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i)) = 1.0 / static_cast<double>(sets[l].size());
    }
    std::vector<int> owner(static_cast<std::size_t>(n), -1);
    for (std::size_t l = 0; l < sets.size(); ++l)
        for (std::size_t i : sets[l]) owner[i] = static_cast<int>(l);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto l = owner[static_cast<std::size_t>(i)] >= 0 ? static_cast<std::size_t>(owner[static_cast<std::size_t>(i)])
                                                               : grid.locate_or_nearest(features.row(i).transpose());
        phi(i, static_cast<Eigen::Index>(l)) = 1.0;
    }
    return AggregationScheme(std::move(sets), std::move(d), std::move(phi));
}

inline AggregateSolveResult solve_any_aggregate(const Mdp& mdp, const AggregationScheme& scheme, double tol) {
    return mdp.is_ssp() ? ssp_aggregate_solve(mdp, scheme, tol) : solve_aggregate_vi(mdp, scheme, tol);
}

} // namespace detail

/**
 * Approximate PI with neural-network features: each cycle evaluates the current policy
 * exactly, trains the network on (state, J_mu) pairs, partitions the feature space over a
 * sampled state set, solves the aggregate problem and takes its greedy policy.
 */
inline PipelineResult run_pi_with_nn_features(const Mdp& mdp, const PipelineOptions& opt) {
    detail::require(opt.cycles >= 1, "pipeline needs at least one cycle");
    detail::require(opt.q >= 1, "q must be at least 1");
    detail::require(opt.target_noise >= 0.0, "target noise must be nonnegative");
    const std::size_t n = mdp.num_states();
    const NetworkSpec spec = NetworkSpec::one_hot(n, opt.widths, opt.activations);
    NetworkParams params = init_params(spec, opt.seed);
    CounterRng rng(opt.seed, 1);
    PipelineResult out;
    out.policy = opt.initial_policy ? *opt.initial_policy : first_control_policy(mdp);
    detail::check_policy(mdp, out.policy);
    Matrix features;
    for (std::size_t cycle = 0; cycle < opt.cycles; ++cycle) {
        CycleReport rep;
        rep.policy = out.policy;
        rep.j_mu = evaluate_policy(mdp, out.policy);
        if (cycle == 0 || !opt.freeze_features) {
            TrainingSet data;
            for (std::size_t i = 0; i < n; ++i) {
                const double noise = opt.target_noise > 0.0 ? opt.target_noise * detail::standard_normal(rng) : 0.0;
                data.push_back({i, rep.j_mu[static_cast<Eigen::Index>(i)] + noise});
            }
            TrainOptions train = opt.training;
            train.seed = opt.training.seed + cycle;
            const auto trained = train_incremental(spec, params, data, train);
            params = trained.params;
            rep.train_loss = trained.loss.empty() ? training_loss(spec, params, data) : trained.loss.back();
            features = extract_feature_mapping(spec, params);
        }
        const auto sampled = detail::explore_states(mdp, out.policy, opt.samples ? opt.samples : 2 * n,
                                                    opt.include_all_states, rng);
        const AggregationScheme scheme = detail::feature_scheme(features, sampled, opt.q);
        rep.sampled_states = sampled.size();
        rep.cells = scheme.num_aggregate();
        try {
            rep.r_star = detail::solve_any_aggregate(mdp, scheme, opt.tol).r;
        } catch (const NumericalError& e) {
            throw NumericalError("cycle " + std::to_string(cycle + 1) + ": " + e.what(), e.last_residual());
        }
        rep.sup_difference = sup_distance(lift_costs(scheme, rep.r_star), rep.j_mu);
        rep.next_policy = extract_policy(mdp, scheme, rep.r_star);
        rep.j_next = evaluate_policy(mdp, rep.next_policy);
        out.policy = rep.next_policy;
        out.cycles.push_back(std::move(rep));
    }
    return out;
}

inline constexpr std::size_t kFeatureIterationCellCap = 10'000;

struct FeatureIterationRound {
    std::size_t cells = 0;
    AggregateCosts r_star;
    CostVector lifted;        ///< Phi r*
    double sup_error = 0.0;   ///< max_i |(Phi r*)(i) - J*(i)|
};

struct FeatureIterationResult {
    std::vector<FeatureIterationRound> rounds;
    ScoreMatrix scores;  ///< scoring functions used in the last round, one column each
};

/**
 * Feature iteration: round t partitions the states by the product quantile grid of the current
 * scoring functions, solves the aggregate problem, then appends Phi r* as a new scoring function.
 */
inline FeatureIterationResult run_feature_iteration(const Mdp& mdp, const ScoringFunction& v, std::size_t rounds,
                                                    std::size_t q, double tol = 1e-12) {
    detail::require(rounds >= 1, "feature iteration needs at least one round");
    detail::require(static_cast<std::size_t>(v.size()) == mdp.num_states(), "scoring function has the wrong length");
    const CostVector j_star = solve_exact_vi(mdp, tol).values;
    FeatureIterationResult out;
    out.scores = v;
    for (std::size_t t = 0; t < rounds; ++t) {
        const ScoreGrid grid = ScoreGrid::quantile(out.scores, std::vector<std::size_t>(static_cast<std::size_t>(out.scores.cols()), q));
        std::size_t product = 1;
        for (const auto& b : grid.breakpoints()) product = std::min(product * (b.size() + 1), kFeatureIterationCellCap + 1);
        if (product > kFeatureIterationCellCap)
            throw ValidationError("feature iteration round " + std::to_string(t + 1) + " needs a grid of more than " +
                                  std::to_string(kFeatureIterationCellCap) + " cells; use a smaller q or fewer rounds");
        const ScorePartition part = detail::partition_from_grid(grid);
        FeatureIterationRound round;
        round.cells = part.scheme.num_aggregate();
        round.r_star = detail::solve_any_aggregate(mdp, part.scheme, tol).r;
        round.lifted = lift_costs(part.scheme, round.r_star);
        round.sup_error = sup_distance(round.lifted, j_star);
        if (t + 1 < rounds) {
            out.scores.conservativeResize(Eigen::NoChange, out.scores.cols() + 1);
            out.scores.col(out.scores.cols() - 1) = round.lifted;
        }
        out.rounds.push_back(std::move(round));
    }
    return out;
}

} // namespace aggdp
