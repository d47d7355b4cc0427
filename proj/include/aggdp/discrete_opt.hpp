#pragma once

#include "aggdp/error.hpp"
#include "aggdp/linalg.hpp"
#include "aggdp/rng.hpp"
#include "aggdp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace aggdp {

/// A full or partial assignment (u_1, ..., u_m) of component values.
using Solution = std::vector<int>;

inline std::string describe_solution(std::span<const int> u) {
    std::string s = "(";
    for (std::size_t k = 0; k < u.size(); ++k) s += (k ? "," : "") + std::to_string(u[k]);
    return s + ")";
}

/**
 * minimize G(u) over u = (u_1, ..., u_N) with u_m drawn from a finite domain, subject to a
 * prefix feasibility predicate: u_{m+1} is admissible after (u_1..u_m) when the extended prefix
 * passes `feasible`. Every feasible prefix must extend to a feasible full solution.
 */
struct DiscreteOptProblem {
    std::string name;
    std::vector<std::vector<int>> domains;
    std::function<bool(std::span<const int>)> feasible;  ///< empty means every prefix is feasible
    std::function<double(std::span<const int>)> cost;

    std::size_t size() const noexcept { return domains.size(); }

    bool admits(std::span<const int> prefix) const { return !feasible || feasible(prefix); }
};

namespace detail {

inline void check_problem(const DiscreteOptProblem& p) {
    require(p.size() >= 1, "discrete problem needs at least one component");
    for (std::size_t m = 0; m < p.size(); ++m)
        require(!p.domains[m].empty(), "component " + std::to_string(m + 1) + " has an empty domain");
    require(static_cast<bool>(p.cost), "discrete problem has no cost function");
}

} // namespace detail

/// U_{m+1}(prefix): admissible values of the next component, in domain order.
inline std::vector<int> successors(const DiscreteOptProblem& p, const Solution& prefix) {
    detail::require(prefix.size() < p.size(), "a full solution has no successors");
    std::vector<int> out;
    Solution next = prefix;
    next.push_back(0);
    for (int v : p.domains[prefix.size()]) {
        next.back() = v;
        if (p.admits(next)) out.push_back(v);
    }
    return out;
}

/// True when every component lies in its domain and every prefix is admissible.
inline bool is_feasible(const DiscreteOptProblem& p, std::span<const int> u) {
    if (u.size() > p.size()) return false;
    for (std::size_t m = 0; m < u.size(); ++m) {
        const auto& dom = p.domains[m];
        if (std::find(dom.begin(), dom.end(), u[m]) == dom.end()) return false;
        if (!p.admits(u.first(m + 1))) return false;
    }
    return true;
}

/// G of a full solution, checking feasibility first.
inline double evaluate_solution(const DiscreteOptProblem& p, const Solution& u) {
    detail::require(u.size() == p.size() && is_feasible(p, u), "infeasible solution " + describe_solution(u));
    return p.cost(u);
}

/// All feasible m-solutions in lexicographic order of domain positions, or nullopt past `limit`.
inline std::optional<std::vector<Solution>> enumerate_stage(const DiscreteOptProblem& p, std::size_t m,
                                                            std::size_t limit = std::numeric_limits<std::size_t>::max()) {
    detail::require(m <= p.size(), "stage index beyond N");
    std::vector<Solution> level{Solution{}};
    for (std::size_t k = 0; k < m; ++k) {
        std::vector<Solution> next;
        for (const auto& prefix : level) {
            const auto succ = successors(p, prefix);
            if (succ.empty())
                throw ValidationError("feasible partial solution " + describe_solution(prefix) +
                                      " has no feasible extension in problem " + p.name);
            for (int v : succ) {
                if (next.size() == limit) return std::nullopt;
                Solution s = prefix;
                s.push_back(v);
                next.push_back(std::move(s));
            }
        }
        level = std::move(next);
    }
    return level;
}

/// Stage-graph view of the sequential reformulation: node counts per stage 0..N.
struct StageGraph {
    std::vector<std::size_t> nodes;  ///< nodes[m] = number of feasible m-solutions
};

inline StageGraph dp_reformulate(const DiscreteOptProblem& p, std::size_t limit = 100'000) {
    detail::check_problem(p);
    if (successors(p, {}).empty()) throw ValidationError("problem " + p.name + " has no feasible solutions");
    StageGraph g;
    for (std::size_t m = 0; m <= p.size(); ++m) {
        const auto level = enumerate_stage(p, m, limit);
        detail::require(level.has_value(), "stage " + std::to_string(m) + " exceeds " + std::to_string(limit) + " nodes");
        g.nodes.push_back(level->size());
    }
    return g;
}

/// Completion procedure: maps a feasible m-solution to a feasible N-solution extending it.
struct Heuristic {
    std::string name;
    std::function<Solution(const Solution&)> complete;
};

/// Completes with the first admissible value of each remaining component (all zeros on 0/1 domains).
inline Heuristic first_fit_heuristic(const DiscreteOptProblem& p) {
    return {"first-fit", [&p](const Solution& prefix) {
                Solution u = prefix;
                while (u.size() < p.size()) u.push_back(successors(p, u).front());
                return u;
            }};
}

/// Completes with the last admissible value of each remaining component (all ones on 0/1 domains).
inline Heuristic last_fit_heuristic(const DiscreteOptProblem& p) {
    return {"last-fit", [&p](const Solution& prefix) {
                Solution u = prefix;
                while (u.size() < p.size()) u.push_back(successors(p, u).back());
                return u;
            }};
}

/**
 * Greedy completion: each next component minimizes G of the first-fit completion of the
 * extended prefix (lowest value on ties). Its choice depends only on the current prefix, so
 * it is sequentially consistent.
 */
inline Heuristic greedy_heuristic(const DiscreteOptProblem& p) {
    return {"greedy", [&p](const Solution& prefix) {
                const Heuristic fill = first_fit_heuristic(p);
                Solution u = prefix;
                while (u.size() < p.size()) {
                    int best = 0;
                    double best_cost = std::numeric_limits<double>::infinity();
                    for (int v : successors(p, u)) {
                        Solution trial = u;
                        trial.push_back(v);
                        const double c = p.cost(fill.complete(trial));
                        if (c < best_cost || (c == best_cost && v < best)) {
                            best_cost = c;
                            best = v;
                        }
                    }
                    u.push_back(best);
                }
                return u;
            }};
}

/// Best full solution seen so far (fortified bookkeeping).
struct SolutionPool {
    std::optional<Solution> best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::size_t offered = 0;

    void offer(const Solution& u, double g) {
        ++offered;
        if (!best || g < best_cost || (g == best_cost && u < *best)) {
            best = u;
            best_cost = g;
        }
    }
};

namespace detail {

inline Solution run_heuristic(const DiscreteOptProblem& p, const Heuristic& h, const Solution& prefix) {
    Solution u = h.complete(prefix);
    const bool extends = u.size() == p.size() && std::equal(prefix.begin(), prefix.end(), u.begin());
    if (!extends || !is_feasible(p, u))
        throw ValidationError("heuristic '" + h.name + "' returned infeasible completion " + describe_solution(u) +
                              " from " + describe_solution(prefix));
    return u;
}

} // namespace detail

/// V(u_1..u_m): G of each heuristic's completion. Completions are offered to `pool` when given.
inline Vector score_partial(const DiscreteOptProblem& p, const std::vector<Heuristic>& heuristics, const Solution& prefix,
                            SolutionPool* pool = nullptr) {
    detail::require(!heuristics.empty(), "at least one heuristic is required");
    detail::require(is_feasible(p, prefix), "infeasible partial solution " + describe_solution(prefix));
    Vector v(static_cast<Eigen::Index>(heuristics.size()));
    for (std::size_t k = 0; k < heuristics.size(); ++k) {
        const Solution u = detail::run_heuristic(p, heuristics[k], prefix);
        const double g = p.cost(u);
        v[static_cast<Eigen::Index>(k)] = g;
        if (pool) pool->offer(u, g);
    }
    return v;
}

/// Memoized scoring with a shared fortification pool.
class Scorer {
public:
    Scorer(const DiscreteOptProblem& problem, std::vector<Heuristic> heuristics)
        : problem_(&problem), heuristics_(std::move(heuristics)) {
        detail::check_problem(problem);
        detail::require(!heuristics_.empty(), "at least one heuristic is required");
    }

    const DiscreteOptProblem& problem() const noexcept { return *problem_; }
    const std::vector<Heuristic>& heuristics() const noexcept { return heuristics_; }
    std::size_t dimension() const noexcept { return heuristics_.size(); }
    const SolutionPool& pool() const noexcept { return pool_; }
    std::size_t evaluations() const noexcept { return cache_.size(); }

    const Vector& score(const Solution& prefix) {
        auto it = cache_.find(prefix);
        if (it == cache_.end()) it = cache_.emplace(prefix, score_partial(*problem_, heuristics_, prefix, &pool_)).first;
        return it->second;
    }

    /// Scores many prefixes, running the heuristics on up to `jobs` threads; results are cached in input order.
    void score_all(const std::vector<Solution>& prefixes, std::size_t jobs) {
        std::vector<const Solution*> todo;
        for (const auto& s : prefixes)
            if (!cache_.contains(s)) todo.push_back(&s);
        if (jobs <= 1 || todo.size() < 2) {
            for (const auto* s : todo) score(*s);
            return;
        }
        const std::size_t s_count = heuristics_.size();
        std::vector<std::vector<Solution>> completions(todo.size(), std::vector<Solution>(s_count));
        std::vector<std::exception_ptr> errors(jobs);
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < todo.size(); i += jobs)
                        for (std::size_t k = 0; k < s_count; ++k)
                            completions[i][k] = detail::run_heuristic(*problem_, heuristics_[k], *todo[i]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : workers) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t i = 0; i < todo.size(); ++i) {
            Vector v(static_cast<Eigen::Index>(s_count));
            for (std::size_t k = 0; k < s_count; ++k) {
                const double g = problem_->cost(completions[i][k]);
                v[static_cast<Eigen::Index>(k)] = g;
                pool_.offer(completions[i][k], g);
            }
            cache_.emplace(*todo[i], std::move(v));
        }
    }

    /// Records a full solution produced outside the heuristics (construction, rollout).
    void offer(const Solution& u) { pool_.offer(u, evaluate_solution(*problem_, u)); }

private:
    const DiscreteOptProblem* problem_;
    std::vector<Heuristic> heuristics_;
    std::map<Solution, Vector> cache_;
    SolutionPool pool_;
};

struct SamplerOptions {
    std::size_t exhaustive_limit = 100'000;  ///< enumerate a stage exactly when it has at most this many nodes
    std::size_t samples = 2'000;             ///< random prefixes drawn per stage otherwise
    std::uint64_t seed = 0;
};

struct StageAggregationOptions {
    std::vector<std::size_t> q{kSingletonCells};  ///< intervals per score dimension, one entry per stage 1..N-1 or one for all
    SamplerOptions sampler;
    std::size_t jobs = 1;
};

/// Hard aggregation of the sampled m-solutions of one stage by a product grid over their scores.
struct StageCells {
    std::vector<Solution> members;
    ScoreMatrix scores;  ///< one row per member
    ScoreGrid grid;
    bool exhaustive = true;
};

/// Stage aggregations for m = 1..N-1 (stage m stored at index m-1).
struct StageAggregation {
    std::size_t components = 0;
    std::vector<StageCells> stages;

    const StageCells& stage(std::size_t m) const {
        detail::require(m >= 1 && m < components, "aggregate stages are 1..N-1");
        return stages[m - 1];
    }
};

/// Feasible m-solutions for stage m: exhaustive when small enough, else seeded random prefixes.
inline std::vector<Solution> sample_stage(const DiscreteOptProblem& p, std::size_t m, const SamplerOptions& opt,
                                          bool* exhaustive = nullptr) {
    if (auto all = enumerate_stage(p, m, opt.exhaustive_limit)) {
        if (exhaustive) *exhaustive = true;
        return std::move(*all);
    }
    if (exhaustive) *exhaustive = false;
    CounterRng rng(opt.seed, m + 1);
    std::vector<Solution> out;
    for (std::size_t k = 0; k < opt.samples; ++k) {
        Solution u;
        while (u.size() < m) {
            const auto succ = successors(p, u);
            detail::require(!succ.empty(), "feasible partial solution " + describe_solution(u) + " has no feasible extension");
            u.push_back(succ[static_cast<std::size_t>(rng.below(succ.size()))]);
        }
        out.push_back(std::move(u));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline StageAggregation build_stage_aggregation(Scorer& scorer, const StageAggregationOptions& opt = {}) {
    const DiscreteOptProblem& p = scorer.problem();
    const std::size_t n = p.size();
    detail::require(!opt.q.empty() && (opt.q.size() == 1 || opt.q.size() + 1 == n),
                    "give one q for all stages or one per stage 1..N-1");
    StageAggregation agg;
    agg.components = n;
    for (std::size_t m = 1; m < n; ++m) {
        const std::size_t q = opt.q.size() == 1 ? opt.q[0] : opt.q[m - 1];
        detail::require(q >= 1, "q must be at least 1");
        StageCells cells;
        cells.members = sample_stage(p, m, opt.sampler, &cells.exhaustive);
        detail::require(!cells.members.empty(), "stage " + std::to_string(m) + " has no sampled partial solutions");
        scorer.score_all(cells.members, opt.jobs);
        cells.scores.resize(static_cast<Eigen::Index>(cells.members.size()), static_cast<Eigen::Index>(scorer.dimension()));
        for (std::size_t i = 0; i < cells.members.size(); ++i)
            cells.scores.row(static_cast<Eigen::Index>(i)) = scorer.score(cells.members[i]).transpose();
        cells.grid = ScoreGrid::quantile(cells.scores, std::vector<std::size_t>(scorer.dimension(), q));
        agg.stages.push_back(std::move(cells));
    }
    return agg;
}

/// Aggregate costs r*_{lm} per stage (index m-1) and the root value min_{u_1} J~(u_1).
struct StageSolution {
    std::vector<std::vector<double>> r;
    double root = 0.0;
    std::size_t outside = 0;  ///< successor score vectors that fell outside every cell and went to the nearest centroid
};

namespace detail {

/// J~ of an (m+1)-solution: G at the last stage, otherwise r* of the cell holding its score vector.
inline double approximate_cost(Scorer& scorer, const StageAggregation& agg, const std::vector<std::vector<double>>& r,
                               const Solution& u, std::size_t* outside) {
    const DiscreteOptProblem& p = scorer.problem();
    if (u.size() == p.size()) return p.cost(u);
    bool out = false;
    const std::size_t cell = agg.stage(u.size()).grid.locate_or_nearest(scorer.score(u), &out);
    if (out && outside) ++*outside;
    return r[u.size() - 1][cell];
}

/// min over admissible next components of J~(prefix, v); returns the lowest minimizing v on ties.
inline std::pair<int, double> best_next(Scorer& scorer, const StageAggregation& agg,
                                        const std::vector<std::vector<double>>& r, const Solution& prefix,
                                        std::size_t* outside) {
    int best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    Solution next = prefix;
    next.push_back(0);
    for (int v : successors(scorer.problem(), prefix)) {
        next.back() = v;
        const double c = approximate_cost(scorer, agg, r, next, outside);
        if (c < best_cost || (c == best_cost && v < best)) {
            best_cost = c;
            best = v;
        }
    }
    return {best, best_cost};
}

} // namespace detail

/**
 * Backward DP over the aggregate stages with G as terminal cost: from cell (l, m) each member
 * is drawn with its uniform disaggregation probability, the next component is chosen
 * optimally, and the successor is mapped to its stage-(m+1) cell. Expectations are exact.
 */
inline StageSolution solve_stage_aggregate(Scorer& scorer, const StageAggregation& agg) {
    const std::size_t n = scorer.problem().size();
    detail::require(agg.components == n, "stage aggregation was built for a different problem");
    StageSolution sol;
    sol.r.resize(n > 0 ? n - 1 : 0);
    for (std::size_t m = n - 1; m >= 1; --m) {
        const StageCells& st = agg.stage(m);
        auto& rm = sol.r[m - 1];
        rm.assign(st.grid.num_cells(), 0.0);
        for (std::size_t l = 0; l < st.grid.num_cells(); ++l) {
            const auto& members = st.grid.members()[l];
            const double d = 1.0 / static_cast<double>(members.size());
            for (std::size_t i : members) rm[l] += d * detail::best_next(scorer, agg, sol.r, st.members[i], &sol.outside).second;
        }
    }
    sol.root = detail::best_next(scorer, agg, sol.r, {}, &sol.outside).second;
    return sol;
}

struct ConstructedSolution {
    Solution u;
    double cost = 0.0;
    std::size_t outside = 0;
};

/// One-step lookahead: u_{m+1} minimizes J~(u_1..u_m, u_{m+1}); ties go to the smallest value.
inline ConstructedSolution construct_solution(Scorer& scorer, const StageAggregation& agg, const StageSolution& sol) {
    const DiscreteOptProblem& p = scorer.problem();
    ConstructedSolution out;
    while (out.u.size() < p.size()) out.u.push_back(detail::best_next(scorer, agg, sol.r, out.u, &out.outside).first);
    out.cost = p.cost(out.u);
    scorer.offer(out.u);
    return out;
}

/// Two-step lookahead: minimize J~ over the next two components, keep the first; the last stage is one-step.
inline ConstructedSolution construct_solution_twostep(Scorer& scorer, const StageAggregation& agg,
                                                      const StageSolution& sol) {
    const DiscreteOptProblem& p = scorer.problem();
    detail::require(p.size() >= 2, "two-step lookahead needs N >= 2");
    ConstructedSolution out;
    while (out.u.size() + 1 < p.size()) {
        int best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        Solution one = out.u;
        one.push_back(0);
        for (int v : successors(p, out.u)) {
            one.back() = v;
            const double c = detail::best_next(scorer, agg, sol.r, one, &out.outside).second;
            if (c < best_cost || (c == best_cost && v < best)) {
                best_cost = c;
                best = v;
            }
        }
        out.u.push_back(best);
    }
    out.u.push_back(detail::best_next(scorer, agg, sol.r, out.u, &out.outside).first);
    out.cost = p.cost(out.u);
    scorer.offer(out.u);
    return out;
}

/// Rollout: u_{m+1} minimizes the best heuristic cost min_k V_k(u_1..u_m, u_{m+1}).
inline ConstructedSolution rollout_solve(Scorer& scorer) {
    const DiscreteOptProblem& p = scorer.problem();
    ConstructedSolution out;
    while (out.u.size() < p.size()) {
        int best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        Solution next = out.u;
        next.push_back(0);
        for (int v : successors(p, out.u)) {
            next.back() = v;
            const double c = scorer.score(next).minCoeff();
            if (c < best_cost || (c == best_cost && v < best)) {
                best_cost = c;
                best = v;
            }
        }
        out.u.push_back(best);
    }
    out.cost = p.cost(out.u);
    scorer.offer(out.u);
    return out;
}

/// The better of the constructed solution and the best pooled one (constructed wins ties).
inline ConstructedSolution fortify(const SolutionPool& pool, const ConstructedSolution& constructed) {
    if (pool.best && pool.best_cost < constructed.cost) return {*pool.best, pool.best_cost, constructed.outside};
    return constructed;
}

/// Brute-force optimum over all feasible N-solutions (lowest solution on ties).
inline ConstructedSolution brute_force_optimum(const DiscreteOptProblem& p) {
    const auto all = enumerate_stage(p, p.size());
    detail::require(all.has_value() && !all->empty(), "problem " + p.name + " has no feasible solutions");
    ConstructedSolution best{{}, std::numeric_limits<double>::infinity(), 0};
    for (const auto& u : *all) {
        const double g = p.cost(u);
        if (g < best.cost) best = {u, g, 0};
    }
    return best;
}

// Built-in instances.

/// Two binary components with G(0,0)=0, G(0,1)=1, G(1,0)=3, G(1,1)=2.
inline DiscreteOptProblem tiny_g_problem() {
    return {"tiny-g", {{0, 1}, {0, 1}}, {}, [](std::span<const int> u) {
                static constexpr double table[2][2] = {{0.0, 1.0}, {3.0, 2.0}};
                return table[u[0]][u[1]];
            }};
}

/// Unconstrained problem with G given as a dense table over all tuples (last component fastest).
inline DiscreteOptProblem table_problem(std::string name, std::vector<std::size_t> arity, std::vector<double> table) {
    std::size_t total = 1;
    for (std::size_t a : arity) {
        detail::require(a >= 1, "component arity must be positive");
        total *= a;
    }
    detail::require(!arity.empty(), "table problem needs at least one component");
    detail::require(table.size() == total, "cost table has " + std::to_string(table.size()) + " entries, expected " +
                                               std::to_string(total));
    std::vector<std::vector<int>> domains;
    for (std::size_t a : arity) {
        std::vector<int> d(a);
        for (std::size_t v = 0; v < a; ++v) d[v] = static_cast<int>(v);
        domains.push_back(std::move(d));
    }
    return {std::move(name), std::move(domains), {}, [arity, table = std::move(table)](std::span<const int> u) {
                std::size_t index = 0;
                for (std::size_t m = 0; m < arity.size(); ++m) index = index * arity[m] + static_cast<std::size_t>(u[m]);
                return table[index];
            }};
}

/// Random table problem: arity drawn from {min_arity..max_arity} per component, G uniform in [0, 1).
inline DiscreteOptProblem random_table_problem(std::size_t n, std::size_t min_arity, std::size_t max_arity,
                                               std::uint64_t seed) {
    detail::require(n >= 1 && min_arity >= 1 && min_arity <= max_arity, "invalid random table shape");
    CounterRng rng(seed);
    std::vector<std::size_t> arity(n);
    std::size_t total = 1;
    for (auto& a : arity) {
        a = min_arity + static_cast<std::size_t>(rng.below(max_arity - min_arity + 1));
        total *= a;
    }
    std::vector<double> table(total);
    for (double& g : table) g = rng.uniform();
    return table_problem("random-table-" + std::to_string(seed), std::move(arity), std::move(table));
}

/// 0/1 knapsack as minimization of minus the packed value; prefixes must respect the capacity.
inline DiscreteOptProblem knapsack_problem(std::vector<double> weights, std::vector<double> values, double capacity) {
    detail::require(!weights.empty() && weights.size() == values.size(), "knapsack needs matching weights and values");
    for (double w : weights) detail::require(w >= 0.0 && std::isfinite(w), "knapsack weights must be finite and nonnegative");
    detail::require(capacity >= 0.0, "knapsack capacity must be nonnegative");
    const std::size_t n = weights.size();
    auto feasible = [weights, capacity](std::span<const int> u) {
        double load = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) load += u[k] * weights[k];
        return load <= capacity + 1e-12;
    };
    auto cost = [values](std::span<const int> u) {
        double v = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) v += u[k] * values[k];
        return -v;
    };
    return {"knapsack", std::vector<std::vector<int>>(n, {0, 1}), std::move(feasible), std::move(cost)};
}

/// Symmetric TSP over an explicit distance matrix; the tour starts at city 0 and component m is
/// the m-th city visited after it.
inline DiscreteOptProblem tsp_problem(Matrix distances) {
    const auto n = static_cast<std::size_t>(distances.rows());
    detail::require(n >= 2 && distances.cols() == distances.rows(), "TSP needs a square matrix with at least 2 cities");
    detail::require(distances.allFinite(), "TSP distances must be finite");
    detail::require((distances - distances.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "TSP distances must be symmetric");
    std::vector<int> cities(n - 1);
    for (std::size_t c = 1; c < n; ++c) cities[c - 1] = static_cast<int>(c);
    auto feasible = [](std::span<const int> u) {
        const int last = u.back();
        return std::find(u.begin(), u.end() - 1, last) == u.end() - 1;
    };
    auto cost = [d = std::move(distances)](std::span<const int> u) {
        double len = 0.0;
        int prev = 0;
        for (int c : u) {
            len += d(prev, c);
            prev = c;
        }
        return len + d(prev, 0);
    };
    return {"tsp", std::vector<std::vector<int>>(n - 1, cities), std::move(feasible), std::move(cost)};
}

/// Nearest-unvisited-city completion for tsp_problem instances built from `distances`.
inline Heuristic nearest_neighbor_heuristic(const DiscreteOptProblem& p, Matrix distances) {
    return {"nearest-neighbor", [&p, d = std::move(distances)](const Solution& prefix) {
                Solution u = prefix;
                while (u.size() < p.size()) {
                    const int at = u.empty() ? 0 : u.back();
                    int best = -1;
                    for (int c : successors(p, u))
                        if (best < 0 || d(at, c) < d(at, best)) best = c;
                    u.push_back(best);
                }
                return u;
            }};
}

/// Value-density greedy completion for knapsack_problem instances: packs the remaining items in
/// decreasing value per unit weight, skipping any that no longer fit.
inline Heuristic density_greedy_heuristic(const DiscreteOptProblem& p, std::vector<double> weights,
                                          std::vector<double> values, double capacity) {
    return {"density-greedy", [&p, weights = std::move(weights), values = std::move(values), capacity](const Solution& prefix) {
                const std::size_t m = prefix.size();
                double load = 0.0;
                for (std::size_t k = 0; k < m; ++k) load += prefix[k] * weights[k];
                std::vector<std::size_t> order;
                for (std::size_t k = m; k < p.size(); ++k) order.push_back(k);
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return values[a] * weights[b] > values[b] * weights[a];
                });
                Solution u = prefix;
                u.resize(p.size(), 0);
                for (std::size_t k : order) {
                    if (load + weights[k] <= capacity + 1e-12) {
                        u[k] = 1;
                        load += weights[k];
                    }
                }
                return u;
            }};
}

} // namespace aggdp
