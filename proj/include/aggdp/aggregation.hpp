#pragma once

#include "aggdp/error.hpp"
#include "aggdp/linalg.hpp"
#include "aggdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace aggdp {

/// Per-aggregate-state costs r (the unknown of the aggregate Bellman equation).
using AggregateCosts = Vector;

/// Feature of each original state. Discrete labels and real vectors both fit as rows.
using FeatureMatrix = Matrix;

inline constexpr double kSchemeTolerance = 1e-12;

/**
 * Aggregation architecture: q aggregate states with disjoint disaggregation sets I_l,
 * a q x n disaggregation matrix D and an n x q aggregation matrix Phi.
 *
 * Invariants, checked on construction:
 *  - rows of D and Phi are probability distributions;
 *  - d_li = 0 for i outside I_l;
 *  - phi_jl = 1 for j in I_l;
 *  - the sets I_l are nonempty and pairwise disjoint;
 *  - D Phi = I.
 */
class AggregationScheme {
public:
    AggregationScheme(std::vector<std::vector<std::size_t>> disagg_sets, Matrix d, Matrix phi)
        : sets_(std::move(disagg_sets)), d_(std::move(d)), phi_(std::move(phi)) {
        validate();
    }

    std::size_t num_aggregate() const noexcept { return sets_.size(); }
    std::size_t num_states() const noexcept { return static_cast<std::size_t>(phi_.rows()); }
    const std::vector<std::vector<std::size_t>>& disagg_sets() const noexcept { return sets_; }
    const Matrix& disaggregation() const noexcept { return d_; }
    const Matrix& aggregation() const noexcept { return phi_; }

    /// True when every Phi entry is 0 or 1.
    bool has_binary_aggregation() const {
        return (phi_.array() == 0.0 || phi_.array() == 1.0).all();
    }

    /// True when the disaggregation sets partition 1..n (hard aggregation).
    bool is_hard() const {
        std::size_t covered = 0;
        for (const auto& set : sets_) covered += set.size();
        return covered == num_states() && has_binary_aggregation();
    }

    /// Aggregate state l with phi_jl = 1, for binary Phi.
    std::size_t cell_of(std::size_t j) const {
        for (Eigen::Index l = 0; l < phi_.cols(); ++l)
            if (phi_(static_cast<Eigen::Index>(j), l) == 1.0) return static_cast<std::size_t>(l);
        throw ValidationError("state " + std::to_string(j + 1) + " has no unit aggregation probability");
    }

private:
    void validate() const {
        const auto q = static_cast<Eigen::Index>(sets_.size());
        const Eigen::Index n = phi_.rows();
        detail::require(q >= 1, "aggregation scheme needs at least one aggregate state");
        detail::require(d_.rows() == q && d_.cols() == n && phi_.cols() == q,
                        "aggregation scheme: D must be q x n and Phi n x q");
        std::vector<int> owner(static_cast<std::size_t>(n), -1);
        for (Eigen::Index l = 0; l < q; ++l) {
            const auto& set = sets_[static_cast<std::size_t>(l)];
            detail::require(!set.empty(), "disaggregation set " + std::to_string(l + 1) + " is empty");
            for (std::size_t i : set) {
                detail::require(i < static_cast<std::size_t>(n), "disaggregation set member out of range");
                detail::require(owner[i] < 0, "state " + std::to_string(i + 1) + " belongs to two disaggregation sets");
                owner[i] = static_cast<int>(l);
            }
        }
        auto check_row = [](const auto& row, const std::string& what) {
            detail::require((row.array() >= 0.0).all(), what + " has a negative entry");
            detail::require(std::abs(row.sum() - 1.0) <= kSchemeTolerance, what + " does not sum to 1");
        };
        for (Eigen::Index l = 0; l < q; ++l) {
            check_row(d_.row(l), "disaggregation row " + std::to_string(l + 1));
            for (Eigen::Index i = 0; i < n; ++i)
                detail::require(d_(l, i) == 0.0 || owner[static_cast<std::size_t>(i)] == l,
                                "disaggregation row " + std::to_string(l + 1) + " puts mass outside its set");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            check_row(phi_.row(j), "aggregation row " + std::to_string(j + 1));
            const int l = owner[static_cast<std::size_t>(j)];
            if (l >= 0)
                detail::require(phi_(j, l) == 1.0, "aggregation row " + std::to_string(j + 1) +
                                                       " must be the unit vector of its disaggregation set");
        }
        const Matrix product = d_ * phi_;
        detail::require((product - Matrix::Identity(q, q)).cwiseAbs().maxCoeff() <= kSchemeTolerance,
                        "D Phi differs from the identity");
    }

    std::vector<std::vector<std::size_t>> sets_;
    Matrix d_;
    Matrix phi_;
};

/// Hard aggregation over a partition of 0..n-1. `weights`, when given, holds one
/// distribution per set (aligned with the set's member order); default is uniform.
inline AggregationScheme build_hard_aggregation(std::size_t n, std::vector<std::vector<std::size_t>> partition,
                                                const std::optional<std::vector<std::vector<double>>>& weights = std::nullopt) {
    const auto q = static_cast<Eigen::Index>(partition.size());
    Matrix d = Matrix::Zero(q, static_cast<Eigen::Index>(n));
    Matrix phi = Matrix::Zero(static_cast<Eigen::Index>(n), q);
    std::vector<char> seen(n, 0);
    for (Eigen::Index l = 0; l < q; ++l) {
        const auto& set = partition[static_cast<std::size_t>(l)];
        detail::require(!set.empty(), "partition cell " + std::to_string(l + 1) + " is empty");
        if (weights) {
            detail::require(weights->size() == partition.size() && (*weights)[static_cast<std::size_t>(l)].size() == set.size(),
                            "disaggregation weights must match the partition shape");
        }
        for (std::size_t k = 0; k < set.size(); ++k) {
            const std::size_t i = set[k];
            detail::require(i < n, "partition member " + std::to_string(i + 1) + " out of range");
            detail::require(!seen[i], "state " + std::to_string(i + 1) + " appears in two partition cells");
            seen[i] = 1;
            d(l, static_cast<Eigen::Index>(i)) =
                weights ? (*weights)[static_cast<std::size_t>(l)][k] : 1.0 / static_cast<double>(set.size());
            phi(static_cast<Eigen::Index>(i), l) = 1.0;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        detail::require(seen[i], "state " + std::to_string(i + 1) + " is not covered by the partition");
    return AggregationScheme(std::move(partition), std::move(d), std::move(phi));
}

/// Singleton cells: D = Phi = I.
inline AggregationScheme identity_scheme(std::size_t n) {
    std::vector<std::vector<std::size_t>> cells(n);
    for (std::size_t i = 0; i < n; ++i) cells[i] = {i};
    return build_hard_aggregation(n, std::move(cells));
}

/// Contiguous cells of near-equal size over 0..n-1 (the first n % q cells get one extra state).
inline AggregationScheme contiguous_scheme(std::size_t n, std::size_t q) {
    detail::require(q >= 1 && q <= n, "contiguous_scheme: need 1 <= q <= n");
    std::vector<std::vector<std::size_t>> cells(q);
    std::size_t next = 0;
    for (std::size_t l = 0; l < q; ++l) {
        const std::size_t size = n / q + (l < n % q ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) cells[l].push_back(next++);
    }
    return build_hard_aggregation(n, std::move(cells));
}

/**
 * Representative states i_1..i_q with I_l = {i_l} and d_{l,i_l} = 1.
 *
 * `interp` supplies the n x q aggregation rows. When absent, a state between two
 * representatives (in index order) interpolates linearly between the nearest pair;
 * a state outside the span of the representatives gets the uniform row.
 */
inline AggregationScheme build_representative_states(std::size_t n, const std::vector<std::size_t>& reps,
                                                     const std::optional<Matrix>& interp = std::nullopt) {
    const auto q = static_cast<Eigen::Index>(reps.size());
    detail::require(q >= 1, "need at least one representative state");
    std::vector<std::vector<std::size_t>> sets;
    Matrix d = Matrix::Zero(q, static_cast<Eigen::Index>(n));
    for (Eigen::Index l = 0; l < q; ++l) {
        const std::size_t rep = reps[static_cast<std::size_t>(l)];
        detail::require(rep < n, "representative state out of range");
        sets.push_back({rep});
        d(l, static_cast<Eigen::Index>(rep)) = 1.0;
    }
    Matrix phi;
    if (interp) {
        phi = *interp;
        detail::require(phi.rows() == static_cast<Eigen::Index>(n) && phi.cols() == q, "interpolation matrix must be n x q");
        for (Eigen::Index j = 0; j < phi.rows(); ++j) {
            detail::require((phi.row(j).array() >= 0.0).all() && std::abs(phi.row(j).sum() - 1.0) <= kSchemeTolerance,
                            "interpolation row " + std::to_string(j + 1) + " is not a probability distribution");
        }
    } else {
        phi = Matrix::Zero(static_cast<Eigen::Index>(n), q);
        std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
        for (Eigen::Index l = 0; l < q; ++l) order[static_cast<std::size_t>(l)] = l;
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return reps[static_cast<std::size_t>(a)] < reps[static_cast<std::size_t>(b)];
        });
        for (std::size_t j = 0; j < n; ++j) {
            const auto row = static_cast<Eigen::Index>(j);
            const auto exact = std::find(reps.begin(), reps.end(), j);
            if (exact != reps.end()) {
                phi(row, exact - reps.begin()) = 1.0;
                continue;
            }
            std::optional<Eigen::Index> below, above;
            for (Eigen::Index l : order) {
                const std::size_t rep = reps[static_cast<std::size_t>(l)];
                if (rep < j) below = l;
                if (rep > j && !above) above = l;
            }
            if (below && above) {
                const double lo = static_cast<double>(reps[static_cast<std::size_t>(*below)]);
                const double hi = static_cast<double>(reps[static_cast<std::size_t>(*above)]);
                const double t = (static_cast<double>(j) - lo) / (hi - lo);
                phi(row, *below) = 1.0 - t;
                phi(row, *above) = t;
            } else {
                phi.row(row).setConstant(1.0 / static_cast<double>(q));
            }
        }
    }
    return AggregationScheme(std::move(sets), std::move(d), std::move(phi));
}

namespace detail {

inline void check_scheme(const Mdp& mdp, const AggregationScheme& scheme) {
    require(scheme.num_states() == mdp.num_states(), "aggregation scheme and MDP disagree on the state count");
}

inline void check_aggregate(const AggregationScheme& scheme, const Vector& r, const char* what) {
    if (static_cast<std::size_t>(r.size()) != scheme.num_aggregate())
        throw ValidationError(std::string(what) + ": expected " + std::to_string(scheme.num_aggregate()) +
                              " aggregate costs, got " + std::to_string(r.size()));
}

/// Applies D to a per-state quantity computed only where D has support.
template <typename StateValue>
Vector disaggregate_average(const AggregationScheme& scheme, StateValue&& value) {
    const Matrix& d = scheme.disaggregation();
    Vector out = Vector::Zero(d.rows());
    for (Eigen::Index i = 0; i < d.cols(); ++i) {
        if (d.col(i).isZero()) continue;
        out += d.col(i) * value(static_cast<std::size_t>(i));
    }
    return out;
}

} // namespace detail

/// Phi r: the piecewise-constant / interpolated cost approximation on original states.
inline CostVector lift_costs(const AggregationScheme& scheme, const AggregateCosts& r) {
    detail::check_aggregate(scheme, r, "lift_costs");
    return scheme.aggregation() * r;
}

/// (H r)(l) = sum_i d_li min_u sum_j p_ij(u) (g(i,u,j) + alpha sum_m phi_jm r_m).
inline AggregateCosts aggregate_operator_H(const Mdp& mdp, const AggregationScheme& scheme, const AggregateCosts& r) {
    detail::check_scheme(mdp, scheme);
    detail::check_aggregate(scheme, r, "aggregate_operator_H");
    const Vector lifted = scheme.aggregation() * r;
    return detail::disaggregate_average(scheme, [&](std::size_t i) {
        double best = 0.0;
        detail::argmin_control(mdp.num_controls(i), [&](std::size_t u) { return mdp.q_value(i, u, lifted); }, &best);
        return best;
    });
}

/// H_mu r = D T_mu Phi r.
inline AggregateCosts aggregate_policy_operator(const Mdp& mdp, const AggregationScheme& scheme, const Policy& mu,
                                                const AggregateCosts& r) {
    detail::check_scheme(mdp, scheme);
    detail::check_policy(mdp, mu);
    detail::check_aggregate(scheme, r, "aggregate_policy_operator");
    const Vector lifted = scheme.aggregation() * r;
    return detail::disaggregate_average(scheme, [&](std::size_t i) { return mdp.q_value(i, mu[i], lifted); });
}

/// Exact linear data of the aggregate policy-evaluation equation r = b + alpha A r,
/// with b = D g_mu and A = D P_mu Phi. The system C r = b uses C = I - alpha A.
struct AggregatePolicySystem {
    Matrix transition;  ///< D P_mu Phi
    Vector cost;        ///< D g_mu
    Matrix c;           ///< I - alpha D P_mu Phi
};

inline AggregatePolicySystem aggregate_policy_system(const Mdp& mdp, const AggregationScheme& scheme, const Policy& mu) {
    detail::check_scheme(mdp, scheme);
    AggregatePolicySystem sys;
    const Matrix& d = scheme.disaggregation();
    sys.transition = d * transition_matrix(mdp, mu) * scheme.aggregation();
    sys.cost = d * expected_costs(mdp, mu);
    sys.c = Matrix::Identity(d.rows(), d.rows()) - mdp.discount() * sys.transition;
    return sys;
}

struct AggregateSolveResult {
    AggregateCosts r;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Fixed-point iteration r <- H r from r0 (default 0) until ||H r - r|| <= tol.
inline AggregateSolveResult solve_aggregate_vi(const Mdp& mdp, const AggregationScheme& scheme, double tol,
                                               std::optional<AggregateCosts> r0 = std::nullopt) {
    detail::require(tol > 0.0, "solve_aggregate_vi: tol must be positive");
    detail::check_scheme(mdp, scheme);
    Vector start = r0 ? *r0 : Vector::Zero(static_cast<Eigen::Index>(scheme.num_aggregate()));
    detail::check_aggregate(scheme, start, "solve_aggregate_vi");
    auto vi = detail::iterate_to_fixed_point([&](const Vector& r) { return aggregate_operator_H(mdp, scheme, r); },
                                             std::move(start), tol, "solve_aggregate_vi");
    return {std::move(vi.values), vi.iterations, vi.residual};
}

/// One-step lookahead policy against Phi r; ties go to the lowest control index.
inline Policy extract_policy(const Mdp& mdp, const AggregationScheme& scheme, const AggregateCosts& r) {
    detail::check_scheme(mdp, scheme);
    return policy_improve(mdp, lift_costs(scheme, r));
}

inline std::string describe_policy(const Policy& mu) {
    std::string out = "[";
    for (std::size_t s = 0; s < mu.size(); ++s) out += (s ? "," : "") + std::to_string(mu[s] + 1);
    return out + "]";
}

/// Fixed point of H_mu by dense iteration; residual target 1e-12 scaled as in value iteration.
inline AggregateCosts evaluate_aggregate_policy(const Mdp& mdp, const AggregationScheme& scheme, const Policy& mu,
                                                std::optional<AggregateCosts> r0 = std::nullopt) {
    Vector start = r0 ? *r0 : Vector::Zero(static_cast<Eigen::Index>(scheme.num_aggregate()));
    try {
        return detail::iterate_to_fixed_point(
                   [&](const Vector& r) { return aggregate_policy_operator(mdp, scheme, mu, r); }, std::move(start),
                   vi_stop_threshold(mdp.discount(), 1e-12), "aggregate policy evaluation")
            .values;
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " for policy " + describe_policy(mu), e.last_residual());
    }
}

struct AggregationPiResult {
    Policy policy;
    AggregateCosts r;
    std::vector<AggregateCosts> trace;  ///< r^0, r^1, ... one entry per evaluated policy
    std::vector<Policy> policies;       ///< mu^0, mu^1, ... aligned with trace
};

/**
 * Aggregation-based policy iteration: evaluate r^k = D T_{mu^k} Phi r^k exactly, then
 * improve by one-step lookahead against Phi r^k. Stops when the policy repeats, or when
 * consecutive r agree within 1e-12.
 */
inline AggregationPiResult aggregation_policy_iteration(const Mdp& mdp, const AggregationScheme& scheme, Policy mu0,
                                                        std::size_t max_iterations = kIterationCap) {
    detail::check_scheme(mdp, scheme);
    detail::check_policy(mdp, mu0);
    AggregationPiResult result;
    Policy mu = std::move(mu0);
    std::optional<AggregateCosts> warm;
    for (std::size_t k = 0; k < max_iterations; ++k) {
        AggregateCosts r = evaluate_aggregate_policy(mdp, scheme, mu, warm);
        const bool r_repeated = !result.trace.empty() && sup_distance(r, result.trace.back()) <= 1e-12;
        result.trace.push_back(r);
        result.policies.push_back(mu);
        Policy next = extract_policy(mdp, scheme, r);
        if (next == mu || r_repeated) {
            result.policy = std::move(mu);
            result.r = std::move(r);
            return result;
        }
        warm = std::move(r);
        mu = std::move(next);
    }
    throw NumericalError("aggregation_policy_iteration: no termination within " + std::to_string(max_iterations) +
                         " policies");
}

struct BoundViolation {
    std::size_t state = 0;
    std::size_t cell = 0;
    double gap = 0.0;
    double margin = 0.0;  ///< gap minus allowed bound (positive means violated)
};

struct BoundReport {
    double epsilon = 0.0;
    double bound = 0.0;
    double max_gap = 0.0;
    std::vector<BoundViolation> violations;

    bool ok() const noexcept { return violations.empty(); }
};

namespace detail {

/// Cells I^_l = {j : phi_jl = 1}; requires 0/1 aggregation probabilities.
inline std::vector<std::vector<std::size_t>> unit_aggregation_cells(const AggregationScheme& scheme) {
    require(scheme.has_binary_aggregation(), "error bound requires 0/1 aggregation probabilities");
    std::vector<std::vector<std::size_t>> cells(scheme.num_aggregate());
    for (std::size_t j = 0; j < scheme.num_states(); ++j) cells[scheme.cell_of(j)].push_back(j);
    return cells;
}

inline double max_within_cell_variation(const std::vector<std::vector<std::size_t>>& cells, const Vector& values) {
    double eps = 0.0;
    for (const auto& cell : cells) {
        if (cell.empty()) continue;
        double lo = values[static_cast<Eigen::Index>(cell.front())], hi = lo;
        for (std::size_t i : cell) {
            lo = std::min(lo, values[static_cast<Eigen::Index>(i)]);
            hi = std::max(hi, values[static_cast<Eigen::Index>(i)]);
        }
        eps = std::max(eps, hi - lo);
    }
    return eps;
}

inline BoundReport bound_report(const std::vector<std::vector<std::size_t>>& cells, const Vector& r_star,
                                const Vector& j_star, double epsilon, double factor, double tol) {
    BoundReport report;
    report.epsilon = epsilon;
    report.bound = factor * epsilon;
    for (std::size_t l = 0; l < cells.size(); ++l) {
        for (std::size_t i : cells[l]) {
            const double gap = std::abs(j_star[static_cast<Eigen::Index>(i)] - r_star[static_cast<Eigen::Index>(l)]);
            report.max_gap = std::max(report.max_gap, gap);
            if (gap > report.bound + tol) report.violations.push_back({i, l, gap, gap - report.bound});
        }
    }
    return report;
}

} // namespace detail

/**
 * Checks |J*(i) - r*_l| <= eps / (1 - alpha) + tol for every i with phi_il = 1, where eps is the
 * largest variation of J* within those cells. For hard aggregation the cells are the
 * disaggregation sets; for any scheme with 0/1 aggregation probabilities they are
 * {j : phi_jl = 1}, which also covers the nearest-neighbour style generalization.
 */
inline BoundReport check_error_bound(const Mdp& mdp, const AggregationScheme& scheme, const AggregateCosts& r_star,
                                     const CostVector& j_star, double tol = 1e-9) {
    detail::check_scheme(mdp, scheme);
    detail::check_aggregate(scheme, r_star, "check_error_bound");
    detail::check_costs(mdp, j_star, "check_error_bound");
    detail::require(mdp.discount() < 1.0, "check_error_bound needs a discounted model");
    const auto cells = detail::unit_aggregation_cells(scheme);
    const double eps = detail::max_within_cell_variation(cells, j_star);
    return detail::bound_report(cells, r_star, j_star, eps, 1.0 / (1.0 - mdp.discount()), tol);
}

} // namespace aggdp
