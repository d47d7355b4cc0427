#pragma once

#include "aggdp/error.hpp"
#include "aggdp/linalg.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace aggdp {

/// Cost-to-go per state. Index s corresponds to original state s + 1; for SSP models the
/// termination state 0 is implicit and its cost is pinned to zero.
using CostVector = Vector;

/// Deterministic stationary policy: controls[s] indexes into U(s).
struct Policy {
    std::vector<std::size_t> controls;

    std::size_t size() const noexcept { return controls.size(); }
    std::size_t operator[](std::size_t s) const { return controls[s]; }
    std::size_t& operator[](std::size_t s) { return controls[s]; }
    bool operator==(const Policy&) const = default;
};

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr std::size_t kIterationCap = 1'000'000;

/// Relative tolerance below which two Q-factors count as tied (lowest control index wins).
inline constexpr double kTieTolerance = 1e-12;

/// One (state, control) pair: dense transition row over states 1..n plus, for SSP models,
/// the probability and cost of moving to the termination state.
struct ControlRow {
    Vector prob;
    Vector cost;
    double terminal_prob = 0.0;
    double terminal_cost = 0.0;
    double expected_cost = 0.0;
};

inline std::string state_label(std::size_t s, std::size_t u) {
    return "(i=" + std::to_string(s + 1) + ", u=" + std::to_string(u + 1) + ")";
}

/**
 * Finite-state model with dense per-(state, control) transition rows.
 *
 * A discounted model has discount in (0, 1). A stochastic shortest path model has
 * discount 1 and an absorbing, cost-free termination state that is not stored;
 * mass that leaves states 1..n goes there.
 *
 * Instances are immutable once built; construct them through MdpBuilder.
 */
class Mdp {
public:
    std::size_t num_states() const noexcept { return rows_.size(); }
    double discount() const noexcept { return discount_; }
    bool is_ssp() const noexcept { return ssp_; }
    std::size_t num_controls(std::size_t s) const { return rows_.at(s).size(); }
    const ControlRow& row(std::size_t s, std::size_t u) const { return rows_.at(s).at(u); }

    /// Expected one-stage cost plus discounted continuation under J: sum_j p_sj(u) (g + alpha J_j).
    double q_value(std::size_t s, std::size_t u, const Vector& continuation) const {
        const ControlRow& r = rows_[s][u];
        return r.expected_cost + discount_ * r.prob.dot(continuation);
    }

private:
    friend class MdpBuilder;
    Mdp(double discount, bool ssp, std::vector<std::vector<ControlRow>> rows)
        : discount_(discount), ssp_(ssp), rows_(std::move(rows)) {}

    double discount_;
    bool ssp_;
    std::vector<std::vector<ControlRow>> rows_;
};

/// Accumulates transitions, then validates and freezes them into an Mdp.
class MdpBuilder {
public:
    static constexpr std::ptrdiff_t kTerminal = -1;

    /// Discounted model with n states.
    static MdpBuilder discounted(std::size_t n, double discount) {
        detail::require(n >= 1, "MDP must have at least one state");
        detail::require(discount > 0.0 && discount < 1.0, "discount must lie in (0, 1)");
        return MdpBuilder(n, discount, false);
    }

    /// Stochastic shortest path model with states 1..n plus the implicit termination state.
    static MdpBuilder ssp(std::size_t n) {
        detail::require(n >= 1, "MDP must have at least one state");
        return MdpBuilder(n, 1.0, true);
    }

    std::size_t num_states() const noexcept { return rows_.size(); }

    /// Adds a control at state s and returns its index.
    std::size_t add_control(std::size_t s) {
        check_state(s);
        ControlRow row;
        row.prob = Vector::Zero(static_cast<Eigen::Index>(rows_.size()));
        row.cost = Vector::Zero(static_cast<Eigen::Index>(rows_.size()));
        rows_[s].push_back(std::move(row));
        return rows_[s].size() - 1;
    }

    /// Adds probability mass p from s to target under u with cost g. target == kTerminal
    /// denotes the SSP termination state. Repeated (s, u, target) entries accumulate
    /// probability; their cost becomes the probability-weighted average.
    MdpBuilder& add_transition(std::size_t s, std::size_t u, std::ptrdiff_t target, double p, double g) {
        check_state(s);
        detail::require(u < rows_[s].size(), "control index out of range at " + state_label(s, u));
        detail::require(std::isfinite(p) && std::isfinite(g), "non-finite transition data at " + state_label(s, u));
        detail::require(p >= 0.0, "negative probability at " + state_label(s, u));
        ControlRow& row = rows_[s][u];
        if (target == kTerminal) {
            detail::require(ssp_, "termination target is only valid in SSP models, at " + state_label(s, u));
            accumulate(row.terminal_prob, row.terminal_cost, p, g);
        } else {
            detail::require(target >= 0 && static_cast<std::size_t>(target) < rows_.size(),
                            "transition target out of range at " + state_label(s, u));
            const auto j = static_cast<Eigen::Index>(target);
            accumulate(row.prob[j], row.cost[j], p, g);
        }
        return *this;
    }

    /// Validates every invariant and returns the frozen model.
    Mdp build() const {
        std::vector<std::vector<ControlRow>> rows = rows_;
        for (std::size_t s = 0; s < rows.size(); ++s) {
            detail::require(!rows[s].empty(), "state " + std::to_string(s + 1) + " has an empty control set");
            for (std::size_t u = 0; u < rows[s].size(); ++u) {
                ControlRow& row = rows[s][u];
                const double total = row.prob.sum() + row.terminal_prob;
                if (std::abs(total - 1.0) > kProbabilityTolerance)
                    throw ValidationError("transition probabilities at " + state_label(s, u) + " sum to " +
                                          std::to_string(total) + ", expected 1");
                row.expected_cost = row.prob.dot(row.cost) + row.terminal_prob * row.terminal_cost;
            }
        }
        return Mdp(discount_, ssp_, std::move(rows));
    }

private:
    MdpBuilder(std::size_t n, double discount, bool ssp) : discount_(discount), ssp_(ssp), rows_(n) {}

    void check_state(std::size_t s) const {
        detail::require(s < rows_.size(), "state index " + std::to_string(s + 1) + " out of range");
    }

    static void accumulate(double& prob, double& cost, double p, double g) {
        const double total = prob + p;
        cost = total > 0.0 ? (prob * cost + p * g) / total : g;
        prob = total;
    }

    double discount_;
    bool ssp_;
    std::vector<std::vector<ControlRow>> rows_;
};

namespace detail {

inline void check_costs(const Mdp& mdp, const Vector& values, const char* what) {
    if (static_cast<std::size_t>(values.size()) != mdp.num_states())
        throw ValidationError(std::string(what) + ": expected " + std::to_string(mdp.num_states()) +
                              " entries, got " + std::to_string(values.size()));
}

inline void check_policy(const Mdp& mdp, const Policy& mu) {
    if (mu.size() != mdp.num_states())
        throw ValidationError("policy has " + std::to_string(mu.size()) + " entries, expected " +
                              std::to_string(mdp.num_states()));
    for (std::size_t s = 0; s < mu.size(); ++s)
        if (mu[s] >= mdp.num_controls(s)) throw ValidationError("infeasible policy control at " + state_label(s, mu[s]));
}

/// Index of the minimizing entry; an entry must beat the incumbent by the tie tolerance to win.
template <typename QFn>
std::size_t argmin_control(std::size_t count, QFn&& q, double* best_value = nullptr) {
    std::size_t best = 0;
    double best_q = q(std::size_t{0});
    for (std::size_t u = 1; u < count; ++u) {
        const double value = q(u);
        if (value < best_q - kTieTolerance * (1.0 + std::abs(best_q))) {
            best = u;
            best_q = value;
        }
    }
    if (best_value) *best_value = best_q;
    return best;
}

} // namespace detail

/// Expected stage costs g_mu.
inline Vector expected_costs(const Mdp& mdp, const Policy& mu) {
    detail::check_policy(mdp, mu);
    Vector g(static_cast<Eigen::Index>(mdp.num_states()));
    for (std::size_t s = 0; s < mdp.num_states(); ++s) g[static_cast<Eigen::Index>(s)] = mdp.row(s, mu[s]).expected_cost;
    return g;
}

/// Transition matrix P_mu over states 1..n (SSP termination mass is dropped, so rows may sum below 1).
inline Matrix transition_matrix(const Mdp& mdp, const Policy& mu) {
    detail::check_policy(mdp, mu);
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    Matrix p(n, n);
    for (Eigen::Index s = 0; s < n; ++s) p.row(s) = mdp.row(static_cast<std::size_t>(s), mu[static_cast<std::size_t>(s)]).prob.transpose();
    return p;
}

/// T_mu J.
inline CostVector bellman_policy(const Mdp& mdp, const Policy& mu, const CostVector& values) {
    detail::check_policy(mdp, mu);
    detail::check_costs(mdp, values, "bellman_policy");
    CostVector out(values.size());
    for (std::size_t s = 0; s < mdp.num_states(); ++s) out[static_cast<Eigen::Index>(s)] = mdp.q_value(s, mu[s], values);
    return out;
}

/// T J: componentwise minimum over controls.
inline CostVector bellman_optimal(const Mdp& mdp, const CostVector& values) {
    detail::check_costs(mdp, values, "bellman_optimal");
    CostVector out(values.size());
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        if (mdp.num_controls(s) == 0) throw ValidationError("empty control set at state " + std::to_string(s + 1));
        double best = 0.0;
        detail::argmin_control(mdp.num_controls(s), [&](std::size_t u) { return mdp.q_value(s, u, values); }, &best);
        out[static_cast<Eigen::Index>(s)] = best;
    }
    return out;
}

/// Greedy policy with respect to J; ties go to the lowest control index.
inline Policy policy_improve(const Mdp& mdp, const CostVector& values) {
    detail::check_costs(mdp, values, "policy_improve");
    Policy mu{std::vector<std::size_t>(mdp.num_states())};
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        mu[s] = detail::argmin_control(mdp.num_controls(s), [&](std::size_t u) { return mdp.q_value(s, u, values); });
    return mu;
}

struct ValueIterationResult {
    CostVector values;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Residual level at which value iteration stops: tol*(1-alpha)/alpha when discounted, tol for SSP.
inline double vi_stop_threshold(double discount, double tol) {
    return discount < 1.0 ? tol * (1.0 - discount) / discount : tol;
}

namespace detail {

/// Generic fixed-point driver shared by the exact and aggregate solvers.
template <typename Operator>
ValueIterationResult iterate_to_fixed_point(Operator&& op, Vector start, double threshold, const std::string& context,
                                            std::size_t cap = kIterationCap) {
    ValueIterationResult result;
    result.values = std::move(start);
    for (std::size_t k = 0; k <= cap; ++k) {
        Vector next = op(result.values);
        result.residual = sup_distance(next, result.values);
        if (!std::isfinite(result.residual))
            throw NumericalError(context + ": iterates diverged after " + std::to_string(k) + " iterations",
                                 result.residual);
        result.iterations = k + 1;
        result.values = std::move(next);
        if (result.residual <= threshold) return result;
    }
    throw NumericalError(context + ": no convergence within " + std::to_string(cap) + " iterations (last residual " +
                             std::to_string(result.residual) + ")",
                         result.residual);
}

} // namespace detail

/**
 * Value iteration from J = 0 (or a supplied start).
 *
 * Stops at the first k with ||T J_k - J_k|| at or below vi_stop_threshold and returns T J_k,
 * so for a discounted model ||T J_k - J*|| <= tol. `iterations` counts Bellman applications,
 * including the last one; `residual` is ||T J_k - J_k||.
 */
inline ValueIterationResult solve_exact_vi(const Mdp& mdp, double tol, std::optional<CostVector> start = std::nullopt) {
    detail::require(tol > 0.0, "solve_exact_vi: tol must be positive");
    Vector j0 = start ? *start : Vector::Zero(static_cast<Eigen::Index>(mdp.num_states()));
    detail::check_costs(mdp, j0, "solve_exact_vi");
    return detail::iterate_to_fixed_point([&](const Vector& j) { return bellman_optimal(mdp, j); }, std::move(j0),
                                          vi_stop_threshold(mdp.discount(), tol), "solve_exact_vi");
}

/// J_mu by a direct linear solve of (I - alpha P_mu) J = g_mu.
inline CostVector evaluate_policy(const Mdp& mdp, const Policy& mu) {
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    Matrix a = Matrix::Identity(n, n) - mdp.discount() * transition_matrix(mdp, mu);
    try {
        return solve_dense(a, expected_costs(mdp, mu), "evaluate_policy");
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (improper policy?)");
    }
}

struct PolicyIterationResult {
    Policy policy;
    CostVector values;
    std::size_t improvements = 0;
    std::vector<CostVector> trace;
};

/// Exact policy iteration: direct evaluation plus greedy improvement until the policy repeats.
inline PolicyIterationResult solve_exact_pi(const Mdp& mdp, Policy mu0) {
    detail::check_policy(mdp, mu0);
    PolicyIterationResult result;
    result.policy = std::move(mu0);
    for (;;) {
        result.values = evaluate_policy(mdp, result.policy);
        result.trace.push_back(result.values);
        Policy next = policy_improve(mdp, result.values);
        // keep the incumbent control when it is tied with the greedy one
        for (std::size_t s = 0; s < next.size(); ++s) {
            const double incumbent = mdp.q_value(s, result.policy[s], result.values);
            const double greedy = mdp.q_value(s, next[s], result.values);
            if (greedy >= incumbent - kTieTolerance * (1.0 + std::abs(incumbent))) next[s] = result.policy[s];
        }
        if (next == result.policy) return result;
        result.policy = std::move(next);
        ++result.improvements;
    }
}

/// Policy that picks control 0 everywhere.
inline Policy first_control_policy(const Mdp& mdp) { return Policy{std::vector<std::size_t>(mdp.num_states(), 0)}; }

} // namespace aggdp
