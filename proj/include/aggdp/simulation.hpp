#pragma once

#include "aggdp/aggregation.hpp"
#include "aggdp/error.hpp"
#include "aggdp/linalg.hpp"
#include "aggdp/mdp.hpp"
#include "aggdp/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace aggdp {

/// One simulated transition. `target` is -1 when the SSP termination state was reached.
struct SampleTransition {
    std::size_t state = 0;
    std::size_t control = 0;
    std::ptrdiff_t target = 0;
    double cost = 0.0;
};

/// Draws j ~ p_{s.}(u) and returns the transition with its stage cost.
inline SampleTransition sample_transition(const Mdp& mdp, std::size_t s, std::size_t u, CounterRng& rng) {
    const ControlRow& row = mdp.row(s, u);
    const double x = rng.uniform();
    double acc = 0.0;
    std::ptrdiff_t last = -1;
    for (Eigen::Index j = 0; j < row.prob.size(); ++j) {
        if (row.prob[j] <= 0.0) continue;
        acc += row.prob[j];
        last = j;
        if (x < acc) return {s, u, j, row.cost[j]};
    }
    if (row.terminal_prob > 0.0) return {s, u, -1, row.terminal_cost};
    // rounding left x just above the accumulated mass
    return {s, u, last, row.cost[last]};
}

enum class Sampling { State, Aggregate };

/// Stepsize rule indexed by the number of earlier updates of the same component.
struct Stepsize {
    enum class Kind { Harmonic, Constant } kind = Kind::Harmonic;
    double value = 1.0;

    static Stepsize harmonic() { return {}; }
    static Stepsize constant(double gamma) {
        detail::require(gamma > 0.0 && gamma <= 1.0, "constant stepsize must lie in (0, 1]");
        return {Kind::Constant, gamma};
    }

    double operator()(std::size_t previous_visits) const {
        return kind == Kind::Harmonic ? 1.0 / (1.0 + static_cast<double>(previous_visits)) : value;
    }
};

/// Sample transitions with their importance weights 1/xi_i (state sampling) or
/// 1/(zeta_l d_li) (aggregate sampling).
struct SampleBatch {
    std::vector<SampleTransition> transitions;
    std::vector<double> weights;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> uniform_weights(std::size_t count) {
    return std::vector<double>(count, 1.0 / static_cast<double>(count));
}

inline std::vector<double> disaggregation_row(const AggregationScheme& scheme, std::size_t l) {
    const auto row = scheme.disaggregation().row(static_cast<Eigen::Index>(l));
    std::vector<double> out(static_cast<std::size_t>(row.size()));
    for (Eigen::Index i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = row[i];
    return out;
}

inline void check_distribution(const std::vector<double>& w, std::size_t size, const char* what) {
    require(w.size() == size, std::string(what) + " has the wrong length");
    double total = 0.0;
    for (double x : w) {
        require(std::isfinite(x) && x >= 0.0, std::string(what) + " has a negative or non-finite entry");
        total += x;
    }
    require(std::abs(total - 1.0) <= 1e-12, std::string(what) + " does not sum to 1");
}

} // namespace detail

/**
 * Draws M transitions under policy mu. With state sampling, i ~ xi (default uniform over
 * all states); with aggregate sampling, l ~ zeta (default uniform) and then i ~ d_l.
 */
inline SampleBatch sample_policy_transitions(const Mdp& mdp, const AggregationScheme& scheme, const Policy& mu,
                                             std::size_t samples, Sampling sampling, std::uint64_t seed,
                                             std::optional<std::vector<double>> distribution = std::nullopt) {
    detail::check_scheme(mdp, scheme);
    detail::check_policy(mdp, mu);
    detail::require(samples >= 1, "sample count must be at least 1");
    const Matrix& d = scheme.disaggregation();
    SampleBatch batch;
    batch.seed = seed;
    batch.transitions.reserve(samples);
    batch.weights.reserve(samples);
    CounterRng rng(seed);
    if (sampling == Sampling::State) {
        const auto xi = distribution ? *distribution : detail::uniform_weights(mdp.num_states());
        detail::check_distribution(xi, mdp.num_states(), "state sampling distribution");
        for (Eigen::Index i = 0; i < d.cols(); ++i)
            detail::require(xi[static_cast<std::size_t>(i)] > 0.0 || d.col(i).isZero(),
                            "state " + std::to_string(i + 1) +
                                " carries disaggregation mass but has zero sampling probability");
        for (std::size_t m = 0; m < samples; ++m) {
            const std::size_t i = rng.discrete(xi);
            batch.transitions.push_back(sample_transition(mdp, i, mu[i], rng));
            batch.weights.push_back(1.0 / xi[i]);
        }
    } else {
        const auto zeta = distribution ? *distribution : detail::uniform_weights(scheme.num_aggregate());
        detail::check_distribution(zeta, scheme.num_aggregate(), "aggregate sampling distribution");
        for (std::size_t l = 0; l < zeta.size(); ++l)
            detail::require(zeta[l] > 0.0, "aggregate state " + std::to_string(l + 1) + " has zero sampling probability");
        std::vector<std::vector<double>> rows(scheme.num_aggregate());
        for (std::size_t l = 0; l < rows.size(); ++l) rows[l] = detail::disaggregation_row(scheme, l);
        for (std::size_t m = 0; m < samples; ++m) {
            const std::size_t l = rng.discrete(zeta);
            const std::size_t i = rng.discrete(rows[l]);
            batch.transitions.push_back(sample_transition(mdp, i, mu[i], rng));
            batch.weights.push_back(1.0 / (zeta[l] * rows[l][i]));
        }
    }
    return batch;
}

struct LstdResult {
    AggregateCosts r;
    Matrix c;
    Vector b;
};

/// C_M = I - (alpha/M) sum w_m d(i_m) phi(j_m)',  b_M = (1/M) sum w_m d(i_m) g_m, then r = C_M^-1 b_M.
inline LstdResult lstd0_from_batch(const Mdp& mdp, const AggregationScheme& scheme, const SampleBatch& batch) {
    detail::check_scheme(mdp, scheme);
    detail::require(!batch.transitions.empty() && batch.transitions.size() == batch.weights.size(),
                    "sample batch is empty or inconsistent");
    const auto q = static_cast<Eigen::Index>(scheme.num_aggregate());
    const Matrix& d = scheme.disaggregation();
    const Matrix& phi = scheme.aggregation();
    Matrix acc_c = Matrix::Zero(q, q);
    Vector acc_b = Vector::Zero(q);
    for (std::size_t m = 0; m < batch.transitions.size(); ++m) {
        const SampleTransition& t = batch.transitions[m];
        const auto col = d.col(static_cast<Eigen::Index>(t.state));
        acc_b += batch.weights[m] * t.cost * col;
        if (t.target >= 0) acc_c += batch.weights[m] * col * phi.row(t.target);
    }
    const double inv_m = 1.0 / static_cast<double>(batch.transitions.size());
    LstdResult out;
    out.c = Matrix::Identity(q, q) - mdp.discount() * inv_m * acc_c;
    out.b = inv_m * acc_b;
    try {
        out.r = solve_dense(out.c, out.b, "lstd0_evaluate");
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + "; try a larger sample count M");
    }
    return out;
}

/// Aggregate LSTD(0) policy evaluation from M simulated transitions.
inline LstdResult lstd0_evaluate(const Mdp& mdp, const AggregationScheme& scheme, const Policy& mu, std::size_t samples,
                                 Sampling sampling, std::uint64_t seed,
                                 std::optional<std::vector<double>> distribution = std::nullopt) {
    return lstd0_from_batch(mdp, scheme,
                            sample_policy_transitions(mdp, scheme, mu, samples, sampling, seed, std::move(distribution)));
}

namespace detail {

/// Visits 0..count-1 once per cycle, in an order reshuffled every cycle.
class CyclicJitterSchedule {
public:
    CyclicJitterSchedule(std::size_t count, CounterRng& rng) : order_(count), rng_(rng) {
        for (std::size_t k = 0; k < count; ++k) order_[k] = k;
    }

    std::size_t next() {
        if (pos_ == 0) rng_.shuffle(order_);
        const std::size_t out = order_[pos_];
        pos_ = (pos_ + 1) % order_.size();
        return out;
    }

private:
    std::vector<std::size_t> order_;
    CounterRng& rng_;
    std::size_t pos_ = 0;
};

} // namespace detail

struct AsyncViResult {
    AggregateCosts r;
    std::vector<std::size_t> visits;
    double initial_residual = 0.0;
    double final_residual = 0.0;
};

/**
 * Asynchronous stochastic VI on the aggregate problem. Each step picks an aggregate state l
 * (every l once per cycle, cycle order reshuffled), draws i ~ d_l and sets
 * r_l <- (1 - gamma) r_l + gamma min_u sum_j p_ij(u) (g + alpha (Phi r)_j).
 */
inline AsyncViResult async_stochastic_vi(const Mdp& mdp, const AggregationScheme& scheme, std::size_t steps,
                                         Stepsize stepsize, std::uint64_t seed,
                                         std::optional<AggregateCosts> r0 = std::nullopt) {
    detail::check_scheme(mdp, scheme);
    const std::size_t q = scheme.num_aggregate();
    AsyncViResult out;
    out.r = r0 ? *r0 : Vector::Zero(static_cast<Eigen::Index>(q));
    detail::check_aggregate(scheme, out.r, "async_stochastic_vi");
    out.visits.assign(q, 0);
    out.initial_residual = sup_distance(aggregate_operator_H(mdp, scheme, out.r), out.r);
    std::vector<std::vector<double>> rows(q);
    for (std::size_t l = 0; l < q; ++l) rows[l] = detail::disaggregation_row(scheme, l);
    CounterRng rng(seed);
    detail::CyclicJitterSchedule schedule(q, rng);
    const Matrix& phi = scheme.aggregation();
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t l = schedule.next();
        const std::size_t i = rng.discrete(rows[l]);
        const Vector lifted = phi * out.r;
        double best = 0.0;
        detail::argmin_control(mdp.num_controls(i), [&](std::size_t u) { return mdp.q_value(i, u, lifted); }, &best);
        const double gamma = stepsize(out.visits[l]++);
        out.r[static_cast<Eigen::Index>(l)] = (1.0 - gamma) * out.r[static_cast<Eigen::Index>(l)] + gamma * best;
    }
    out.final_residual = sup_distance(aggregate_operator_H(mdp, scheme, out.r), out.r);
    return out;
}

struct CellQResult {
    Matrix q;                                ///< Q(l, u), one row per aggregate state
    std::vector<std::size_t> cell_policy;    ///< greedy control per aggregate state
    Policy policy;                           ///< cell_policy applied to every member state
    std::vector<std::vector<std::size_t>> visits;
};

/**
 * Q-learning on hard-aggregation Q-factors Q(l, u), shared by all states of I_l:
 * Q(l,u) <- (1 - gamma) Q(l,u) + gamma (g(i,u,j) + alpha min_v Q(m(j), v)),
 * with i ~ d_l and j ~ p_i.(u). Every pair (l, u) is updated once per cycle in a reshuffled
 * order. This solves the coarser problem in which one control is applied per cell.
 */
inline CellQResult hard_agg_qlearning(const Mdp& mdp, const AggregationScheme& scheme, std::size_t steps,
                                      Stepsize stepsize, std::uint64_t seed) {
    detail::check_scheme(mdp, scheme);
    detail::require(scheme.is_hard(), "hard_agg_qlearning requires a hard aggregation scheme");
    const std::size_t q = scheme.num_aggregate();
    std::vector<std::size_t> controls(q);
    std::size_t max_controls = 0;
    for (std::size_t l = 0; l < q; ++l) {
        const auto& set = scheme.disagg_sets()[l];
        controls[l] = mdp.num_controls(set.front());
        for (std::size_t i : set)
            detail::require(mdp.num_controls(i) == controls[l], "control sets differ within disaggregation set " +
                                                                    std::to_string(l + 1) + " (state " +
                                                                    std::to_string(i + 1) + ")");
        max_controls = std::max(max_controls, controls[l]);
    }
    std::vector<std::size_t> cell_of(mdp.num_states());
    for (std::size_t j = 0; j < cell_of.size(); ++j) cell_of[j] = scheme.cell_of(j);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t l = 0; l < q; ++l)
        for (std::size_t u = 0; u < controls[l]; ++u) pairs.emplace_back(l, u);

    CellQResult out;
    out.q = Matrix::Constant(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(max_controls),
                             std::numeric_limits<double>::quiet_NaN());
    out.visits.resize(q);
    for (std::size_t l = 0; l < q; ++l) {
        out.q.row(static_cast<Eigen::Index>(l)).head(static_cast<Eigen::Index>(controls[l])).setZero();
        out.visits[l].assign(controls[l], 0);
    }
    auto cell_min = [&](std::size_t l, double* value) {
        return detail::argmin_control(controls[l], [&](std::size_t v) {
            return out.q(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(v));
        }, value);
    };
    std::vector<std::vector<double>> rows(q);
    for (std::size_t l = 0; l < q; ++l) rows[l] = detail::disaggregation_row(scheme, l);
    CounterRng rng(seed);
    detail::CyclicJitterSchedule schedule(pairs.size(), rng);
    for (std::size_t k = 0; k < steps; ++k) {
        const auto [l, u] = pairs[schedule.next()];
        const std::size_t i = rng.discrete(rows[l]);
        const SampleTransition t = sample_transition(mdp, i, u, rng);
        double continuation = 0.0;
        if (t.target >= 0) cell_min(cell_of[static_cast<std::size_t>(t.target)], &continuation);
        const double target = t.cost + mdp.discount() * continuation;
        const double gamma = stepsize(out.visits[l][u]++);
        double& entry = out.q(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(u));
        entry = (1.0 - gamma) * entry + gamma * target;
    }
    out.cell_policy.resize(q);
    for (std::size_t l = 0; l < q; ++l) out.cell_policy[l] = cell_min(l, nullptr);
    out.policy.controls.resize(mdp.num_states());
    for (std::size_t i = 0; i < mdp.num_states(); ++i) out.policy[i] = out.cell_policy[cell_of[i]];
    return out;
}

/// Linear Q-factor architecture Q~(i, u, theta) = psi(i, u)' theta.
class QFactorModel {
public:
    using FeatureFn = std::function<Vector(std::size_t state, std::size_t control)>;

    QFactorModel(std::size_t dimension, FeatureFn features) : dim_(dimension), features_(std::move(features)) {
        detail::require(dim_ >= 1, "Q-factor model needs at least one parameter");
    }

    /// One indicator per (state, control) pair.
    static QFactorModel tabular(const Mdp& mdp) {
        std::vector<std::size_t> offset(mdp.num_states() + 1, 0);
        for (std::size_t s = 0; s < mdp.num_states(); ++s) offset[s + 1] = offset[s] + mdp.num_controls(s);
        const std::size_t dim = offset.back();
        return QFactorModel(dim, [offset, dim](std::size_t s, std::size_t u) {
            Vector psi = Vector::Zero(static_cast<Eigen::Index>(dim));
            psi[static_cast<Eigen::Index>(offset[s] + u)] = 1.0;
            return psi;
        });
    }

    std::size_t dimension() const noexcept { return dim_; }

    Vector features(std::size_t s, std::size_t u) const {
        Vector psi = features_(s, u);
        detail::require(static_cast<std::size_t>(psi.size()) == dim_, "Q-factor features have the wrong length");
        return psi;
    }

    double value(std::size_t s, std::size_t u, const Vector& theta) const { return features(s, u).dot(theta); }

private:
    std::size_t dim_;
    FeatureFn features_;
};

inline constexpr double kRegressionRidge = 1e-8;

struct QFactorFit {
    Vector theta;
    Policy policy;
    bool regularized = false;  ///< the normal equations were rank deficient and ridge was added
    std::size_t samples = 0;
};

/**
 * Fits Q~(., ., theta) to sample targets beta = g(i,u,j) + alpha J~(j) by least squares and
 * returns the greedy policy argmin_u Q~(i, u, theta).
 *
 * When `exhaustive` is set, every (i, u) pair is used once with the expected target
 * sum_j p_ij(u) (g + alpha J~(j)) and `samples` is ignored. Otherwise (i, u) is uniform over
 * the feasible pairs and j is simulated.
 */
inline QFactorFit qfactor_fit_and_extract(const Mdp& mdp, const CostVector& base_values, const QFactorModel& model,
                                          std::size_t samples, std::uint64_t seed, bool exhaustive = false) {
    detail::check_costs(mdp, base_values, "qfactor_fit_and_extract");
    const auto dim = static_cast<Eigen::Index>(model.dimension());
    Matrix gram = Matrix::Zero(dim, dim);
    Vector rhs = Vector::Zero(dim);
    QFactorFit out;
    auto add = [&](std::size_t s, std::size_t u, double beta) {
        const Vector psi = model.features(s, u);
        gram.noalias() += psi * psi.transpose();
        rhs += beta * psi;
        ++out.samples;
    };
    if (exhaustive) {
        for (std::size_t s = 0; s < mdp.num_states(); ++s)
            for (std::size_t u = 0; u < mdp.num_controls(s); ++u) add(s, u, mdp.q_value(s, u, base_values));
    } else {
        detail::require(samples >= 1, "sample count must be at least 1");
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t s = 0; s < mdp.num_states(); ++s)
            for (std::size_t u = 0; u < mdp.num_controls(s); ++u) pairs.emplace_back(s, u);
        CounterRng rng(seed);
        for (std::size_t m = 0; m < samples; ++m) {
            const auto [s, u] = pairs[rng.below(pairs.size())];
            const SampleTransition t = sample_transition(mdp, s, u, rng);
            add(s, u, t.cost + (t.target >= 0 ? mdp.discount() * base_values[t.target] : 0.0));
        }
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(gram);
    qr.setThreshold(1e-12);
    if (qr.rank() < dim) {
        out.regularized = true;
        out.theta = (gram + kRegressionRidge * Matrix::Identity(dim, dim)).ldlt().solve(rhs);
    } else {
        out.theta = qr.solve(rhs);
    }
    out.policy.controls.resize(mdp.num_states());
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        out.policy[s] = detail::argmin_control(mdp.num_controls(s),
                                               [&](std::size_t u) { return model.value(s, u, out.theta); });
    return out;
}

} // namespace aggdp
