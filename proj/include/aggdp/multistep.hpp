#pragma once

#include "aggdp/aggregation.hpp"
#include "aggdp/error.hpp"
#include "aggdp/mdp.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace aggdp {

/// T^k J by k optimal Bellman sweeps.
inline CostVector bellman_optimal_power(const Mdp& mdp, CostVector j, std::size_t k) {
    for (std::size_t m = 0; m < k; ++m) j = bellman_optimal(mdp, j);
    return j;
}

/// D T^k (Phi r). k = 1 is the aggregate operator H.
inline AggregateCosts kstep_operator(const Mdp& mdp, const AggregationScheme& scheme, std::size_t k,
                                     const AggregateCosts& r) {
    detail::require(k >= 1, "k-step aggregation needs k >= 1");
    detail::check_scheme(mdp, scheme);
    detail::check_aggregate(scheme, r, "kstep_operator");
    return scheme.disaggregation() * bellman_optimal_power(mdp, scheme.aggregation() * r, k);
}

struct KStepSolution {
    AggregateCosts r;
    CostVector j0;  ///< T^k (Phi r): cost from an original state just generated by an aggregate state
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Fixed point of D T^k Phi (contraction modulus alpha^k), plus the lifted J~0 = T^k Phi r.
inline KStepSolution solve_kstep(const Mdp& mdp, const AggregationScheme& scheme, std::size_t k, double tol) {
    detail::require(k >= 1, "k-step aggregation needs k >= 1");
    detail::require(tol > 0.0, "solve_kstep: tol must be positive");
    detail::check_scheme(mdp, scheme);
    const double modulus = std::pow(mdp.discount(), static_cast<double>(k));
    auto vi = detail::iterate_to_fixed_point([&](const Vector& r) { return kstep_operator(mdp, scheme, k, r); },
                                             Vector::Zero(static_cast<Eigen::Index>(scheme.num_aggregate())),
                                             vi_stop_threshold(modulus, tol), "solve_kstep");
    KStepSolution out;
    out.j0 = bellman_optimal_power(mdp, scheme.aggregation() * vi.values, k);
    out.r = std::move(vi.values);
    out.iterations = vi.iterations;
    out.residual = vi.residual;
    return out;
}

/// |J*(i) - r*_l| <= eps / (1 - alpha^k) + tol on cells with phi_il = 1.
inline BoundReport check_kstep_bound(const Mdp& mdp, const AggregationScheme& scheme, std::size_t k,
                                     const AggregateCosts& r_star, const CostVector& j_star, double tol = 1e-9) {
    detail::require(k >= 1, "k-step aggregation needs k >= 1");
    detail::check_scheme(mdp, scheme);
    detail::check_aggregate(scheme, r_star, "check_kstep_bound");
    detail::check_costs(mdp, j_star, "check_kstep_bound");
    detail::require(mdp.discount() < 1.0, "check_kstep_bound needs a discounted model");
    const auto cells = detail::unit_aggregation_cells(scheme);
    const double eps = detail::max_within_cell_variation(cells, j_star);
    return detail::bound_report(cells, r_star, j_star, eps, 1.0 / (1.0 - std::pow(mdp.discount(), static_cast<double>(k))),
                                tol);
}

/// Number of series terms kept so that the folded tail weight (alpha lambda)^L is below tol / 10.
inline std::size_t lambda_truncation(double discount, double lambda, double tol) {
    const double rate = discount * lambda;
    if (rate <= 0.0) return 0;
    return static_cast<std::size_t>(std::ceil(std::log(tol / 10.0) / std::log(rate)));
}

/**
 * T_mu^(lambda) J = (1 - lambda) sum_{l >= 0} lambda^l T_mu^{l+1} J, truncated after L terms with
 * the remaining weight lambda^L placed on T_mu^{L+1} J, so the weights still sum to one.
 */
inline CostVector lambda_operator(const Mdp& mdp, const Policy& mu, double lambda, const CostVector& j,
                                  std::size_t terms) {
    detail::require(lambda >= 0.0 && lambda < 1.0, "lambda must lie in [0, 1)");
    const Vector g = expected_costs(mdp, mu);
    const Matrix p = mdp.discount() * transition_matrix(mdp, mu);
    Vector power = g + p * j;  // T_mu^1 J
    Vector sum = Vector::Zero(j.size());
    double weight = 1.0;       // lambda^l
    for (std::size_t l = 0; l < terms; ++l) {
        sum += (1.0 - lambda) * weight * power;
        power = g + p * power;
        weight *= lambda;
    }
    return sum + weight * power;
}

struct LambdaEvaluation {
    AggregateCosts r;
    std::size_t terms = 0;
    std::size_t iterations = 0;
};

/// Solves r = D T_mu^(lambda) (Phi r) by fixed-point iteration from r = 0.
inline LambdaEvaluation lambda_evaluate(const Mdp& mdp, const AggregationScheme& scheme, const Policy& mu, double lambda,
                                        double tol) {
    detail::require(lambda >= 0.0 && lambda < 1.0, "lambda must lie in [0, 1)");
    detail::require(tol > 0.0, "lambda_evaluate: tol must be positive");
    detail::check_scheme(mdp, scheme);
    detail::check_policy(mdp, mu);
    LambdaEvaluation out;
    out.terms = lambda_truncation(mdp.discount(), lambda, tol);
    const Matrix& d = scheme.disaggregation();
    const Matrix& phi = scheme.aggregation();
    auto vi = detail::iterate_to_fixed_point(
        [&](const Vector& r) { return Vector(d * lambda_operator(mdp, mu, lambda, phi * r, out.terms)); },
        Vector::Zero(static_cast<Eigen::Index>(scheme.num_aggregate())), vi_stop_threshold(mdp.discount(), tol),
        "lambda_evaluate");
    out.r = std::move(vi.values);
    out.iterations = vi.iterations;
    return out;
}

} // namespace aggdp
