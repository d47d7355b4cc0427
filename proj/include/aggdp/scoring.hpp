#pragma once

#include "aggdp/aggregation.hpp"
#include "aggdp/error.hpp"
#include "aggdp/linalg.hpp"
#include "aggdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aggdp {

/// Real score per state (one column) or a vector of scores per state (one row per state).
using ScoringFunction = Vector;
using ScoreMatrix = Matrix;

/**
 * Quantile breakpoints b_1 < ... < b_{q-1} over the distinct observed values, so that the
 * intervals [min, b_1), [b_1, b_2), ..., [b_{q-1}, max] are all nonempty when q does not
 * exceed the number of distinct values (and q equal to that number gives one value per cell).
 */
inline std::vector<double> quantile_breakpoints(std::vector<double> values, std::size_t q) {
    detail::require(q >= 1, "need at least one interval");
    detail::require(!values.empty(), "cannot partition an empty set of scores");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    const std::size_t distinct = values.size();
    const std::size_t cells = std::min(q, distinct);
    std::vector<double> out;
    for (std::size_t k = 1; k < cells; ++k) out.push_back(values[k * distinct / cells]);
    return out;
}

/// Interval count large enough to give every distinct value its own interval.
inline constexpr std::size_t kSingletonCells = std::numeric_limits<std::size_t>::max();

/// Index of the half-open interval [b_k, b_{k+1}) containing v; the last interval is closed.
inline std::size_t interval_index(const std::vector<double>& breakpoints, double v) {
    return static_cast<std::size_t>(std::upper_bound(breakpoints.begin(), breakpoints.end(), v) - breakpoints.begin());
}

/**
 * Product grid of intervals over R^s fitted to a set of score vectors. Only nonempty grid
 * cells are kept; they are numbered in lexicographic order of their interval coordinates.
 */
class ScoreGrid {
public:
    using Key = std::vector<std::size_t>;

    /// Per-dimension quantile breakpoints with q_d intervals in dimension d.
    static ScoreGrid quantile(const ScoreMatrix& points, const std::vector<std::size_t>& q_per_dim) {
        detail::require(points.rows() >= 1 && points.cols() >= 1, "score grid needs at least one point and dimension");
        detail::require(q_per_dim.size() == static_cast<std::size_t>(points.cols()),
                        "one interval count per score dimension is required");
        std::vector<std::vector<double>> bps;
        bool collapsed = false;
        for (Eigen::Index d = 0; d < points.cols(); ++d) {
            std::vector<double> col(points.col(d).data(), points.col(d).data() + points.rows());
            bps.push_back(quantile_breakpoints(col, q_per_dim[static_cast<std::size_t>(d)]));
            if (q_per_dim[static_cast<std::size_t>(d)] > 1 && bps.back().empty()) collapsed = true;
        }
        ScoreGrid g = with_breakpoints(points, std::move(bps));
        g.collapsed_ = collapsed;
        return g;
    }

    /// Explicit interior breakpoints per dimension (each list strictly increasing).
    static ScoreGrid with_breakpoints(const ScoreMatrix& points, std::vector<std::vector<double>> breakpoints) {
        detail::require(breakpoints.size() == static_cast<std::size_t>(points.cols()),
                        "one breakpoint list per score dimension is required");
        for (const auto& b : breakpoints) {
            for (std::size_t k = 1; k < b.size(); ++k)
                detail::require(b[k - 1] < b[k], "breakpoints must be strictly increasing");
            for (double x : b) detail::require(std::isfinite(x), "breakpoints must be finite");
        }
        detail::require(points.allFinite(), "scores must be finite");
        ScoreGrid g;
        g.breakpoints_ = std::move(breakpoints);
        std::map<Key, std::vector<std::size_t>> buckets;
        for (Eigen::Index i = 0; i < points.rows(); ++i) buckets[g.key_of(points.row(i).transpose())].push_back(static_cast<std::size_t>(i));
        g.assignment_.resize(static_cast<std::size_t>(points.rows()));
        for (auto& [key, members] : buckets) {
            const std::size_t cell = g.keys_.size();
            Vector centroid = Vector::Zero(points.cols());
            for (std::size_t i : members) {
                g.assignment_[i] = cell;
                centroid += points.row(static_cast<Eigen::Index>(i)).transpose();
            }
            g.index_[key] = cell;
            g.keys_.push_back(key);
            g.centroids_.push_back(centroid / static_cast<double>(members.size()));
            g.members_.push_back(std::move(members));
        }
        return g;
    }

    std::size_t num_cells() const noexcept { return keys_.size(); }
    std::size_t dimension() const noexcept { return breakpoints_.size(); }
    const std::vector<std::size_t>& assignment() const noexcept { return assignment_; }
    const std::vector<std::vector<std::size_t>>& members() const noexcept { return members_; }
    const std::vector<Key>& keys() const noexcept { return keys_; }
    const std::vector<Vector>& centroids() const noexcept { return centroids_; }
    const std::vector<std::vector<double>>& breakpoints() const noexcept { return breakpoints_; }
    /// True when some dimension asked for more than one interval but had a single distinct value.
    bool collapsed() const noexcept { return collapsed_; }

    Key key_of(const Vector& v) const {
        detail::require(static_cast<std::size_t>(v.size()) == breakpoints_.size(), "score vector has the wrong dimension");
        Key key(breakpoints_.size());
        for (std::size_t d = 0; d < key.size(); ++d) key[d] = interval_index(breakpoints_[d], v[static_cast<Eigen::Index>(d)]);
        return key;
    }

    /// Nonempty cell whose intervals contain v, if any.
    std::optional<std::size_t> locate(const Vector& v) const {
        const auto it = index_.find(key_of(v));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Cell containing v, else the cell with the nearest centroid (Euclidean; lowest index on ties).
    std::size_t locate_or_nearest(const Vector& v, bool* outside = nullptr) const {
        if (auto cell = locate(v)) {
            if (outside) *outside = false;
            return *cell;
        }
        if (outside) *outside = true;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids_.size(); ++c) {
            const double d = (centroids_[c] - v).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        return best;
    }

private:
    std::vector<std::vector<double>> breakpoints_;
    std::vector<std::size_t> assignment_;
    std::vector<std::vector<std::size_t>> members_;
    std::vector<Key> keys_;
    std::vector<Vector> centroids_;
    std::map<Key, std::size_t> index_;
    bool collapsed_ = false;
};

/// Feature mapping F(i) = cell index, the induced hard aggregation, and the grid that produced it.
struct ScorePartition {
    std::vector<std::size_t> feature;
    AggregationScheme scheme;
    ScoreGrid grid;
    bool collapsed = false;  ///< all scores were equal although more than one cell was requested
};

namespace detail {

inline ScorePartition partition_from_grid(ScoreGrid grid) {
    const std::size_t n = grid.assignment().size();
    ScorePartition out{grid.assignment(), build_hard_aggregation(n, grid.members()), grid, grid.collapsed()};
    return out;
}

inline ScoreMatrix as_column(const ScoringFunction& v) { return v; }

} // namespace detail

/// Quantile partition of a scalar score into q intervals (empty ones dropped).
inline ScorePartition partition_by_scores(const ScoringFunction& v, std::size_t q) {
    detail::require(v.size() >= 1, "scoring function is empty");
    std::vector<double> values(v.data(), v.data() + v.size());
    std::sort(values.begin(), values.end());
    const auto distinct = static_cast<std::size_t>(std::unique(values.begin(), values.end()) - values.begin());
    detail::require(distinct == 1 || q <= distinct,
                    "q = " + std::to_string(q) + " exceeds the " + std::to_string(distinct) + " distinct score values");
    return detail::partition_from_grid(ScoreGrid::quantile(detail::as_column(v), {q}));
}

/// Partition of a scalar score by explicit interior breakpoints (empty intervals dropped).
inline ScorePartition partition_by_scores(const ScoringFunction& v, const std::vector<double>& breakpoints) {
    detail::require(v.size() >= 1, "scoring function is empty");
    return detail::partition_from_grid(ScoreGrid::with_breakpoints(detail::as_column(v), {breakpoints}));
}

/// Vector-valued scores: product grid of per-dimension breakpoints.
inline ScorePartition partition_by_score_vector(const ScoreMatrix& v, std::vector<std::vector<double>> breakpoints) {
    return detail::partition_from_grid(ScoreGrid::with_breakpoints(v, std::move(breakpoints)));
}

/// Vector-valued scores: product of per-dimension quantile grids.
inline ScorePartition partition_by_score_vector(const ScoreMatrix& v, const std::vector<std::size_t>& q_per_dim) {
    return detail::partition_from_grid(ScoreGrid::quantile(v, q_per_dim));
}

/// Partitions each coarse set separately by its own quantile intervals; cells are ordered
/// by coarse set, then by interval.
inline AggregationScheme partition_by_scores_within_sets(const ScoringFunction& v,
                                                         const std::vector<std::vector<std::size_t>>& coarse_sets,
                                                         std::size_t q) {
    const auto n = static_cast<std::size_t>(v.size());
    std::vector<std::vector<std::size_t>> cells;
    for (const auto& set : coarse_sets) {
        detail::require(!set.empty(), "coarse set is empty");
        Vector sub(static_cast<Eigen::Index>(set.size()));
        for (std::size_t k = 0; k < set.size(); ++k) {
            detail::require(set[k] < n, "coarse set member out of range");
            sub[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(set[k])];
        }
        const ScorePartition part = partition_by_scores(sub, q);
        for (const auto& members : part.grid.members()) {
            std::vector<std::size_t> cell;
            for (std::size_t k : members) cell.push_back(set[k]);
            cells.push_back(std::move(cell));
        }
    }
    return build_hard_aggregation(n, std::move(cells));
}

/// delta = max over cells of the spread of V within the cell.
inline double quantization_error(const ScoringFunction& v, const AggregationScheme& scheme) {
    detail::require(static_cast<std::size_t>(v.size()) == scheme.num_states(), "scoring function has the wrong length");
    return detail::max_within_cell_variation(scheme.disagg_sets(), v);
}

/// Bellman residual (T J - J)(i) as a scoring function.
inline ScoringFunction bellman_residual_score(const Mdp& mdp, const CostVector& j) {
    return bellman_optimal(mdp, j) - j;
}

struct BetaCertificate {
    bool holds = true;    ///< false if two states share a score within a cell but differ in J*
    double beta = 0.0;    ///< smallest beta with |J*(i)-J*(j)| <= beta |V(i)-V(j)| on every cell
};

/// Smallest beta for the Lipschitz-type hypothesis, by exhaustive pairwise scan within cells.
inline BetaCertificate certify_beta(const ScoringFunction& v, const CostVector& j_star,
                                    const std::vector<std::vector<std::size_t>>& cells, double tol = 1e-9) {
    BetaCertificate cert;
    for (const auto& cell : cells) {
        for (std::size_t a = 0; a < cell.size(); ++a) {
            for (std::size_t b = a + 1; b < cell.size(); ++b) {
                const auto i = static_cast<Eigen::Index>(cell[a]), j = static_cast<Eigen::Index>(cell[b]);
                const double dj = std::abs(j_star[i] - j_star[j]);
                const double dv = std::abs(v[i] - v[j]);
                if (dv == 0.0) {
                    if (dj > tol) cert.holds = false;
                    continue;
                }
                cert.beta = std::max(cert.beta, dj / dv);
            }
        }
    }
    return cert;
}

struct Prop44Report {
    bool hypothesis_holds = true;
    double beta = 0.0;
    double delta = 0.0;
    double bound = 0.0;  ///< beta delta / (1 - alpha); infinite for SSP with delta > 0
    double max_gap = 0.0;
    std::vector<BoundViolation> violations;
    AggregateCosts r_star;
    CostVector j_star;

    /// The bound holds (or was not asserted because the hypothesis failed).
    bool ok() const noexcept { return !hypothesis_holds || violations.empty(); }
};

/**
 * Score-based bound check: solves for J* and r* exactly, certifies beta by pairwise scan
 * (or verifies a supplied beta), and checks |J*(i) - r*_l| <= beta delta / (1 - alpha) + tol
 * on every cell. With delta = 0 this is an exactness check. The bound is not asserted when
 * the hypothesis fails.
 */
inline Prop44Report check_prop44(const Mdp& mdp, const ScoringFunction& v, const AggregationScheme& scheme,
                                 std::optional<double> beta = std::nullopt, double tol = 1e-9) {
    detail::check_scheme(mdp, scheme);
    detail::require(scheme.is_hard(), "score-based bound check requires hard aggregation");
    detail::require(static_cast<std::size_t>(v.size()) == mdp.num_states(), "scoring function has the wrong length");
    Prop44Report report;
    report.j_star = solve_exact_vi(mdp, 1e-13).values;
    report.r_star = solve_aggregate_vi(mdp, scheme, 1e-13).r;
    const auto& cells = scheme.disagg_sets();
    const BetaCertificate cert = certify_beta(v, report.j_star, cells, tol);
    if (beta) {
        detail::require(*beta >= 0.0, "beta must be nonnegative");
        report.beta = *beta;
        report.hypothesis_holds = cert.holds && cert.beta <= *beta + 1e-12;
    } else {
        report.beta = cert.beta;
        report.hypothesis_holds = cert.holds;
    }
    report.delta = quantization_error(v, scheme);
    const double scaled = report.beta * report.delta;
    const double factor = mdp.discount() < 1.0 ? 1.0 / (1.0 - mdp.discount()) : std::numeric_limits<double>::infinity();
    const BoundReport gaps = detail::bound_report(cells, report.r_star, report.j_star, 0.0, 1.0, 0.0);
    report.bound = scaled == 0.0 ? 0.0 : scaled * factor;
    report.max_gap = gaps.max_gap;
    if (report.hypothesis_holds) {
        for (std::size_t l = 0; l < cells.size(); ++l) {
            for (std::size_t i : cells[l]) {
                const double gap = std::abs(report.j_star[static_cast<Eigen::Index>(i)] - report.r_star[static_cast<Eigen::Index>(l)]);
                if (gap > report.bound + tol) report.violations.push_back({i, l, gap, gap - report.bound});
            }
        }
    }
    return report;
}

} // namespace aggdp
