#pragma once

#include "aggdp/aggregation.hpp"
#include "aggdp/discrete_opt.hpp"
#include "aggdp/error.hpp"
#include "aggdp/feature_net.hpp"
#include "aggdp/mdp.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace aggdp::io {

using Json = nlohmann::ordered_json;

namespace detail {

inline const Json& field(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
    return j.at(key);
}

template <class T>
T get(const Json& j, const std::string& where) {
    if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer() || (std::is_unsigned_v<T> && j.get<long long>() < 0))
            throw ValidationError(where + ": expected " + (std::is_unsigned_v<T> ? "a nonnegative" : "an") +
                                  " integer, got " + j.dump());
    }
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(where + ": expected " + (std::is_arithmetic_v<T> ? "a number" : "a different type") +
                              ", got " + j.dump());
    }
}

/// 1-based index in [lo, hi], returned 0-based relative to 1.
inline std::size_t one_based(const Json& j, std::size_t hi, const std::string& where) {
    const auto v = get<long long>(j, where);
    if (v < 1 || static_cast<std::size_t>(v) > hi)
        throw ValidationError(where + ": index " + std::to_string(v) + " outside 1.." + std::to_string(hi));
    return static_cast<std::size_t>(v - 1);
}

inline Matrix matrix_from_rows(const Json& rows, Eigen::Index r, Eigen::Index c, const std::string& where) {
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != r)
        throw ValidationError(where + ": expected " + std::to_string(r) + " rows");
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const Json& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
            throw ValidationError(where + ": row " + std::to_string(i + 1) + " must have " + std::to_string(c) + " entries");
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = get<double>(row[static_cast<std::size_t>(k)], where);
    }
    return m;
}

} // namespace detail

inline Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("malformed JSON in " + what + ": " + e.what());
    }
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json(buf.str(), path);
}

inline Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline Json to_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
    return out;
}

/// Policy as 1-based controls.
inline Json to_json(const Policy& mu) {
    Json out = Json::array();
    for (std::size_t u : mu.controls) out.push_back(u + 1);
    return out;
}

inline Vector vector_from_json(const Json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = detail::get<double>(j[i], where);
    return v;
}

inline Policy policy_from_json(const Mdp& mdp, const Json& j) {
    if (!j.is_array() || j.size() != mdp.num_states())
        throw ValidationError("policy must list one control per state (" + std::to_string(mdp.num_states()) + ")");
    Policy mu{std::vector<std::size_t>(mdp.num_states())};
    for (std::size_t s = 0; s < j.size(); ++s)
        mu[s] = detail::one_based(j[s], mdp.num_controls(s), "policy entry for state " + std::to_string(s + 1));
    return mu;
}

/**
 * MDP document: {"n", "alpha" (absent for SSP), "states": [{"controls": [{"transitions": [[j, p, g], ...]}]}]}.
 * States are numbered 1..n; in an SSP target 0 is the termination state.
 */
inline Mdp mdp_from_json(const Json& j) {
    const std::size_t n = detail::get<std::size_t>(detail::field(j, "n", "mdp"), "mdp.n");
    const bool ssp = !j.contains("alpha") || j.at("alpha").is_null();
    MdpBuilder b = ssp ? MdpBuilder::ssp(n) : MdpBuilder::discounted(n, detail::get<double>(j.at("alpha"), "mdp.alpha"));
    const Json& states = detail::field(j, "states", "mdp");
    if (!states.is_array() || states.size() != n)
        throw ValidationError("mdp.states must have n = " + std::to_string(n) + " entries");
    for (std::size_t s = 0; s < n; ++s) {
        const std::string at = "state " + std::to_string(s + 1);
        const Json& controls = detail::field(states[s], "controls", at);
        if (!controls.is_array()) throw ValidationError(at + ": controls must be an array");
        for (std::size_t u = 0; u < controls.size(); ++u) {
            b.add_control(s);
            const std::string where = state_label(s, u);
            const Json& rows = detail::field(controls[u], "transitions", where);
            if (!rows.is_array()) throw ValidationError(where + ": transitions must be an array");
            for (const Json& t : rows) {
                if (!t.is_array() || t.size() != 3) throw ValidationError(where + ": each transition must be [j, p, g]");
                const auto target = detail::get<long long>(t[0], where);
                if (target < 0 || static_cast<std::size_t>(target) > n || (!ssp && target == 0))
                    throw ValidationError(where + ": transition target " + std::to_string(target) + " out of range");
                b.add_transition(s, u, target == 0 ? MdpBuilder::kTerminal : static_cast<std::ptrdiff_t>(target - 1),
                                 detail::get<double>(t[1], where), detail::get<double>(t[2], where));
            }
        }
    }
    return b.build();
}

inline Json mdp_to_json(const Mdp& mdp) {
    Json out;
    out["n"] = mdp.num_states();
    if (!mdp.is_ssp()) out["alpha"] = mdp.discount();
    Json states = Json::array();
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        Json controls = Json::array();
        for (std::size_t u = 0; u < mdp.num_controls(s); ++u) {
            const ControlRow& row = mdp.row(s, u);
            Json rows = Json::array();
            if (row.terminal_prob > 0.0) rows.push_back({0, row.terminal_prob, row.terminal_cost});
            for (Eigen::Index t = 0; t < row.prob.size(); ++t)
                if (row.prob[t] > 0.0) rows.push_back({t + 1, row.prob[t], row.cost[t]});
            controls.push_back({{"transitions", rows}});
        }
        states.push_back({{"controls", controls}});
    }
    out["states"] = states;
    return out;
}

/**
 * Scheme document: {"q", "disagg_sets": [[states]], "D": rows, "Phi": rows}, states 1-based.
 * Only "q" means q contiguous cells. Without D, disaggregation is uniform on each set. Without Phi,
 * sets covering every state give hard aggregation, and singleton sets give representative-state
 * interpolation.
 */
inline AggregationScheme scheme_from_json(const Json& j, std::size_t n) {
    if (!j.is_object()) throw ValidationError("scheme must be a JSON object");
    if (!j.contains("disagg_sets")) {
        const auto q = detail::get<std::size_t>(detail::field(j, "q", "scheme"), "scheme.q");
        aggdp::detail::require(q >= 1 && q <= n, "scheme.q must lie in [1, n]");
        return contiguous_scheme(n, q);
    }
    const Json& js = j.at("disagg_sets");
    if (!js.is_array() || js.empty()) throw ValidationError("scheme.disagg_sets must be a nonempty array");
    std::vector<std::vector<std::size_t>> sets;
    for (std::size_t l = 0; l < js.size(); ++l) {
        const std::string where = "disaggregation set " + std::to_string(l + 1);
        if (!js[l].is_array()) throw ValidationError(where + " must be an array of states");
        std::vector<std::size_t> set;
        for (const Json& s : js[l]) set.push_back(detail::one_based(s, n, where));
        sets.push_back(std::move(set));
    }
    if (j.contains("q") && detail::get<std::size_t>(j.at("q"), "scheme.q") != sets.size())
        throw ValidationError("scheme.q does not match the number of disaggregation sets");
    const auto q = static_cast<Eigen::Index>(sets.size());
    const auto nn = static_cast<Eigen::Index>(n);
    Matrix d;
    if (j.contains("D")) {
        d = detail::matrix_from_rows(j.at("D"), q, nn, "scheme.D");
    } else {
        d = Matrix::Zero(q, nn);
        for (Eigen::Index l = 0; l < q; ++l)
            for (std::size_t i : sets[static_cast<std::size_t>(l)])
                d(l, static_cast<Eigen::Index>(i)) = 1.0 / static_cast<double>(sets[static_cast<std::size_t>(l)].size());
    }
    if (j.contains("Phi")) return AggregationScheme(std::move(sets), std::move(d), detail::matrix_from_rows(j.at("Phi"), nn, q, "scheme.Phi"));
    std::size_t covered = 0;
    bool singletons = true;
    for (const auto& set : sets) {
        covered += set.size();
        singletons = singletons && set.size() == 1;
    }
    if (covered == n) {
        Matrix phi = Matrix::Zero(nn, q);
        for (Eigen::Index l = 0; l < q; ++l)
            for (std::size_t i : sets[static_cast<std::size_t>(l)]) phi(static_cast<Eigen::Index>(i), l) = 1.0;
        return AggregationScheme(std::move(sets), std::move(d), std::move(phi));
    }
    if (!singletons) throw ValidationError("scheme: disaggregation sets do not cover every state; give Phi explicitly");
    std::vector<std::size_t> reps;
    for (const auto& set : sets) reps.push_back(set.front());
    return build_representative_states(n, reps);
}

inline Json scheme_to_json(const AggregationScheme& scheme) {
    Json sets = Json::array();
    for (const auto& set : scheme.disagg_sets()) {
        Json s = Json::array();
        for (std::size_t i : set) s.push_back(i + 1);
        sets.push_back(s);
    }
    return {{"q", scheme.num_aggregate()}, {"disagg_sets", sets}, {"D", to_json(scheme.disaggregation())},
            {"Phi", to_json(scheme.aggregation())}};
}

/// Discrete problem plus the heuristics that come with it.
struct DiscreteInstance {
    DiscreteOptProblem problem;
    std::vector<double> weights, values;  ///< knapsack data (empty otherwise)
    double capacity = 0.0;
    Matrix distances;                     ///< TSP data (empty otherwise)
};

/**
 * Problem document, by "type": "tinyg"; "table" {arity, costs}; "random" {n, min_arity, max_arity, seed};
 * "knapsack" {weights, values, capacity}; "tsp" {distances}.
 */
inline DiscreteInstance discrete_problem_from_json(const Json& j) {
    const auto type = detail::get<std::string>(detail::field(j, "type", "problem"), "problem.type");
    DiscreteInstance out;
    if (type == "tinyg") {
        out.problem = tiny_g_problem();
    } else if (type == "table") {
        out.problem = table_problem(j.value("name", std::string("table")),
                                    detail::get<std::vector<std::size_t>>(detail::field(j, "arity", "problem"), "problem.arity"),
                                    detail::get<std::vector<double>>(detail::field(j, "costs", "problem"), "problem.costs"));
    } else if (type == "random") {
        out.problem = random_table_problem(detail::get<std::size_t>(detail::field(j, "n", "problem"), "problem.n"),
                                           j.value("min_arity", std::size_t{2}), j.value("max_arity", std::size_t{3}),
                                           j.value("seed", std::uint64_t{0}));
    } else if (type == "knapsack") {
        out.weights = detail::get<std::vector<double>>(detail::field(j, "weights", "problem"), "problem.weights");
        out.values = detail::get<std::vector<double>>(detail::field(j, "values", "problem"), "problem.values");
        out.capacity = detail::get<double>(detail::field(j, "capacity", "problem"), "problem.capacity");
        out.problem = knapsack_problem(out.weights, out.values, out.capacity);
    } else if (type == "tsp") {
        const Json& rows = detail::field(j, "distances", "problem");
        const auto n = static_cast<Eigen::Index>(rows.is_array() ? rows.size() : 0);
        out.distances = detail::matrix_from_rows(rows, n, n, "problem.distances");
        out.problem = tsp_problem(out.distances);
    } else {
        throw ValidationError("unknown problem type '" + type + "' (expected tinyg, table, random, knapsack or tsp)");
    }
    return out;
}

/// Generic heuristics plus the instance-specific one; they capture the problem by reference.
inline std::vector<Heuristic> default_heuristics(const DiscreteInstance& inst) {
    std::vector<Heuristic> hs{greedy_heuristic(inst.problem), first_fit_heuristic(inst.problem)};
    if (!inst.weights.empty()) hs.push_back(density_greedy_heuristic(inst.problem, inst.weights, inst.values, inst.capacity));
    if (inst.distances.size() > 0) hs.push_back(nearest_neighbor_heuristic(inst.problem, inst.distances));
    return hs;
}

/// Flat layer list: {"layers": [{"A": rows, "b": [...], "activation"}], "r": [...]}.
inline Json params_to_json(const NetworkSpec& spec, const NetworkParams& p) {
    Json layers = Json::array();
    for (std::size_t k = 0; k < p.a.size(); ++k)
        layers.push_back({{"A", to_json(p.a[k])}, {"b", to_json(p.b[k])}, {"activation", to_string(spec.activation(k))}});
    return {{"layers", layers}, {"r", to_json(p.r)}};
}

inline NetworkParams params_from_json(const NetworkSpec& spec, const Json& j) {
    const Json& layers = detail::field(j, "layers", "params");
    if (!layers.is_array() || layers.size() != spec.num_layers())
        throw ValidationError("params: expected " + std::to_string(spec.num_layers()) + " layers");
    NetworkParams p;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const std::string where = "params layer " + std::to_string(k + 1);
        p.a.push_back(detail::matrix_from_rows(detail::field(layers[k], "A", where), static_cast<Eigen::Index>(spec.widths[k]),
                                               static_cast<Eigen::Index>(spec.input_width(k)), where + ".A"));
        p.b.push_back(vector_from_json(detail::field(layers[k], "b", where), where + ".b"));
    }
    p.r = vector_from_json(detail::field(j, "r", "params"), "params.r");
    aggdp::detail::check_params(spec, p);
    return p;
}

/// Comma-separated table with a header row; numbers at round-trip precision.
inline void write_csv(std::ostream& os, const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    os.precision(17);
    for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    os << '\n';
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k];
        os << '\n';
    }
}

} // namespace aggdp::io
