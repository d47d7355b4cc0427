// Command-line entry point: reads problem JSON, runs one solver, writes JSON/CSV results to --out.

#include "aggdp/aggregation.hpp"
#include "aggdp/discrete_opt.hpp"
#include "aggdp/feature_net.hpp"
#include "aggdp/io.hpp"
#include "aggdp/mdp.hpp"
#include "aggdp/multistep.hpp"
#include "aggdp/pipeline.hpp"
#include "aggdp/scoring.hpp"
#include "aggdp/simulation.hpp"
#include "aggdp/ssp_bench.hpp"
#include "aggdp/version.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using aggdp::io::Json;
namespace fs = std::filesystem;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, sep);)
        if (!item.empty()) out.push_back(item);
    return out;
}

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || text.front() == '-')
        throw aggdp::ValidationError(what + " must be a nonnegative integer, got '" + text + "'");
    return v;
}

/// Interval count: a positive integer or "singleton" for one interval per distinct value.
std::size_t parse_cells(const std::string& text) {
    if (text == "singleton" || text == "inf") return aggdp::kSingletonCells;
    const std::uint64_t v = parse_seed(text, "interval count");
    if (v == 0) throw aggdp::ValidationError("interval count must be positive");
    return static_cast<std::size_t>(v);
}

Json cells_json(std::size_t q) { return q == aggdp::kSingletonCells ? Json("singleton") : Json(q); }

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (const auto& item : split(text, ',')) out.push_back(static_cast<std::size_t>(parse_seed(item, what)));
    if (out.empty()) throw aggdp::ValidationError(what + " is empty");
    return out;
}

std::vector<aggdp::Activation> parse_activations(const std::string& text, std::size_t layers) {
    std::vector<aggdp::Activation> out;
    for (const auto& item : split(text, ',')) out.push_back(aggdp::parse_activation(item));
    if (out.size() == 1) out.assign(layers, out.front());
    if (out.size() != layers) throw aggdp::ValidationError("--sigma needs one nonlinearity or one per layer");
    return out;
}

aggdp::Stepsize parse_stepsize(const std::string& text) {
    if (text == "harmonic") return aggdp::Stepsize::harmonic();
    if (text.rfind("const:", 0) == 0) {
        try {
            std::size_t used = 0;
            const double g = std::stod(text.substr(6), &used);
            if (used == text.size() - 6) return aggdp::Stepsize::constant(g);
        } catch (const std::invalid_argument&) {
        } catch (const std::out_of_range&) {
        }
    }
    throw aggdp::ValidationError("--stepsize must be 'harmonic' or 'const:<gamma>', got '" + text + "'");
}

aggdp::Sampling parse_sampling(const std::string& text) {
    if (text == "state") return aggdp::Sampling::State;
    if (text == "aggregate") return aggdp::Sampling::Aggregate;
    throw aggdp::ValidationError("--sampling must be 'state' or 'aggregate', got '" + text + "'");
}

Json solution_json(const aggdp::Solution& u) {
    Json out = Json::array();
    for (int v : u) out.push_back(v);
    return out;
}

/// Shared run state: resolved config, result document and side files.
struct Run {
    std::string command;
    std::string out_dir = ".";
    std::optional<std::string> seed_flag;
    std::uint64_t seed = 0;
    Json config = Json::object();
    Json result = Json::object();
    std::vector<std::pair<std::string, std::string>> files;  ///< (name, contents)

    void add_file(std::string name, std::string contents) { files.emplace_back(std::move(name), std::move(contents)); }
};

/// Options shared by the subcommands that read an MDP and build an aggregation scheme.
struct ModelOptions {
    std::string mdp_path;
    std::string scheme_path;
    std::string q;
    std::string scoring;
    std::string policy_path;

    void add_mdp(CLI::App* app) { app->add_option("--mdp", mdp_path, "MDP JSON file")->required(); }

    void add_scheme(CLI::App* app) {
        app->add_option("--scheme", scheme_path, "aggregation scheme JSON file");
        app->add_option("--q", q, "cell count: contiguous cells, or quantile cells of --scoring ('singleton' allowed)");
        app->add_option("--scoring", scoring,
                        "scoring function for --q cells: J_star, J_mu, bellman_residual, or a JSON array file");
    }

    void add_policy(CLI::App* app) { app->add_option("--policy", policy_path, "policy JSON file (1-based controls)"); }

    aggdp::Mdp mdp() const { return aggdp::io::mdp_from_json(aggdp::io::read_json_file(mdp_path)); }

    aggdp::Policy policy(const aggdp::Mdp& mdp) const {
        if (policy_path.empty()) return aggdp::first_control_policy(mdp);
        return aggdp::io::policy_from_json(mdp, aggdp::io::read_json_file(policy_path));
    }

    aggdp::ScoringFunction score(const aggdp::Mdp& mdp) const {
        if (scoring == "J_star") return aggdp::solve_exact_vi(mdp, 1e-12).values;
        if (scoring == "J_mu") return aggdp::evaluate_policy(mdp, policy(mdp));
        if (scoring == "bellman_residual") return aggdp::bellman_residual_score(mdp, aggdp::evaluate_policy(mdp, policy(mdp)));
        const aggdp::Vector v = aggdp::io::vector_from_json(aggdp::io::read_json_file(scoring), "scoring");
        aggdp::detail::require(static_cast<std::size_t>(v.size()) == mdp.num_states(),
                               "scoring file must hold one value per state");
        return v;
    }

    aggdp::AggregationScheme scheme(const aggdp::Mdp& mdp) const {
        if (!scheme_path.empty()) {
            aggdp::detail::require(q.empty() && scoring.empty(), "give either --scheme or --q, not both");
            return aggdp::io::scheme_from_json(aggdp::io::read_json_file(scheme_path), mdp.num_states());
        }
        aggdp::detail::require(!q.empty(), "an aggregation scheme is required: give --scheme or --q");
        const std::size_t cells = parse_cells(q);
        if (!scoring.empty()) return aggdp::partition_by_scores(score(mdp), cells).scheme;
        aggdp::detail::require(cells != aggdp::kSingletonCells, "--q singleton needs --scoring");
        aggdp::detail::require(cells <= mdp.num_states(), "--q must not exceed the number of states");
        return aggdp::contiguous_scheme(mdp.num_states(), cells);
    }

    void describe(Json& config, bool with_scheme, bool with_policy) const {
        config["mdp"] = mdp_path;
        if (with_scheme) {
            if (!scheme_path.empty()) config["scheme"] = scheme_path;
            if (!q.empty()) config["q"] = q;
            if (!scoring.empty()) config["scoring"] = scoring;
        }
        if (with_policy) config["policy"] = policy_path.empty() ? Json("first-control") : Json(policy_path);
    }
};

Json bound_json(const aggdp::BoundReport& b) {
    Json violations = Json::array();
    for (const auto& v : b.violations)
        violations.push_back({{"state", v.state + 1}, {"cell", v.cell + 1}, {"gap", v.gap}, {"margin", v.margin}});
    return {{"epsilon", b.epsilon}, {"bound", b.bound}, {"max_gap", b.max_gap}, {"ok", b.ok()}, {"violations", violations}};
}

std::string lifted_csv(const aggdp::CostVector& lifted, const std::string& column) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < lifted.size(); ++i) rows.push_back({static_cast<double>(i + 1), lifted[i]});
    std::ostringstream os;
    aggdp::io::write_csv(os, {"state", column}, rows);
    return os.str();
}

// Subcommands. Each registers its flags and returns the action to run after parsing.

struct Command {
    CLI::App* sub;
    std::function<void(Run&)> action;
};

Command add_solve_exact(CLI::App& app) {
    auto* sub = app.add_subcommand("solve-exact", "exact value or policy iteration");
    auto model = std::make_shared<ModelOptions>();
    auto tol = std::make_shared<double>(1e-10);
    auto method = std::make_shared<std::string>("vi");
    model->add_mdp(sub);
    sub->add_option("--tol", *tol, "value iteration accuracy")->check(CLI::PositiveNumber);
    sub->add_option("--method", *method, "vi or pi")->check(CLI::IsMember({"vi", "pi"}));
    return {sub, [=](Run& run) {
        model->describe(run.config, false, false);
        run.config["tol"] = *tol;
        run.config["method"] = *method;
        const aggdp::Mdp mdp = model->mdp();
        if (*method == "vi") {
            const auto vi = aggdp::solve_exact_vi(mdp, *tol);
            run.result = {{"J", aggdp::io::to_json(vi.values)},
                          {"policy", aggdp::io::to_json(aggdp::policy_improve(mdp, vi.values))},
                          {"iterations", vi.iterations},
                          {"residual", vi.residual}};
        } else {
            const auto pi = aggdp::solve_exact_pi(mdp, aggdp::first_control_policy(mdp));
            run.result = {{"J", aggdp::io::to_json(pi.values)},
                          {"policy", aggdp::io::to_json(pi.policy)},
                          {"improvements", pi.improvements}};
        }
    }};
}

Command add_solve_aggregate(CLI::App& app) {
    auto* sub = app.add_subcommand("solve-aggregate", "solve the aggregate problem (optionally k-step or lambda)");
    auto model = std::make_shared<ModelOptions>();
    auto tol = std::make_shared<double>(1e-10);
    auto k = std::make_shared<std::size_t>(1);
    auto lambda = std::make_shared<std::optional<double>>();
    model->add_mdp(sub);
    model->add_scheme(sub);
    model->add_policy(sub);
    sub->add_option("--tol", *tol, "fixed-point accuracy")->check(CLI::PositiveNumber);
    sub->add_option("--k", *k, "lookahead depth of the k-step aggregate operator")->check(CLI::PositiveNumber);
    sub->add_option("--lambda", *lambda, "evaluate --policy with the lambda-aggregation operator")->check(CLI::Range(0.0, 1.0));
    return {sub, [=](Run& run) {
        model->describe(run.config, true, lambda->has_value());
        run.config["tol"] = *tol;
        run.config["k"] = *k;
        if (*lambda) run.config["lambda"] = **lambda;
        const aggdp::Mdp mdp = model->mdp();
        const aggdp::AggregationScheme scheme = model->scheme(mdp);
        run.result["cells"] = scheme.num_aggregate();
        if (*lambda) {
            aggdp::detail::require(*k == 1, "--lambda and --k cannot be combined");
            const auto ev = aggdp::lambda_evaluate(mdp, scheme, model->policy(mdp), **lambda, *tol);
            const aggdp::CostVector lifted = aggdp::lift_costs(scheme, ev.r);
            run.result["r"] = aggdp::io::to_json(ev.r);
            run.result["J_tilde"] = aggdp::io::to_json(lifted);
            run.result["terms"] = ev.terms;
            run.result["iterations"] = ev.iterations;
            run.add_file("solve_aggregate.csv", lifted_csv(lifted, "J_tilde"));
        } else if (*k > 1) {
            const auto sol = aggdp::solve_kstep(mdp, scheme, *k, *tol);
            run.result["r"] = aggdp::io::to_json(sol.r);
            run.result["J_tilde"] = aggdp::io::to_json(aggdp::lift_costs(scheme, sol.r));
            run.result["J_tilde0"] = aggdp::io::to_json(sol.j0);
            run.result["policy"] = aggdp::io::to_json(aggdp::policy_improve(mdp, sol.j0));
            run.result["iterations"] = sol.iterations;
            run.result["residual"] = sol.residual;
            run.add_file("solve_aggregate.csv", lifted_csv(sol.j0, "J_tilde0"));
        } else {
            const auto sol = aggdp::detail::solve_any_aggregate(mdp, scheme, *tol);
            const aggdp::CostVector lifted = aggdp::lift_costs(scheme, sol.r);
            run.result["r"] = aggdp::io::to_json(sol.r);
            run.result["J_tilde"] = aggdp::io::to_json(lifted);
            run.result["policy"] = aggdp::io::to_json(aggdp::extract_policy(mdp, scheme, sol.r));
            run.result["iterations"] = sol.iterations;
            run.result["residual"] = sol.residual;
            run.add_file("solve_aggregate.csv", lifted_csv(lifted, "J_tilde"));
        }
    }};
}

Command add_pi_aggregate(CLI::App& app) {
    auto* sub = app.add_subcommand("pi-aggregate", "aggregation-based policy iteration");
    auto model = std::make_shared<ModelOptions>();
    model->add_mdp(sub);
    model->add_scheme(sub);
    model->add_policy(sub);
    return {sub, [=](Run& run) {
        model->describe(run.config, true, true);
        const aggdp::Mdp mdp = model->mdp();
        const aggdp::AggregationScheme scheme = model->scheme(mdp);
        const auto pi = aggdp::aggregation_policy_iteration(mdp, scheme, model->policy(mdp));
        Json trace = Json::array();
        for (std::size_t t = 0; t < pi.trace.size(); ++t)
            trace.push_back({{"policy", aggdp::io::to_json(pi.policies[t])}, {"r", aggdp::io::to_json(pi.trace[t])}});
        run.result = {{"cells", scheme.num_aggregate()},
                      {"policy", aggdp::io::to_json(pi.policy)},
                      {"r", aggdp::io::to_json(pi.r)},
                      {"J_policy", aggdp::io::to_json(aggdp::evaluate_policy(mdp, pi.policy))},
                      {"trace", trace}};
    }};
}

Command add_lstd(CLI::App& app) {
    auto* sub = app.add_subcommand("lstd", "simulation-based aggregate policy evaluation (LSTD(0))");
    auto model = std::make_shared<ModelOptions>();
    auto samples = std::make_shared<std::size_t>(10'000);
    auto sampling = std::make_shared<std::string>("state");
    model->add_mdp(sub);
    model->add_scheme(sub);
    model->add_policy(sub);
    sub->add_option("--samples", *samples, "number of simulated transitions M")->check(CLI::PositiveNumber);
    sub->add_option("--sampling", *sampling, "state or aggregate");
    return {sub, [=](Run& run) {
        model->describe(run.config, true, true);
        run.config["samples"] = *samples;
        run.config["sampling"] = *sampling;
        const aggdp::Mdp mdp = model->mdp();
        const aggdp::AggregationScheme scheme = model->scheme(mdp);
        const aggdp::Policy mu = model->policy(mdp);
        const auto res = aggdp::lstd0_evaluate(mdp, scheme, mu, *samples, parse_sampling(*sampling), run.seed);
        run.result = {{"cells", scheme.num_aggregate()},
                      {"r", aggdp::io::to_json(res.r)},
                      {"r_exact", aggdp::io::to_json(aggdp::evaluate_aggregate_policy(mdp, scheme, mu))},
                      {"C", aggdp::io::to_json(res.c)},
                      {"b", aggdp::io::to_json(res.b)}};
    }};
}

Command add_qlearn(CLI::App& app) {
    auto* sub = app.add_subcommand("qlearn", "hard-aggregation Q-learning or asynchronous stochastic VI");
    auto model = std::make_shared<ModelOptions>();
    auto samples = std::make_shared<std::size_t>(100'000);
    auto stepsize = std::make_shared<std::string>("harmonic");
    auto method = std::make_shared<std::string>("qlearning");
    model->add_mdp(sub);
    model->add_scheme(sub);
    sub->add_option("--samples", *samples, "number of update steps")->check(CLI::PositiveNumber);
    sub->add_option("--stepsize", *stepsize, "harmonic or const:<gamma>");
    sub->add_option("--method", *method, "qlearning or async-vi")->check(CLI::IsMember({"qlearning", "async-vi"}));
    return {sub, [=](Run& run) {
        model->describe(run.config, true, false);
        run.config["samples"] = *samples;
        run.config["stepsize"] = *stepsize;
        run.config["method"] = *method;
        const aggdp::Mdp mdp = model->mdp();
        const aggdp::AggregationScheme scheme = model->scheme(mdp);
        const aggdp::Stepsize rule = parse_stepsize(*stepsize);
        run.result["cells"] = scheme.num_aggregate();
        if (*method == "qlearning") {
            const auto res = aggdp::hard_agg_qlearning(mdp, scheme, *samples, rule, run.seed);
            Json cell_policy = Json::array();
            for (std::size_t u : res.cell_policy) cell_policy.push_back(u + 1);
            run.result["Q"] = aggdp::io::to_json(res.q);
            run.result["cell_policy"] = cell_policy;
            run.result["policy"] = aggdp::io::to_json(res.policy);
            run.result["J_policy"] = aggdp::io::to_json(aggdp::evaluate_policy(mdp, res.policy));
        } else {
            const auto res = aggdp::async_stochastic_vi(mdp, scheme, *samples, rule, run.seed);
            run.result["r"] = aggdp::io::to_json(res.r);
            run.result["initial_residual"] = res.initial_residual;
            run.result["final_residual"] = res.final_residual;
            run.result["policy"] = aggdp::io::to_json(aggdp::extract_policy(mdp, scheme, res.r));
        }
    }};
}

struct DiscreteOptions {
    std::string problem_path;
    std::size_t jobs = 1;
    std::size_t samples = 2'000;
    std::size_t exhaustive_limit = 100'000;
    bool brute_force = false;

    void add(CLI::App* sub) {
        sub->add_option("--problem", problem_path, "discrete problem JSON file")->required();
        sub->add_option("--jobs", jobs, "worker threads for heuristic scoring")->check(CLI::PositiveNumber);
        sub->add_option("--samples", samples, "sampled prefixes per stage when a stage is too large to enumerate");
        sub->add_option("--exhaustive-limit", exhaustive_limit, "enumerate a stage exactly up to this many nodes");
        sub->add_flag("--brute-force", brute_force, "also report the brute-force optimum");
    }

    void describe(Json& config) const {
        config["problem"] = problem_path;
        config["jobs"] = jobs;
        config["samples"] = samples;
        config["exhaustive_limit"] = exhaustive_limit;
        config["brute_force"] = brute_force;
    }
};

void add_optimum(Json& result, const aggdp::DiscreteOptProblem& p) {
    const auto best = aggdp::brute_force_optimum(p);
    result["optimum"] = {{"solution", solution_json(best.u)}, {"cost", best.cost}};
}

Command add_discrete_opt(CLI::App& app) {
    auto* sub = app.add_subcommand("discrete-opt", "stage aggregation with heuristic scoring features");
    auto opts = std::make_shared<DiscreteOptions>();
    auto stages_q = std::make_shared<std::string>("singleton");
    auto lookahead = std::make_shared<int>(1);
    auto fortified = std::make_shared<bool>(false);
    opts->add(sub);
    sub->add_option("--stages-q", *stages_q, "intervals per score dimension: one value or one per stage 1..N-1");
    sub->add_option("--lookahead", *lookahead, "1 or 2")->check(CLI::IsMember({1, 2}));
    sub->add_flag("--fortified", *fortified, "return the best solution seen if it beats the constructed one");
    return {sub, [=](Run& run) {
        opts->describe(run.config);
        run.config["stages_q"] = *stages_q;
        run.config["lookahead"] = *lookahead;
        run.config["fortified"] = *fortified;
        const aggdp::io::DiscreteInstance inst = aggdp::io::discrete_problem_from_json(aggdp::io::read_json_file(opts->problem_path));
        aggdp::StageAggregationOptions sopt;
        sopt.q.clear();
        for (const auto& item : split(*stages_q, ',')) sopt.q.push_back(parse_cells(item));
        aggdp::detail::require(!sopt.q.empty(), "--stages-q is empty");
        sopt.sampler = {opts->exhaustive_limit, opts->samples, run.seed};
        sopt.jobs = opts->jobs;
        aggdp::Scorer scorer(inst.problem, aggdp::io::default_heuristics(inst));
        const auto agg = aggdp::build_stage_aggregation(scorer, sopt);
        const auto sol = aggdp::solve_stage_aggregate(scorer, agg);
        const auto plain = *lookahead == 2 ? aggdp::construct_solution_twostep(scorer, agg, sol)
                                           : aggdp::construct_solution(scorer, agg, sol);
        const auto chosen = *fortified ? aggdp::fortify(scorer.pool(), plain) : plain;
        Json stages = Json::array();
        for (std::size_t m = 1; m < inst.problem.size(); ++m) {
            const auto& st = agg.stage(m);
            stages.push_back({{"stage", m}, {"nodes", st.members.size()}, {"cells", st.grid.num_cells()},
                              {"exhaustive", st.exhaustive}});
        }
        Json heuristics = Json::array();
        for (const auto& h : scorer.heuristics()) heuristics.push_back(h.name);
        run.result = {{"problem", inst.problem.name},
                      {"heuristics", heuristics},
                      {"stages", stages},
                      {"root_value", sol.root},
                      {"constructed", {{"solution", solution_json(plain.u)}, {"cost", plain.cost}}},
                      {"solution", solution_json(chosen.u)},
                      {"cost", chosen.cost},
                      {"outside_lookups", chosen.outside},
                      {"heuristic_evaluations", scorer.evaluations()}};
        if (opts->brute_force) add_optimum(run.result, inst.problem);
    }};
}

Command add_rollout(CLI::App& app) {
    auto* sub = app.add_subcommand("rollout", "rollout with the problem's heuristics as base policies");
    auto opts = std::make_shared<DiscreteOptions>();
    opts->add(sub);
    return {sub, [=](Run& run) {
        opts->describe(run.config);
        const aggdp::io::DiscreteInstance inst = aggdp::io::discrete_problem_from_json(aggdp::io::read_json_file(opts->problem_path));
        aggdp::Scorer scorer(inst.problem, aggdp::io::default_heuristics(inst));
        Json base = Json::array();
        const aggdp::Vector from_scratch = scorer.score({});
        for (std::size_t k = 0; k < scorer.dimension(); ++k)
            base.push_back({{"heuristic", scorer.heuristics()[k].name}, {"cost", from_scratch[static_cast<Eigen::Index>(k)]}});
        const auto res = aggdp::rollout_solve(scorer);
        run.result = {{"problem", inst.problem.name},
                      {"base_heuristics", base},
                      {"solution", solution_json(res.u)},
                      {"cost", res.cost},
                      {"heuristic_evaluations", scorer.evaluations()}};
        if (opts->brute_force) add_optimum(run.result, inst.problem);
    }};
}

Command add_ssp_bench(CLI::App& app) {
    auto* sub = app.add_subcommand("ssp-bench", "deterministic chain: linear fits versus score-based aggregation");
    auto n = std::make_shared<std::size_t>(50);
    auto which = std::make_shared<std::string>("a");
    auto q_list = std::make_shared<std::string>("5,10,25,50");
    auto scoring = std::make_shared<std::string>("V1");
    sub->add_option("--n", *n, "chain length")->check(CLI::Range(std::size_t{2}, std::size_t{1'000'000}));
    sub->add_option("--case", *which, "a or b");
    sub->add_option("--q-list", *q_list, "comma-separated interval counts");
    sub->add_option("--scoring", *scoring, "V1, V0 or J_mu");
    return {sub, [=](Run& run) {
        const aggdp::ChainCase chain_case = aggdp::parse_chain_case(*which);
        const aggdp::ChainScoring chain_scoring = aggdp::parse_chain_scoring(*scoring);
        const auto qs = parse_size_list(*q_list, "--q-list");
        run.config["n"] = *n;
        run.config["case"] = aggdp::to_string(chain_case);
        run.config["q_list"] = qs;
        run.config["scoring"] = aggdp::to_string(chain_scoring);
        const auto chain = aggdp::chain_fixture(*n, chain_case);
        const auto table = aggdp::compare_chain(chain, qs, chain_scoring);
        Json runs = Json::array();
        for (const auto& r : table.runs)
            runs.push_back({{"q", r.q}, {"cells", r.cells}, {"sup_error", r.sup_error}, {"delta", r.delta},
                            {"r", aggdp::io::to_json(r.r)}, {"J_tilde", aggdp::io::to_json(r.lifted)}});
        run.result = {{"r1", table.r1}, {"r0", table.r0}, {"J_mu", aggdp::io::to_json(table.j_mu)},
                      {"V1_fit", aggdp::io::to_json(table.v1)}, {"V0_fit", aggdp::io::to_json(table.v0)}, {"runs", runs}};
        std::ostringstream csv;
        aggdp::write_chain_csv(table, csv);
        run.add_file("ssp_bench.csv", csv.str());
    }};
}

struct NetOptions {
    std::string layers = "8,1";
    std::string sigma = "tanh";
    std::size_t epochs = 500;
    double step = 0.01;
    double decay = 0.0;
    double ridge = 0.0;

    void add(CLI::App* sub) {
        sub->add_option("--layers", layers, "comma-separated hidden widths; the last is the feature count");
        sub->add_option("--sigma", sigma, "tanh, logistic or softplus (one, or one per layer)");
        sub->add_option("--epochs", epochs, "training epochs");
        sub->add_option("--step", step, "incremental gradient stepsize")->check(CLI::PositiveNumber);
        sub->add_option("--decay", decay, "stepsize at epoch t is step / (1 + decay t)");
        sub->add_option("--ridge", ridge, "ridge coefficient on the parameter vector");
    }

    std::vector<std::size_t> widths() const { return parse_size_list(layers, "--layers"); }

    void describe(Json& config) const {
        config["layers"] = widths();
        config["sigma"] = sigma;
        config["epochs"] = epochs;
        config["step"] = step;
        config["decay"] = decay;
        config["ridge"] = ridge;
    }
};

Command add_train_net(CLI::App& app) {
    auto* sub = app.add_subcommand("train-net", "fit a feature network to exact state costs");
    auto model = std::make_shared<ModelOptions>();
    auto net = std::make_shared<NetOptions>();
    auto targets = std::make_shared<std::string>("optimal");
    model->add_mdp(sub);
    model->add_policy(sub);
    net->add(sub);
    sub->add_option("--targets", *targets, "optimal (J*) or policy (J_mu of --policy)")->check(CLI::IsMember({"optimal", "policy"}));
    return {sub, [=](Run& run) {
        model->describe(run.config, false, *targets == "policy");
        net->describe(run.config);
        run.config["targets"] = *targets;
        const aggdp::Mdp mdp = model->mdp();
        const aggdp::CostVector j = *targets == "optimal" ? aggdp::solve_exact_vi(mdp, 1e-12).values
                                                          : aggdp::evaluate_policy(mdp, model->policy(mdp));
        const auto widths = net->widths();
        const aggdp::NetworkSpec spec = aggdp::NetworkSpec::one_hot(mdp.num_states(), widths, parse_activations(net->sigma, widths.size()));
        aggdp::TrainingSet data;
        for (std::size_t i = 0; i < mdp.num_states(); ++i) data.push_back({i, j[static_cast<Eigen::Index>(i)]});
        const auto trained = aggdp::train_incremental(spec, aggdp::init_params(spec, run.seed), data,
                                                      {net->epochs, net->step, net->decay, net->ridge, run.seed});
        aggdp::Vector fit(j.size());
        for (std::size_t i = 0; i < mdp.num_states(); ++i)
            fit[static_cast<Eigen::Index>(i)] = aggdp::forward(spec, trained.params, i).output;
        run.result = {{"targets", aggdp::io::to_json(j)},
                      {"fit", aggdp::io::to_json(fit)},
                      {"sup_error", aggdp::sup_distance(fit, j)},
                      {"final_loss", trained.loss.empty() ? aggdp::training_loss(spec, trained.params, data) : trained.loss.back()},
                      {"features", aggdp::io::to_json(aggdp::extract_feature_mapping(spec, trained.params))},
                      {"params_file", "params.json"}};
        std::vector<std::vector<double>> rows;
        for (std::size_t t = 0; t < trained.loss.size(); ++t) rows.push_back({static_cast<double>(t + 1), trained.loss[t]});
        std::ostringstream csv;
        aggdp::io::write_csv(csv, {"epoch", "loss"}, rows);
        run.add_file("train_loss.csv", csv.str());
        run.add_file("params.json", aggdp::io::params_to_json(spec, trained.params).dump(2) + "\n");
    }};
}

Command add_pi_nn(CLI::App& app) {
    auto* sub = app.add_subcommand("pi-nn", "approximate policy iteration with network features and aggregation");
    auto model = std::make_shared<ModelOptions>();
    auto net = std::make_shared<NetOptions>();
    auto cycles = std::make_shared<std::size_t>(3);
    auto q = std::make_shared<std::string>("2");
    auto samples = std::make_shared<std::size_t>(0);
    auto all_states = std::make_shared<bool>(false);
    auto noise = std::make_shared<double>(0.0);
    auto freeze = std::make_shared<bool>(false);
    auto tol = std::make_shared<double>(1e-10);
    net->epochs = 300;
    net->step = 0.02;
    model->add_mdp(sub);
    model->add_policy(sub);
    net->add(sub);
    sub->add_option("--cycles", *cycles, "policy iteration cycles")->check(CLI::PositiveNumber);
    sub->add_option("--q", *q, "intervals per feature dimension ('singleton' allowed)");
    sub->add_option("--samples", *samples, "sampled states per cycle (0 means 2n)");
    sub->add_flag("--all-states", *all_states, "add every state to the sample set");
    sub->add_option("--noise", *noise, "standard deviation of Gaussian noise on training targets");
    sub->add_flag("--freeze-features", *freeze, "train only in the first cycle");
    sub->add_option("--tol", *tol, "aggregate solve accuracy")->check(CLI::PositiveNumber);
    return {sub, [=](Run& run) {
        model->describe(run.config, false, true);
        net->describe(run.config);
        run.config["cycles"] = *cycles;
        run.config["q"] = cells_json(parse_cells(*q));
        run.config["samples"] = *samples;
        run.config["all_states"] = *all_states;
        run.config["noise"] = *noise;
        run.config["freeze_features"] = *freeze;
        run.config["tol"] = *tol;
        const aggdp::Mdp mdp = model->mdp();
        aggdp::PipelineOptions opt;
        opt.cycles = *cycles;
        opt.widths = net->widths();
        opt.activations = parse_activations(net->sigma, opt.widths.size());
        opt.training = {net->epochs, net->step, net->decay, net->ridge, run.seed};
        opt.q = parse_cells(*q);
        opt.samples = *samples;
        opt.include_all_states = *all_states;
        opt.target_noise = *noise;
        opt.freeze_features = *freeze;
        opt.tol = *tol;
        opt.seed = run.seed;
        opt.initial_policy = model->policy(mdp);
        const auto res = aggdp::run_pi_with_nn_features(mdp, opt);
        Json reports = Json::array();
        for (const auto& c : res.cycles)
            reports.push_back({{"policy", aggdp::io::to_json(c.policy)},
                               {"J_mu", aggdp::io::to_json(c.j_mu)},
                               {"train_loss", c.train_loss},
                               {"sampled_states", c.sampled_states},
                               {"cells", c.cells},
                               {"r_star", aggdp::io::to_json(c.r_star)},
                               {"sup_difference", c.sup_difference},
                               {"next_policy", aggdp::io::to_json(c.next_policy)},
                               {"J_next", aggdp::io::to_json(c.j_next)}});
        run.result = {{"policy", aggdp::io::to_json(res.policy)},
                      {"J_policy", aggdp::io::to_json(res.cycles.back().j_next)},
                      {"J_star", aggdp::io::to_json(aggdp::solve_exact_vi(mdp, 1e-12).values)},
                      {"cycles", reports}};
    }};
}

Command add_check_bounds(CLI::App& app) {
    auto* sub = app.add_subcommand("check-bounds", "verify the aggregation error bounds against exact J*");
    auto model = std::make_shared<ModelOptions>();
    auto k = std::make_shared<std::size_t>(1);
    auto tol = std::make_shared<double>(1e-9);
    model->add_mdp(sub);
    model->add_scheme(sub);
    model->add_policy(sub);
    sub->add_option("--k", *k, "k-step aggregation depth")->check(CLI::PositiveNumber);
    sub->add_option("--tol", *tol, "slack allowed on each bound")->check(CLI::NonNegativeNumber);
    return {sub, [=](Run& run) {
        model->describe(run.config, true, !model->scoring.empty());
        run.config["k"] = *k;
        run.config["tol"] = *tol;
        const aggdp::Mdp mdp = model->mdp();
        const aggdp::AggregationScheme scheme = model->scheme(mdp);
        const aggdp::CostVector j_star = aggdp::solve_exact_vi(mdp, 1e-13).values;
        run.result["cells"] = scheme.num_aggregate();
        if (*k == 1) {
            const auto r = aggdp::solve_aggregate_vi(mdp, scheme, 1e-13).r;
            run.result["r"] = aggdp::io::to_json(r);
            run.result["cell_bound"] = bound_json(aggdp::check_error_bound(mdp, scheme, r, j_star, *tol));
        } else {
            const auto r = aggdp::solve_kstep(mdp, scheme, *k, 1e-13).r;
            run.result["r"] = aggdp::io::to_json(r);
            run.result["kstep_bound"] = bound_json(aggdp::check_kstep_bound(mdp, scheme, *k, r, j_star, *tol));
        }
        if (!model->scoring.empty()) {
            const auto rep = aggdp::check_prop44(mdp, model->score(mdp), scheme, std::nullopt, *tol);
            Json violations = Json::array();
            for (const auto& v : rep.violations)
                violations.push_back({{"state", v.state + 1}, {"cell", v.cell + 1}, {"gap", v.gap}, {"margin", v.margin}});
            run.result["score_bound"] = {{"hypothesis_holds", rep.hypothesis_holds}, {"beta", rep.beta}, {"delta", rep.delta},
                                         {"bound", rep.bound}, {"max_gap", rep.max_gap}, {"ok", rep.ok()},
                                         {"violations", violations}};
        }
        run.result["J_star"] = aggdp::io::to_json(j_star);
    }};
}

std::string one_line(std::string msg) {
    for (char& c : msg)
        if (c == '\n' || c == '\r') c = ' ';
    return msg;
}

int fail(const char* kind, const std::string& msg, int code) {
    std::cerr << "aggdp: error[" << kind << "]: " << one_line(msg) << '\n';
    return code;
}

void write_outputs(const Run& run) {
    std::error_code ec;
    fs::create_directories(run.out_dir, ec);
    if (ec) throw aggdp::ValidationError("cannot create output directory '" + run.out_dir + "': " + ec.message());
    Json doc;
    doc["tool"] = "aggdp";
    doc["version"] = aggdp::kVersion;
    doc["command"] = run.command;
    doc["seed"] = run.seed;
    doc["config"] = run.config;
    doc["result"] = run.result;
    std::vector<std::pair<std::string, std::string>> files{{run.command + ".json", doc.dump(2) + "\n"}};
    files.insert(files.end(), run.files.begin(), run.files.end());
    for (const auto& [name, contents] : files) {
        const fs::path path = fs::path(run.out_dir) / name;
        std::ofstream out(path, std::ios::binary);
        out << contents;
        if (!out) throw aggdp::ValidationError("cannot write '" + path.string() + "'");
        std::cout << "wrote " << path.string() << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Aggregation-based approximate dynamic programming"};
    app.set_version_flag("--version", aggdp::kVersion);
    app.require_subcommand(1);
    Run run;
    std::vector<Command> commands;
    for (auto add : {add_solve_exact, add_solve_aggregate, add_pi_aggregate, add_lstd, add_qlearn, add_discrete_opt,
                     add_rollout, add_ssp_bench, add_train_net, add_pi_nn, add_check_bounds})
        commands.push_back(add(app));
    for (auto& c : commands) {
        c.sub->add_option("--out", run.out_dir, "output directory");
        c.sub->add_option("--seed", run.seed_flag, "random seed (falls back to AGGDP_SEED, then 0)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("usage", e.what(), kExitValidation);
    }
    try {
        if (run.seed_flag) {
            run.seed = parse_seed(*run.seed_flag, "--seed");
        } else if (const char* env = std::getenv("AGGDP_SEED"); env && *env) {
            run.seed = parse_seed(env, "AGGDP_SEED");
        }
        for (auto& c : commands) {
            if (!c.sub->parsed()) continue;
            run.command = c.sub->get_name();
            c.action(run);
            run.config["seed"] = run.seed;
            run.config["out"] = run.out_dir;
            std::cout << "resolved config (" << run.command << "):\n" << run.config.dump(2) << '\n';
            write_outputs(run);
        }
    } catch (const aggdp::NumericalError& e) {
        return fail("numerical", e.what(), kExitNumerical);
    } catch (const aggdp::ValidationError& e) {
        return fail("validation", e.what(), kExitValidation);
    } catch (const nlohmann::json::exception& e) {
        return fail("validation", e.what(), kExitValidation);
    } catch (const std::invalid_argument& e) {
        return fail("validation", e.what(), kExitValidation);
    }
    return 0;
}
