#pragma once

#include "aggdp/mdp.hpp"
#include "aggdp/rng.hpp"

#include <algorithm>
#include <cstdint>

namespace aggdp::fixtures {

/// Two states, discount 0.5, deterministic cycle 1 -> 2 -> 1 with stage costs g = (1, 0).
inline Mdp two_state() {
    MdpBuilder b = MdpBuilder::discounted(2, 0.5);
    b.add_control(0);
    b.add_control(1);
    b.add_transition(0, 0, 1, 1.0, 1.0);
    b.add_transition(1, 0, 0, 1.0, 0.0);
    return b.build();
}

/// two_state() plus a second control at state 1: a deterministic self-loop of cost 0.
inline Mdp two_state_with_self_loop() {
    MdpBuilder b = MdpBuilder::discounted(2, 0.5);
    b.add_control(0);
    b.add_control(0);
    b.add_control(1);
    b.add_transition(0, 0, 1, 1.0, 1.0);
    b.add_transition(0, 1, 0, 1.0, 0.0);
    b.add_transition(1, 0, 0, 1.0, 0.0);
    return b.build();
}

/// One state with a cost-g self loop.
inline Mdp self_loop(double discount, double cost) {
    MdpBuilder b = MdpBuilder::discounted(1, discount);
    b.add_control(0);
    b.add_transition(0, 0, 0, 1.0, cost);
    return b.build();
}

struct RandomMdpOptions {
    std::size_t states = 5;
    std::size_t min_controls = 1;
    std::size_t max_controls = 2;
    double discount = 0.9;
    std::size_t max_successors = 3;  ///< support size of each transition row (capped at n)
    double cost_low = 0.0;
    double cost_high = 1.0;
};

/// Seeded random discounted model. Each (s, u) row has 1..max_successors distinct successors
/// with random weights and per-transition costs uniform in [cost_low, cost_high).
inline Mdp random_discounted(const RandomMdpOptions& opt, std::uint64_t seed) {
    CounterRng rng(seed);
    MdpBuilder b = MdpBuilder::discounted(opt.states, opt.discount);
    const std::size_t span = opt.max_controls - opt.min_controls + 1;
    for (std::size_t s = 0; s < opt.states; ++s) {
        const std::size_t controls = opt.min_controls + static_cast<std::size_t>(rng.below(span));
        for (std::size_t c = 0; c < controls; ++c) {
            const std::size_t u = b.add_control(s);
            const std::size_t cap = std::min(opt.max_successors, opt.states);
            const std::size_t support = 1 + static_cast<std::size_t>(rng.below(cap));
            std::vector<std::size_t> targets(opt.states);
            for (std::size_t j = 0; j < opt.states; ++j) targets[j] = j;
            rng.shuffle(targets);
            std::vector<double> weights(support);
            double total = 0.0;
            for (double& w : weights) {
                w = 0.05 + rng.uniform();
                total += w;
            }
            double assigned = 0.0;
            for (std::size_t k = 0; k < support; ++k) {
                const double p = k + 1 == support ? 1.0 - assigned : weights[k] / total;
                assigned += p;
                const double g = opt.cost_low + (opt.cost_high - opt.cost_low) * rng.uniform();
                b.add_transition(s, u, static_cast<std::ptrdiff_t>(targets[k]), p, g);
            }
        }
    }
    return b.build();
}

/// Random feasible policy.
inline Policy random_policy(const Mdp& mdp, std::uint64_t seed) {
    CounterRng rng(seed);
    Policy mu{std::vector<std::size_t>(mdp.num_states())};
    for (std::size_t s = 0; s < mdp.num_states(); ++s) mu[s] = static_cast<std::size_t>(rng.below(mdp.num_controls(s)));
    return mu;
}

/// Number of deterministic stationary policies, saturating at SIZE_MAX.
inline std::size_t count_policies(const Mdp& mdp) {
    std::size_t total = 1;
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        const std::size_t c = mdp.num_controls(s);
        if (total > SIZE_MAX / c) return SIZE_MAX;
        total *= c;
    }
    return total;
}

} // namespace aggdp::fixtures
