#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "copkit/operators.hpp"

// Desk-scale environment suite: deterministic generators for the study
// environments, including the off-policy divergence construction.
namespace copkit {

enum class EnvKind { RandomErgodic, Chain, Gridworld, DivergenceExample, EpisodicChain };

EnvKind env_kind_from_string(const std::string& s);
std::string to_string(EnvKind kind);

struct EnvSpec {
    EnvKind kind = EnvKind::Chain;
    int n_states = 5;       // random_ergodic, chain, episodic_chain
    int n_actions = 2;      // random_ergodic
    int grid_width = 5;     // gridworld
    int grid_height = 5;
    double mix = 0.05;      // uniform mixing forced onto random_ergodic rows
    double slip = 0.1;      // gridworld action noise

    static EnvSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct GeneratedEnv {
    std::optional<Mdp> mdp;
    std::optional<EpisodicMdp> emdp;
    Policy behavior;
    Policy target;
    std::optional<FeatureMap> features;  // only for the divergence example
    int start_state = 0;

    const Mdp& require_mdp() const;
    const EpisodicMdp& require_emdp() const;
};

// Deterministic in (spec, seed).
GeneratedEnv generate_env(const EnvSpec& spec, uint64_t seed);

// Seeded random policy with strictly positive action probabilities.
Policy random_policy(int n_states, int n_actions, std::mt19937_64& rng);

// Random ergodic chain (row-normalized Dirichlet mixed with uniform),
// used by property tests and the acceptance suite.
Matrix random_ergodic_matrix(int n, std::mt19937_64& rng, double mix = 0.05);

// Reversible chain built from a random symmetric positive matrix; its COP
// operator is symmetric under the uniform-weighting construction.
struct ReversibleChain {
    InducedChain chain;
    StateDistribution stationary;
};
ReversibleChain random_reversible_chain(int n, std::mt19937_64& rng);

}  // namespace copkit
