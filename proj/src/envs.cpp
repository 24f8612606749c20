#include "copkit/envs.hpp"

#include <algorithm>
#include <cmath>

#include "copkit/constants.hpp"

namespace copkit {

namespace {

Vec dirichlet_row(int n, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    Vec row(n);
    double sum = 0.0;
    for (double& v : row) {
        v = gamma(rng);
        sum += v;
    }
    for (double& v : row) v /= sum;
    return row;
}

GeneratedEnv make_chain(int n) {
    // Fixed birth-death chain, seed-independent. Action 0 drifts right,
    // action 1 drifts left; boundaries reflect into staying put.
    const int na = 2;
    Vec t(static_cast<size_t>(n) * na * n, 0.0);
    Matrix reward(n, na);
    auto at = [&](int s, int a, int s2) -> double& {
        return t[(static_cast<size_t>(s) * na + a) * n + s2];
    };
    for (int s = 0; s < n; ++s) {
        const int right = std::min(s + 1, n - 1);
        const int left = std::max(s - 1, 0);
        at(s, 0, right) += 0.8;
        at(s, 0, left) += 0.1;
        at(s, 0, s) += 0.1;
        at(s, 1, left) += 0.8;
        at(s, 1, right) += 0.1;
        at(s, 1, s) += 0.1;
        reward.at(s, 0) = (s == n - 1) ? 1.0 : 0.0;
        reward.at(s, 1) = 0.0;
    }
    GeneratedEnv env{Mdp(n, na, 0.9, std::move(t), std::move(reward)),
                     std::nullopt,
                     Policy::uniform(n, na),
                     Policy::uniform(n, na),
                     std::nullopt,
                     0};
    // Fixed non-uniform target so pi != mu.
    Matrix probs(n, na);
    for (int s = 0; s < n; ++s) {
        probs.at(s, 0) = 0.7;
        probs.at(s, 1) = 0.3;
    }
    env.target = Policy(std::move(probs));
    return env;
}

GeneratedEnv make_random_ergodic(const EnvSpec& spec, uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int n = spec.n_states;
    const int na = spec.n_actions;
    Vec t(static_cast<size_t>(n) * na * n, 0.0);
    Matrix reward(n, na);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < na; ++a) {
            Vec row = dirichlet_row(n, rng);
            for (int s2 = 0; s2 < n; ++s2)
                t[(static_cast<size_t>(s) * na + a) * n + s2] =
                    (1.0 - spec.mix) * row[s2] + spec.mix / n;
            reward.at(s, a) = norm(rng);
        }
    GeneratedEnv env{Mdp(n, na, 0.9, std::move(t), std::move(reward)),
                     std::nullopt,
                     Policy::uniform(n, na),
                     Policy::uniform(n, na),
                     std::nullopt,
                     0};
    env.target = random_policy(n, na, rng);
    return env;
}

GeneratedEnv make_gridworld(const EnvSpec& spec) {
    const int w = spec.grid_width;
    const int h = spec.grid_height;
    const int n = w * h;
    const int na = 4;  // up, down, left, right
    const int start = 0;
    const int goal = n - 1;
    auto step_to = [&](int s, int a) {
        int x = s % w, y = s / w;
        switch (a) {
            case 0: y = std::max(y - 1, 0); break;
            case 1: y = std::min(y + 1, h - 1); break;
            case 2: x = std::max(x - 1, 0); break;
            default: x = std::min(x + 1, w - 1); break;
        }
        return y * w + x;
    };
    Vec t(static_cast<size_t>(n) * na * n, 0.0);
    Matrix reward(n, na);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < na; ++a) {
            auto cell = [&](int s2) -> double& {
                return t[(static_cast<size_t>(s) * na + a) * n + s2];
            };
            if (s == goal) {
                cell(start) += 1.0;  // teleport back; keeps the chain recurrent
                reward.at(s, a) = 1.0;
            } else {
                cell(step_to(s, a)) += 1.0 - spec.slip;
                for (int b = 0; b < na; ++b) cell(step_to(s, b)) += spec.slip / na;
                reward.at(s, a) = 0.0;
            }
        }
    return GeneratedEnv{Mdp(n, na, 0.99, std::move(t), std::move(reward)),
                        std::nullopt,
                        Policy::uniform(n, na),
                        Policy::uniform(n, na),
                        std::nullopt,
                        start};
}

GeneratedEnv make_divergence_example() {
    // Two states with a single feature phi = [1, 2]. Under the behavior
    // policy's near-uniform update distribution, semi-gradient TD for the
    // target policy has positive expected drift (the classic spiral);
    // reweighting with d_pi/d_mu flips the drift negative.
    const int n = 2, na = 2;
    Vec t(static_cast<size_t>(n) * na * n, 0.0);
    auto at = [&](int s, int a, int s2) -> double& {
        return t[(static_cast<size_t>(s) * na + a) * n + s2];
    };
    // action 0 (target): s0 -> s1; s1 stays with high probability
    at(0, 0, 1) = 1.0;
    at(1, 0, 0) = 0.2;
    at(1, 0, 1) = 0.8;
    // action 1: drifts toward s0
    at(0, 1, 0) = 0.9;
    at(0, 1, 1) = 0.1;
    at(1, 1, 0) = 0.9;
    at(1, 1, 1) = 0.1;
    Matrix reward(n, na);  // zero rewards: the projected fixed point is 0
    Matrix target_probs(n, na);
    target_probs.at(0, 0) = 1.0;
    target_probs.at(1, 0) = 1.0;
    Matrix phi(n, 1);
    phi.at(0, 0) = 1.0;
    phi.at(1, 0) = 2.0;
    GeneratedEnv env{Mdp(n, na, 0.99, std::move(t), std::move(reward)),
                     std::nullopt,
                     Policy::uniform(n, na),
                     Policy(std::move(target_probs)),
                     FeatureMap(std::move(phi)),
                     0};
    return env;
}

GeneratedEnv make_episodic_chain(const EnvSpec& spec) {
    // s_0 -> s_1 -> ... -> s_{n-1} -> terminal; action 1 may dwell.
    const int n = spec.n_states;
    const int na = 2;
    Vec t(static_cast<size_t>(n) * na * n, 0.0);
    Matrix reward(n, na);
    auto at = [&](int s, int a, int s2) -> double& {
        return t[(static_cast<size_t>(s) * na + a) * n + s2];
    };
    for (int s = 0; s < n; ++s) {
        if (s + 1 < n) {
            at(s, 0, s + 1) = 1.0;
            if (s == 0) {
                at(s, 1, s + 1) = 1.0;  // no transition may return to s_0
            } else {
                at(s, 1, s + 1) = 0.7;
                at(s, 1, s) = 0.3;
            }
        }
        // last state: all mass terminates
        reward.at(s, 0) = (s == n - 1) ? 1.0 : 0.0;
    }
    Matrix target_probs(n, na);
    for (int s = 0; s < n; ++s) {
        target_probs.at(s, 0) = 0.8;
        target_probs.at(s, 1) = 0.2;
    }
    return GeneratedEnv{std::nullopt,
                        EpisodicMdp(n, na, 0.9, std::move(t), std::move(reward), 0),
                        Policy::uniform(n, na),
                        Policy(std::move(target_probs)),
                        std::nullopt,
                        0};
}

}  // namespace

EnvKind env_kind_from_string(const std::string& s) {
    if (s == "random_ergodic") return EnvKind::RandomErgodic;
    if (s == "chain") return EnvKind::Chain;
    if (s == "gridworld") return EnvKind::Gridworld;
    if (s == "divergence_example") return EnvKind::DivergenceExample;
    if (s == "episodic_chain") return EnvKind::EpisodicChain;
    throw InvalidSpec("unknown environment kind: " + s);
}

std::string to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::RandomErgodic: return "random_ergodic";
        case EnvKind::Chain: return "chain";
        case EnvKind::Gridworld: return "gridworld";
        case EnvKind::DivergenceExample: return "divergence_example";
        case EnvKind::EpisodicChain: return "episodic_chain";
    }
    return "?";
}

EnvSpec EnvSpec::from_json(const nlohmann::json& j) {
    EnvSpec spec;
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") spec.kind = env_kind_from_string(value.get<std::string>());
        else if (key == "n_states") spec.n_states = value.get<int>();
        else if (key == "n_actions") spec.n_actions = value.get<int>();
        else if (key == "grid_width") spec.grid_width = value.get<int>();
        else if (key == "grid_height") spec.grid_height = value.get<int>();
        else if (key == "mix") spec.mix = value.get<double>();
        else if (key == "slip") spec.slip = value.get<double>();
        else throw InvalidSpec("unknown env key: " + key);
    }
    if (spec.n_states < 2) throw InvalidSpec("env: need at least 2 states");
    return spec;
}

nlohmann::json EnvSpec::to_json() const {
    return {{"kind", to_string(kind)},
            {"n_states", n_states},
            {"n_actions", n_actions},
            {"grid_width", grid_width},
            {"grid_height", grid_height},
            {"mix", mix},
            {"slip", slip}};
}

const Mdp& GeneratedEnv::require_mdp() const {
    if (!mdp) throw InvalidSpec("environment is episodic where a continuing MDP is required");
    return *mdp;
}

const EpisodicMdp& GeneratedEnv::require_emdp() const {
    if (!emdp) throw InvalidSpec("environment is continuing where an episodic MDP is required");
    return *emdp;
}

GeneratedEnv generate_env(const EnvSpec& spec, uint64_t seed) {
    switch (spec.kind) {
        case EnvKind::Chain: return make_chain(spec.n_states);
        case EnvKind::RandomErgodic: return make_random_ergodic(spec, seed);
        case EnvKind::Gridworld: return make_gridworld(spec);
        case EnvKind::DivergenceExample: return make_divergence_example();
        case EnvKind::EpisodicChain: return make_episodic_chain(spec);
    }
    throw InvalidSpec("unhandled environment kind");
}

Policy random_policy(int n_states, int n_actions, std::mt19937_64& rng) {
    Matrix probs(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        Vec row = dirichlet_row(n_actions, rng);
        for (int a = 0; a < n_actions; ++a) probs.at(s, a) = 0.9 * row[a] + 0.1 / n_actions;
    }
    return Policy(std::move(probs));
}

Matrix random_ergodic_matrix(int n, std::mt19937_64& rng, double mix) {
    Matrix p(n, n);
    for (int s = 0; s < n; ++s) {
        Vec row = dirichlet_row(n, rng);
        for (int s2 = 0; s2 < n; ++s2) p.at(s, s2) = (1.0 - mix) * row[s2] + mix / n;
    }
    return p;
}

ReversibleChain random_reversible_chain(int n, std::mt19937_64& rng) {
    // Random symmetric positive matrix balanced into a symmetric doubly
    // stochastic chain (symmetric Sinkhorn). Its stationary distribution is
    // uniform, so the COP operator D^{-1} P^T D = P^T = P is symmetric.
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    Matrix w(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double v = unif(rng);
            w.at(i, j) = v;
            w.at(j, i) = v;
        }
    Vec rowsum(n, 0.0);
    for (int it = 0; it < 2000; ++it) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            rowsum[i] = 0.0;
            for (int j = 0; j < n; ++j) rowsum[i] += w.at(i, j);
            worst = std::max(worst, std::fabs(rowsum[i] - 1.0));
        }
        if (worst < 1e-14) break;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                w.at(i, j) /= std::sqrt(rowsum[i] * rowsum[j]);
    }
    // Absorb the leftover row-sum defect into the diagonal; symmetric and
    // exact row sums.
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += w.at(i, j);
        w.at(i, i) += 1.0 - s;
    }
    return ReversibleChain{InducedChain(std::move(w), Vec(n, 0.0)),
                           StateDistribution::uniform(n)};
}

}  // namespace copkit
