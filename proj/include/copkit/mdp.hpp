#pragma once

#include <string>

#include <json.hpp>

#include "copkit/errors.hpp"
#include "copkit/linalg.hpp"

// Tabular MDP and Markov-chain machinery: policy-induced chains, stationary
// distributions, discounted reset chains, and episodic visitation vectors.
// All types validate their invariants at construction and are immutable
// afterwards; every operation is a pure function.
namespace copkit {

class Mdp {
public:
    // transition is indexed [s][a][s'] (row-major tensor); each (s,a) row
    // must be a probability distribution. Substochastic rows are only
    // admitted through EpisodicMdp.
    Mdp(int n_states, int n_actions, double discount, Vec transition, Matrix reward);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    double discount() const { return discount_; }
    bool substochastic() const { return substochastic_; }

    double p(int s, int a, int s2) const {
        return transition_[(static_cast<size_t>(s) * n_actions_ + a) * n_states_ + s2];
    }
    const double* row(int s, int a) const {
        return transition_.data() + (static_cast<size_t>(s) * n_actions_ + a) * n_states_;
    }
    double r(int s, int a) const { return reward_.at(s, a); }
    const Matrix& reward() const { return reward_; }

    nlohmann::json to_json() const;
    static Mdp from_json(const nlohmann::json& j);

private:
    friend class EpisodicMdp;
    struct substochastic_tag {};
    Mdp(int n_states, int n_actions, double discount, Vec transition, Matrix reward,
        substochastic_tag);
    void validate(bool allow_substochastic) const;

    int n_states_;
    int n_actions_;
    double discount_;
    Vec transition_;
    Matrix reward_;
    bool substochastic_ = false;
};

class Policy {
public:
    // probs(s, a) = pi(a|s); every row a distribution over actions.
    explicit Policy(Matrix probs);

    int n_states() const { return probs_.rows; }
    int n_actions() const { return probs_.cols; }
    double prob(int s, int a) const { return probs_.at(s, a); }
    const Matrix& probs() const { return probs_; }

    static Policy uniform(int n_states, int n_actions);

private:
    Matrix probs_;
};

// State-to-state chain induced by a policy: P_pi(s'|s) and r_pi(s).
class InducedChain {
public:
    InducedChain(Matrix transition, Vec expected_reward, bool substochastic = false);

    int n_states() const { return transition_.rows; }
    const Matrix& transition() const { return transition_; }
    const Vec& expected_reward() const { return expected_reward_; }
    bool substochastic() const { return substochastic_; }

private:
    Matrix transition_;
    Vec expected_reward_;
    bool substochastic_;
};

class StateDistribution {
public:
    explicit StateDistribution(Vec probs);

    int size() const { return static_cast<int>(probs_.size()); }
    double operator()(int s) const { return probs_[s]; }
    const Vec& probs() const { return probs_; }
    const double* data() const { return probs_.data(); }

    static StateDistribution uniform(int n);

private:
    Vec probs_;
};

// Per-state ratio vector approximating d_pi / d_mu; entries may be signed.
class RatioVector {
public:
    explicit RatioVector(Vec values);

    int size() const { return static_cast<int>(values_.size()); }
    double operator()(int s) const { return values_[s]; }
    const Vec& values() const { return values_; }
    Vec& values() { return values_; }

    static RatioVector ones(int n);
    // True when sum_s d_mu(s) c(s) = 1 within tolerance.
    bool is_normalized(const StateDistribution& d_mu, double tol = 1e-8) const;

private:
    Vec values_;
};

// Episodic MDP with a single start state that no transition returns to.
// Policy-induced chains are substochastic; the missing row mass is the
// per-step termination probability.
class EpisodicMdp {
public:
    EpisodicMdp(int n_states, int n_actions, double discount, Vec transition, Matrix reward,
                int start_state);

    const Mdp& base() const { return base_; }
    int start_state() const { return start_state_; }

private:
    Mdp base_;
    int start_state_;
};

// --- Operations ---

InducedChain induce_chain(const Mdp& mdp, const Policy& policy);
InducedChain induce_chain(const EpisodicMdp& emdp, const Policy& policy);

// Strong connectivity plus aperiodicity (gcd of cycle lengths 1), computed
// structurally on the nonzero pattern.
bool check_ergodic(const InducedChain& chain);

// Solves d = d P_pi, sum d = 1 by a direct least-squares solve; falls back
// to power iteration past kDirectSolveMaxStates states.
StateDistribution stationary_distribution(const InducedChain& chain);

// hat P_pi = gamma_hat P_pi + (1 - gamma_hat) e d_mu^T.
InducedChain discounted_reset_chain(const InducedChain& chain, const StateDistribution& d_mu,
                                    double gamma_hat);

// Closed form hat d_pi = (1 - gamma_hat) (I - gamma_hat P_pi^T)^{-1} d_mu.
StateDistribution discounted_stationary(const InducedChain& chain, const StateDistribution& d_mu,
                                        double gamma_hat);

RatioVector ratio_of(const StateDistribution& numerator, const StateDistribution& denominator);

// Unnormalized visitation vector: the solution of d = P_pi^T d + d_0.
Vec episodic_visitation(const EpisodicMdp& emdp, const Policy& policy);

// Largest-magnitude eigenvalue estimate of |M| via power iteration.
double spectral_radius_estimate(const Matrix& m, int iters = 200);

std::string mdp_to_string(const Mdp& mdp);

}  // namespace copkit
