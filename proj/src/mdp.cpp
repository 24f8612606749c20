#include "copkit/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include <Eigen/Dense>

#include "copkit/constants.hpp"
#include "copkit/kernels.hpp"

namespace copkit {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EVec = Eigen::VectorXd;

Eigen::Map<const EMat> emap(const Matrix& m) {
    return Eigen::Map<const EMat>(m.data.data(), m.rows, m.cols);
}

void check_row(const double* row, int n, bool allow_substochastic, const char* what) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        if (!(row[j] >= 0.0)) throw Error(std::string(what) + ": negative probability");
        sum += row[j];
    }
    if (allow_substochastic) {
        if (sum > 1.0 + kProbTol) throw Error(std::string(what) + ": row sum exceeds 1");
    } else if (std::fabs(sum - 1.0) > kProbTol) {
        throw Error(std::string(what) + ": row sum " + std::to_string(sum) + " != 1");
    }
}

}  // namespace

// --- Mdp ---

Mdp::Mdp(int n_states, int n_actions, double discount, Vec transition, Matrix reward)
    : n_states_(n_states),
      n_actions_(n_actions),
      discount_(discount),
      transition_(std::move(transition)),
      reward_(std::move(reward)) {
    validate(false);
}

Mdp::Mdp(int n_states, int n_actions, double discount, Vec transition, Matrix reward,
         substochastic_tag)
    : n_states_(n_states),
      n_actions_(n_actions),
      discount_(discount),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      substochastic_(true) {
    validate(true);
}

void Mdp::validate(bool allow_substochastic) const {
    if (n_states_ <= 0 || n_actions_ <= 0) throw Error("Mdp: nonpositive dimensions");
    if (!(discount_ >= 0.0 && discount_ < 1.0)) throw Error("Mdp: discount outside [0,1)");
    if (transition_.size() != static_cast<size_t>(n_states_) * n_actions_ * n_states_)
        throw DimensionMismatch("Mdp: transition tensor size mismatch");
    if (reward_.rows != n_states_ || reward_.cols != n_actions_)
        throw DimensionMismatch("Mdp: reward matrix size mismatch");
    for (int s = 0; s < n_states_; ++s)
        for (int a = 0; a < n_actions_; ++a) {
            check_row(row(s, a), n_states_, allow_substochastic, "Mdp transition");
            if (!std::isfinite(reward_.at(s, a))) throw Error("Mdp: non-finite reward");
        }
}

nlohmann::json Mdp::to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (int s = 0; s < n_states_; ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        for (int a = 0; a < n_actions_; ++a) {
            per_action.push_back(Vec(row(s, a), row(s, a) + n_states_));
        }
        t.push_back(std::move(per_action));
    }
    nlohmann::json r = nlohmann::json::array();
    for (int s = 0; s < n_states_; ++s)
        r.push_back(Vec(reward_.row(s), reward_.row(s) + n_actions_));
    return {{"n_states", n_states_},
            {"n_actions", n_actions_},
            {"gamma", discount_},
            {"transition", std::move(t)},
            {"reward", std::move(r)}};
}

Mdp Mdp::from_json(const nlohmann::json& j) {
    const int n = j.at("n_states").get<int>();
    const int na = j.at("n_actions").get<int>();
    const double gamma = j.at("gamma").get<double>();
    Vec t;
    t.reserve(static_cast<size_t>(n) * na * n);
    for (const auto& per_state : j.at("transition"))
        for (const auto& per_action : per_state)
            for (const auto& p : per_action) t.push_back(p.get<double>());
    Matrix r(n, na);
    int s = 0;
    for (const auto& rrow : j.at("reward")) {
        int a = 0;
        for (const auto& v : rrow) r.at(s, a++) = v.get<double>();
        ++s;
    }
    return Mdp(n, na, gamma, std::move(t), std::move(r));
}

// --- Policy ---

Policy::Policy(Matrix probs) : probs_(std::move(probs)) {
    for (int s = 0; s < probs_.rows; ++s) check_row(probs_.row(s), probs_.cols, false, "Policy");
}

Policy Policy::uniform(int n_states, int n_actions) {
    Matrix m(n_states, n_actions);
    std::fill(m.data.begin(), m.data.end(), 1.0 / n_actions);
    return Policy(std::move(m));
}

// --- InducedChain ---

InducedChain::InducedChain(Matrix transition, Vec expected_reward, bool substochastic)
    : transition_(std::move(transition)),
      expected_reward_(std::move(expected_reward)),
      substochastic_(substochastic) {
    if (transition_.rows != transition_.cols)
        throw DimensionMismatch("InducedChain: transition not square");
    if (expected_reward_.size() != static_cast<size_t>(transition_.rows))
        throw DimensionMismatch("InducedChain: reward length mismatch");
    for (int s = 0; s < transition_.rows; ++s)
        check_row(transition_.row(s), transition_.cols, substochastic_, "InducedChain");
}

// --- StateDistribution ---

StateDistribution::StateDistribution(Vec probs) : probs_(std::move(probs)) {
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0)) throw Error("StateDistribution: negative entry");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > kDistTol)
        throw Error("StateDistribution: sum " + std::to_string(sum) + " != 1");
}

StateDistribution StateDistribution::uniform(int n) {
    return StateDistribution(Vec(n, 1.0 / n));
}

// --- RatioVector ---

RatioVector::RatioVector(Vec values) : values_(std::move(values)) {
    for (double v : values_)
        if (!std::isfinite(v)) throw Error("RatioVector: non-finite entry");
}

RatioVector RatioVector::ones(int n) {
    return RatioVector(Vec(n, 1.0));
}

bool RatioVector::is_normalized(const StateDistribution& d_mu, double tol) const {
    if (d_mu.size() != size()) throw DimensionMismatch("RatioVector: d_mu size mismatch");
    return std::fabs(kernels::dot(d_mu.data(), values_.data(), values_.size()) - 1.0) <= tol;
}

// --- EpisodicMdp ---

EpisodicMdp::EpisodicMdp(int n_states, int n_actions, double discount, Vec transition,
                         Matrix reward, int start_state)
    : base_(n_states, n_actions, discount, std::move(transition), std::move(reward),
            Mdp::substochastic_tag{}),
      start_state_(start_state) {
    if (start_state < 0 || start_state >= n_states) throw Error("EpisodicMdp: bad start state");
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a)
            if (base_.p(s, a, start_state) != 0.0)
                throw Error("EpisodicMdp: transition returns to start state");
    // Termination must be certain under every policy; the uniform policy
    // dominates none, so check per-action extremes via the uniform chain and
    // the all-one-action chains.
    for (int a = -1; a < n_actions; ++a) {
        Matrix p(n_states, n_states);
        for (int s = 0; s < n_states; ++s)
            for (int s2 = 0; s2 < n_states; ++s2) {
                double v = 0.0;
                if (a < 0) {
                    for (int b = 0; b < n_actions; ++b) v += base_.p(s, b, s2);
                    v /= n_actions;
                } else {
                    v = base_.p(s, a, s2);
                }
                p.at(s, s2) = v;
            }
        if (spectral_radius_estimate(p, kSpectralIters) >= 1.0 - kSpectralMargin)
            throw NonEpisodic("EpisodicMdp: spectral radius not below 1");
    }
}

// --- Operations ---

InducedChain induce_chain(const Mdp& mdp, const Policy& policy) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
        throw DimensionMismatch("induce_chain: policy shape mismatch");
    const int n = mdp.n_states();
    Matrix p(n, n);
    Vec r(n, 0.0);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < mdp.n_actions(); ++a) {
            const double w = policy.prob(s, a);
            if (w == 0.0) continue;
            kernels::axpy(w, mdp.row(s, a), p.row(s), n);
            r[s] += w * mdp.r(s, a);
        }
    }
    return InducedChain(std::move(p), std::move(r), mdp.substochastic());
}

InducedChain induce_chain(const EpisodicMdp& emdp, const Policy& policy) {
    return induce_chain(emdp.base(), policy);
}

bool check_ergodic(const InducedChain& chain) {
    const int n = chain.n_states();
    const Matrix& p = chain.transition();
    auto reachable = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::queue<int> q;
        q.push(0);
        seen[0] = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v = 0; v < n; ++v) {
                const double w = transpose ? p.at(v, u) : p.at(u, v);
                if (w > 0.0 && !seen[v]) {
                    seen[v] = 1;
                    q.push(v);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    if (!reachable(false) || !reachable(true)) return false;

    // Aperiodicity: gcd over edges (u,v) of level(u) + 1 - level(v) on a BFS
    // tree, valid once strong connectivity holds.
    std::vector<int> level(n, -1);
    std::queue<int> q;
    q.push(0);
    level[0] = 0;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v = 0; v < n; ++v)
            if (p.at(u, v) > 0.0 && level[v] < 0) {
                level[v] = level[u] + 1;
                q.push(v);
            }
    }
    long g = 0;
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (p.at(u, v) > 0.0) g = std::gcd(g, static_cast<long>(level[u] + 1 - level[v]));
    return g == 1;
}

StateDistribution stationary_distribution(const InducedChain& chain) {
    if (!check_ergodic(chain)) throw NonErgodic("stationary_distribution: chain not ergodic");
    const int n = chain.n_states();
    Vec d(n, 0.0);
    if (n <= kDirectSolveMaxStates) {
        // (P^T - I) d = 0 with the normalization row appended, least squares.
        EMat a(n + 1, n);
        a.topRows(n) = emap(chain.transition()).transpose() - EMat::Identity(n, n);
        a.row(n).setOnes();
        EVec b = EVec::Zero(n + 1);
        b(n) = 1.0;
        EVec x = a.colPivHouseholderQr().solve(b);
        for (int i = 0; i < n; ++i) d[i] = x(i);
    } else {
        Vec next(n, 0.0);
        std::fill(d.begin(), d.end(), 1.0 / n);
        for (int it = 0; it < 100000; ++it) {
            kernels::matvec_t(chain.transition(), d.data(), next.data());
            double delta = 0.0;
            for (int i = 0; i < n; ++i) delta = std::max(delta, std::fabs(next[i] - d[i]));
            d.swap(next);
            if (delta < kDistTol / 10) break;
        }
    }
    // Residual check: ||d - dP||_inf.
    Vec dp(n, 0.0);
    kernels::matvec_t(chain.transition(), d.data(), dp.data());
    for (int i = 0; i < n; ++i)
        if (std::fabs(dp[i] - d[i]) > kDistTol)
            throw SolverFailure("stationary_distribution: residual above tolerance");
    for (double& v : d) v = std::max(v, 0.0);
    const double sum = kernels::sum(d.data(), d.size());
    kernels::scale(1.0 / sum, d.data(), d.size());
    return StateDistribution(std::move(d));
}

InducedChain discounted_reset_chain(const InducedChain& chain, const StateDistribution& d_mu,
                                    double gamma_hat) {
    if (!(gamma_hat >= 0.0 && gamma_hat <= 1.0))
        throw InvalidDiscount("discounted_reset_chain: gamma_hat outside [0,1]");
    if (d_mu.size() != chain.n_states())
        throw DimensionMismatch("discounted_reset_chain: d_mu size mismatch");
    const int n = chain.n_states();
    Matrix p(n, n);
    for (int s = 0; s < n; ++s) {
        for (int s2 = 0; s2 < n; ++s2)
            p.at(s, s2) = gamma_hat * chain.transition().at(s, s2) + (1.0 - gamma_hat) * d_mu(s2);
    }
    return InducedChain(std::move(p), chain.expected_reward());
}

StateDistribution discounted_stationary(const InducedChain& chain, const StateDistribution& d_mu,
                                        double gamma_hat) {
    if (!(gamma_hat >= 0.0 && gamma_hat < 1.0))
        throw InvalidDiscount("discounted_stationary: gamma_hat outside [0,1)");
    if (d_mu.size() != chain.n_states())
        throw DimensionMismatch("discounted_stationary: d_mu size mismatch");
    const int n = chain.n_states();
    EMat a = EMat::Identity(n, n) - gamma_hat * emap(chain.transition()).transpose();
    EVec b(n);
    for (int i = 0; i < n; ++i) b(i) = d_mu(i);
    EVec x = a.partialPivLu().solve(b);
    Vec d(n);
    for (int i = 0; i < n; ++i) d[i] = (1.0 - gamma_hat) * x(i);
    const double sum = kernels::sum(d.data(), d.size());
    if (std::fabs(sum - 1.0) > kDistTol)
        throw SolverFailure("discounted_stationary: mass not preserved");
    return StateDistribution(std::move(d));
}

RatioVector ratio_of(const StateDistribution& numerator, const StateDistribution& denominator) {
    if (numerator.size() != denominator.size())
        throw DimensionMismatch("ratio_of: size mismatch");
    for (int s = 0; s < denominator.size(); ++s)
        if (denominator(s) <= 0.0) throw ZeroDenominator(s);
    Vec c(numerator.size());
    kernels::div(numerator.data(), denominator.data(), c.data(), c.size());
    return RatioVector(std::move(c));
}

Vec episodic_visitation(const EpisodicMdp& emdp, const Policy& policy) {
    const InducedChain chain = induce_chain(emdp, policy);
    const int n = chain.n_states();
    if (spectral_radius_estimate(chain.transition(), kSpectralIters) >= 1.0 - kSpectralMargin)
        throw NonEpisodic("episodic_visitation: spectral radius not below 1");
    EVec d0 = EVec::Zero(n);
    d0(emdp.start_state()) = 1.0;
    EMat a = EMat::Identity(n, n) - emap(chain.transition()).transpose();
    EVec x = a.partialPivLu().solve(d0);
    Vec d(n);
    for (int i = 0; i < n; ++i) d[i] = x(i);
    // Residual ||d - P^T d - d0||_inf.
    Vec pd(n, 0.0);
    kernels::matvec_t(chain.transition(), d.data(), pd.data());
    for (int i = 0; i < n; ++i)
        if (std::fabs(d[i] - pd[i] - d0(i)) > kDistTol)
            throw SolverFailure("episodic_visitation: residual above tolerance");
    return d;
}

double spectral_radius_estimate(const Matrix& m, int iters) {
    const int n = m.rows;
    Vec v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    Vec next(n, 0.0);
    double norm = 0.0;
    for (int it = 0; it < iters; ++it) {
        // power iteration on |M|
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += std::fabs(m.at(i, j)) * v[j];
            next[i] = acc;
        }
        norm = std::sqrt(kernels::dot(next.data(), next.data(), next.size()));
        if (norm == 0.0) return 0.0;
        for (int i = 0; i < n; ++i) v[i] = next[i] / norm;
    }
    return norm;
}

std::string mdp_to_string(const Mdp& mdp) {
    std::ostringstream os;
    os << mdp.n_states() << " states, " << mdp.n_actions() << " actions, gamma "
       << mdp.discount();
    return os.str();
}

}  // namespace copkit
