#include "copkit/learning.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "copkit/constants.hpp"
#include "copkit/kernels.hpp"

namespace copkit {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EVec = Eigen::VectorXd;
}  // namespace

double LinearValueModel::value(int s) const {
    return kernels::dot(features.features(s), theta.data(), theta.size());
}

double LinearRatioModel::value(int s) const {
    return kernels::dot(features.features(s), weights.data(), weights.size());
}

// --- TransitionSampler ---

TransitionSampler::TransitionSampler(const Mdp& mdp, Policy behavior, Policy target)
    : behavior_(std::move(behavior)),
      target_(std::move(target)),
      d_mu_(stationary_distribution(induce_chain(mdp, behavior_))),
      reward_(mdp.reward()),
      n_states_(mdp.n_states()),
      n_actions_(mdp.n_actions()) {
    if (target_.n_states() != n_states_ || target_.n_actions() != n_actions_)
        throw DimensionMismatch("TransitionSampler: target policy shape mismatch");
    state_cdf_.resize(n_states_);
    double acc = 0.0;
    for (int s = 0; s < n_states_; ++s) {
        acc += d_mu_(s);
        state_cdf_[s] = acc;
    }
    action_cdf_ = Matrix(n_states_, n_actions_);
    next_cdf_.resize(static_cast<size_t>(n_states_) * n_actions_ * n_states_);
    for (int s = 0; s < n_states_; ++s) {
        acc = 0.0;
        for (int a = 0; a < n_actions_; ++a) {
            acc += behavior_.prob(s, a);
            action_cdf_.at(s, a) = acc;
            double nacc = 0.0;
            for (int s2 = 0; s2 < n_states_; ++s2) {
                nacc += mdp.p(s, a, s2);
                next_cdf_[(static_cast<size_t>(s) * n_actions_ + a) * n_states_ + s2] = nacc;
            }
        }
    }
}

int TransitionSampler::pick(const double* cdf, int n, double u) const {
    const double* it = std::lower_bound(cdf, cdf + n, u);
    int i = static_cast<int>(it - cdf);
    return std::min(i, n - 1);
}

TransitionSample TransitionSampler::sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TransitionSample t;
    t.state = pick(state_cdf_.data(), n_states_, unif(rng));
    t.action = pick(action_cdf_.row(t.state), n_actions_, unif(rng));
    t.next_state = pick(
        next_cdf_.data() + (static_cast<size_t>(t.state) * n_actions_ + t.action) * n_states_,
        n_states_, unif(rng));
    t.reward = reward_.at(t.state, t.action);
    t.behavior_prob = behavior_.prob(t.state, t.action);
    t.target_prob = target_.prob(t.state, t.action);
    return t;
}

// --- update rules ---

void td_step(LinearValueModel& model, const TransitionSample& sample, double gamma,
             double alpha) {
    const double delta =
        sample.reward + gamma * model.value(sample.next_state) - model.value(sample.state);
    kernels::axpy(alpha * delta, model.features.features(sample.state), model.theta.data(),
                  model.theta.size());
}

void reweighted_td_step(LinearValueModel& model, const TransitionSample& sample,
                        double ratio_value, double gamma, double alpha) {
    const double delta =
        sample.reward + gamma * model.value(sample.next_state) - model.value(sample.state);
    kernels::axpy(alpha * ratio_value * sample.policy_ratio() * delta,
                  model.features.features(sample.state), model.theta.data(),
                  model.theta.size());
}

void cop_td_step(Vec& c, const TransitionSample& sample, double alpha) {
    c[sample.next_state] +=
        alpha * (sample.policy_ratio() * c[sample.state] - c[sample.next_state]);
}

void discounted_cop_td_step(Vec& c, const TransitionSample& sample, double alpha,
                            double gamma_hat) {
    c[sample.next_state] += alpha * (gamma_hat * sample.policy_ratio() * c[sample.state] +
                                     (1.0 - gamma_hat) - c[sample.next_state]);
}

void linear_cop_td_step(LinearRatioModel& model, const TransitionSample& sample, double alpha,
                        double gamma_hat) {
    const double err = gamma_hat * sample.policy_ratio() * model.value(sample.state) +
                       (1.0 - gamma_hat) - model.value(sample.next_state);
    kernels::axpy(alpha * err, model.features.features(sample.next_state),
                  model.weights.data(), model.weights.size());
}

// --- weighted simplex projection ---

namespace {

// Equality-constrained projection: min ||u - w|| s.t. E u = b. Returns the
// minimizer and the multipliers.
bool eq_project(const EMat& e, const EVec& b, const EVec& w, EVec& u, EVec& lambda) {
    EMat gram = e * e.transpose();
    Eigen::FullPivLU<EMat> lu(gram);
    if (!lu.isInvertible()) return false;
    lambda = lu.solve(b - e * w);
    u = w + e.transpose() * lambda;
    return true;
}

}  // namespace

Vec project_weighted_simplex(const FeatureMap& features, const Vec& w,
                             const StateDistribution& d_mu) {
    const int n = features.n_states();
    const int k = features.k();
    if (static_cast<int>(w.size()) != k || d_mu.size() != n)
        throw DimensionMismatch("project_weighted_simplex: size mismatch");

    EMat phi = Eigen::Map<const EMat>(features.phi().data.data(), n, k);
    EVec a = EVec::Zero(k);  // sum_s d_mu(s) phi(s)
    for (int s = 0; s < n; ++s) a += d_mu(s) * phi.row(s).transpose();
    EVec w0 = Eigen::Map<const EVec>(w.data(), k);

    const double feas_tol = 1e-10;
    std::vector<int> active;  // states whose inequality is held at 0
    EVec u;
    for (int iter = 0; iter < 20 * n + 20; ++iter) {
        // Solve with the equality constraint plus active inequalities.
        EMat e(1 + active.size(), k);
        EVec b = EVec::Zero(1 + active.size());
        e.row(0) = a.transpose();
        b(0) = 1.0;
        for (size_t i = 0; i < active.size(); ++i) e.row(1 + i) = phi.row(active[i]);
        EVec lambda;
        if (!eq_project(e, b, w0, u, lambda)) {
            // Dependent active rows; drop the most recent one.
            if (active.empty()) throw Infeasible("project_weighted_simplex: degenerate system");
            active.pop_back();
            continue;
        }
        // Drop an active constraint with a negative multiplier.
        int drop = -1;
        double most_negative = -1e-12;
        for (size_t i = 0; i < active.size(); ++i)
            if (lambda(1 + i) < most_negative) {
                most_negative = lambda(1 + i);
                drop = static_cast<int>(i);
            }
        if (drop >= 0) {
            active.erase(active.begin() + drop);
            continue;
        }
        // Add the most violated inactive inequality.
        int add = -1;
        double worst = -feas_tol;
        for (int s = 0; s < n; ++s) {
            const double v = phi.row(s).dot(u);
            if (v < worst && std::find(active.begin(), active.end(), s) == active.end()) {
                worst = v;
                add = s;
            }
        }
        if (add < 0) {
            Vec out(k);
            for (int i = 0; i < k; ++i) out[i] = u(i);
            return out;
        }
        active.push_back(add);
    }
    throw Infeasible("project_weighted_simplex: active-set iteration did not terminate");
}

double normalization_loss(const Vec& c_values, const StateDistribution& d_mu) {
    const double m = kernels::dot(d_mu.data(), c_values.data(), c_values.size());
    return 0.5 * (m - 1.0) * (m - 1.0);
}

void LinearRatio::accumulate_grad(int s, double scale, Vec& g) const {
    kernels::axpy(scale, model_.features.features(s), g.data(), g.size());
}

Vec normalization_grad_estimate(const DifferentiableRatio& model, std::span<const int> batch) {
    const int m = static_cast<int>(batch.size());
    if (m < 2)
        throw InsufficientSamples("normalization_grad_estimate: need m >= 2 samples");
    double total = 0.0;
    for (int s : batch) total += model.value(s);
    Vec g(model.param_count(), 0.0);
    for (int i = 0; i < m; ++i) {
        const double others = (total - model.value(batch[i])) / (m - 1) - 1.0;
        model.accumulate_grad(batch[i], others / m, g);
    }
    return g;
}

}  // namespace copkit
