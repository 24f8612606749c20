#pragma once

#include <random>
#include <span>

#include "copkit/operators.hpp"

// Sample-based learning rules: semi-gradient TD, importance-reweighted TD,
// tabular and linear (discounted) COP-TD, the d_mu-weighted simplex
// projection, and the soft-normalization gradient estimator.
namespace copkit {

struct TransitionSample {
    int state = 0;
    int action = 0;
    int next_state = 0;
    double reward = 0.0;
    double behavior_prob = 1.0;  // mu(a|s), must be > 0
    double target_prob = 1.0;    // pi(a|s)
    bool is_initial = false;

    double policy_ratio() const { return target_prob / behavior_prob; }
};

struct StepSchedule {
    enum class Kind { Constant, RobbinsMonro };
    Kind kind = Kind::Constant;
    double alpha0 = 0.5;
    double t0 = 1e4;  // robbins_monro: alpha_t = alpha0 / (1 + t/t0)

    double at(long t) const {
        return kind == Kind::Constant ? alpha0 : alpha0 / (1.0 + static_cast<double>(t) / t0);
    }
    static StepSchedule constant(double a) { return {Kind::Constant, a, 1.0}; }
    static StepSchedule robbins_monro(double a0 = 0.5, double t0 = 1e4) {
        return {Kind::RobbinsMonro, a0, t0};
    }
};

struct LinearValueModel {
    FeatureMap features;
    Vec theta;  // length k

    explicit LinearValueModel(FeatureMap f) : features(std::move(f)), theta(features.k(), 0.0) {}
    double value(int s) const;
};

struct LinearRatioModel {
    FeatureMap features;
    Vec weights;  // length k

    explicit LinearRatioModel(FeatureMap f) : features(std::move(f)), weights(features.k(), 0.0) {}
    double value(int s) const;
};

// Draws (s, a, s') with s ~ d_mu exactly (inverse CDF over the solved
// stationary distribution), a ~ mu(.|s), s' ~ P(.|s,a).
class TransitionSampler {
public:
    TransitionSampler(const Mdp& mdp, Policy behavior, Policy target);

    TransitionSample sample(std::mt19937_64& rng) const;
    const StateDistribution& d_mu() const { return d_mu_; }
    const Policy& behavior() const { return behavior_; }
    const Policy& target() const { return target_; }

private:
    int pick(const double* cdf, int n, double u) const;

    Policy behavior_;
    Policy target_;
    StateDistribution d_mu_;
    Matrix reward_;   // n x A, copied from the MDP
    Vec state_cdf_;   // n
    Matrix action_cdf_;  // n x A
    Vec next_cdf_;    // n*A*n
    int n_states_;
    int n_actions_;
};

// theta <- theta + alpha [r + gamma phi(s')^T theta - phi(s)^T theta] phi(s)
void td_step(LinearValueModel& model, const TransitionSample& sample, double gamma, double alpha);

// The d_pi/d_mu- and pi/mu-weighted variant of td_step.
void reweighted_td_step(LinearValueModel& model, const TransitionSample& sample,
                        double ratio_value, double gamma, double alpha);

// c(s') <- c(s') + alpha [(pi/mu) c(s) - c(s')]
void cop_td_step(Vec& c, const TransitionSample& sample, double alpha);

// c(s') <- c(s') + alpha [gh (pi/mu) c(s) + (1 - gh) - c(s')]
void discounted_cop_td_step(Vec& c, const TransitionSample& sample, double alpha,
                            double gamma_hat);

// w <- w + alpha [gh (pi/mu) phi(s)^T w + (1 - gh) - phi(s')^T w] phi(s')
void linear_cop_td_step(LinearRatioModel& model, const TransitionSample& sample, double alpha,
                        double gamma_hat);

// Exact Euclidean projection of w onto
//   W = { u : sum_s d_mu(s) phi(s)^T u = 1, phi(s)^T u >= 0 }
// by an active-set quadratic solve.
Vec project_weighted_simplex(const FeatureMap& features, const Vec& w,
                             const StateDistribution& d_mu);

// (1/2)(sum_s d_mu(s) c(s) - 1)^2
double normalization_loss(const Vec& c_values, const StateDistribution& d_mu);

// Differentiable per-state ratio model for the normalization estimator.
class DifferentiableRatio {
public:
    virtual ~DifferentiableRatio() = default;
    virtual int param_count() const = 0;
    virtual double value(int s) const = 0;
    // g += scale * grad c(s)
    virtual void accumulate_grad(int s, double scale, Vec& g) const = 0;
};

class TabularRatio : public DifferentiableRatio {
public:
    explicit TabularRatio(Vec c) : c_(std::move(c)) {}
    int param_count() const override { return static_cast<int>(c_.size()); }
    double value(int s) const override { return c_[s]; }
    void accumulate_grad(int s, double scale, Vec& g) const override { g[s] += scale; }
    Vec& values() { return c_; }

private:
    Vec c_;
};

class LinearRatio : public DifferentiableRatio {
public:
    explicit LinearRatio(const LinearRatioModel& m) : model_(m) {}
    int param_count() const override { return static_cast<int>(model_.weights.size()); }
    double value(int s) const override { return model_.value(s); }
    void accumulate_grad(int s, double scale, Vec& g) const override;

private:
    const LinearRatioModel& model_;
};

// Unbiased estimator of the normalization-loss gradient from a batch of
// m >= 2 states drawn from d_mu:
//   (1/m) sum_i ((1/(m-1)) sum_{j != i} c(s_j) - 1) grad c(s_i)
Vec normalization_grad_estimate(const DifferentiableRatio& model, std::span<const int> batch);

}  // namespace copkit
