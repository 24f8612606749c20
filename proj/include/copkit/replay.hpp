#pragma once

#include <optional>
#include <random>

#include <json.hpp>

#include "copkit/learning.hpp"

// The practical agent loop at desk scale: windowed replay with
// ratio-derived priorities, a ratio head trained against target
// parameters, and a Q-learner sampling from the reprioritized buffer.
namespace copkit {

// Complete binary tree of partial sums over leaf priorities; sampling a
// leaf is a root-to-leaf descent on the prefix sums.
class SumTree {
public:
    explicit SumTree(size_t capacity);

    size_t capacity() const { return capacity_; }
    double total() const { return nodes_[1]; }
    double get(size_t leaf) const;
    void set(size_t leaf, double priority);
    // Descends for a mass coordinate u in [0, total).
    size_t sample(double u) const;

private:
    size_t capacity_;
    size_t leaf_base_;
    Vec nodes_;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity);

    size_t size() const { return size_; }
    size_t capacity() const { return capacity_; }
    const TransitionSample& at(size_t slot) const;
    double priority(size_t slot) const { return tree_.get(slot); }
    double total_priority() const { return tree_.total(); }

    // Stored with the running-max priority (1 when empty); evicts the
    // oldest entry at capacity. Returns the slot.
    size_t push(const TransitionSample& sample);

    // priority <- max(c_value, 0)
    void set_priority(size_t slot, double c_value);

    // Stratified proportional sampling: one uniform draw per equal segment.
    std::vector<size_t> sample_prioritized(size_t batch_size, std::mt19937_64& rng) const;
    // I.i.d. uniform over occupied slots.
    std::vector<size_t> sample_uniform(size_t batch_size, std::mt19937_64& rng) const;

private:
    size_t capacity_;
    size_t next_ = 0;
    size_t size_ = 0;
    double max_priority_ = 1.0;
    std::vector<TransitionSample> entries_;
    SumTree tree_;
};

enum class PriorityMode { Ratio, TdError, Uniform };

struct TrainerConfig {
    double eta = 0.02;                 // ratio-loss weight
    double gamma_hat = 0.99;
    double epsilon = 0.1;              // target policy exploration
    int batch_size = 32;
    double normalization_weight = 0.0;  // 0 disables the soft penalty
    double value_step = 0.1;
    double ratio_step = 0.05;
    int sync_period = 1000;
    PriorityMode priority_mode = PriorityMode::Ratio;
    bool learn_ratio = true;
    bool ratio_from_prioritized = false;  // reproduces the instability regime

    void validate() const;
};

// Q(s,a) = phi(s)^T theta_a; c(s) = phi(s)^T w. target_* are frozen copies
// refreshed every sync_period steps.
struct AgentParams {
    FeatureMap features;
    Matrix value_weights;   // k x A
    Vec ratio_weights;      // k
    Matrix target_value_weights;
    Vec target_ratio_weights;
    long step_count = 0;

    AgentParams(FeatureMap f, int n_actions);

    double q(int s, int a) const;
    double target_q(int s, int a) const;
    double ratio(int s) const;
    double target_ratio(int s) const;
    int n_actions() const { return value_weights.cols; }
    void sync_targets();

    nlohmann::json checkpoint(const ReplayBuffer& buffer, const std::string& rng_state) const;
};

// (1-eps) + eps/|A| on the argmax (lowest index on ties), eps/|A| elsewhere.
Policy greedy_policy(const Matrix& q_values, double epsilon);

// Greedy target policy of the frozen parameters, per state.
Policy target_policy(const AgentParams& params, int n_states, double epsilon);

struct RatioLossResult {
    double loss = 0.0;
    Vec grad;  // d loss / d ratio_weights, bootstrap factor held fixed
};

// eta (gh * clip(c_tgt(s), 0) * pi_tgt(a|s)/mu(a|s) + (1 - gh) - c(s'))^2,
// with the bootstrap target replaced by 1 for initial-state samples.
RatioLossResult ratio_loss(const AgentParams& params, const TransitionSample& sample,
                           const TrainerConfig& config, double target_action_prob);

struct TrainMetrics {
    double value_loss = 0.0;
    double ratio_loss = 0.0;
    double mean_priority = 0.0;
};

// One agent step: a prioritized value batch (Q-learning toward the frozen
// target), a uniform ratio batch, optional normalization gradient, lazy
// priority refresh on touched slots, and a periodic target sync.
TrainMetrics train_step(AgentParams& params, ReplayBuffer& buffer, const TrainerConfig& config,
                        std::mt19937_64& rng, double gamma);

}  // namespace copkit
