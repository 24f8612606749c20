#include "copkit/replay.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "copkit/constants.hpp"
#include "copkit/kernels.hpp"

namespace copkit {

// --- SumTree ---

SumTree::SumTree(size_t capacity) : capacity_(capacity) {
    leaf_base_ = 1;
    while (leaf_base_ < capacity_) leaf_base_ <<= 1;
    nodes_.assign(2 * leaf_base_, 0.0);
}

double SumTree::get(size_t leaf) const {
    return nodes_[leaf_base_ + leaf];
}

void SumTree::set(size_t leaf, double priority) {
    size_t i = leaf_base_ + leaf;
    nodes_[i] = priority;
    for (i >>= 1; i >= 1; i >>= 1) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

size_t SumTree::sample(double u) const {
    size_t i = 1;
    while (i < leaf_base_) {
        const double left = nodes_[2 * i];
        if (u < left) {
            i = 2 * i;
        } else {
            u -= left;
            i = 2 * i + 1;
        }
    }
    return std::min(i - leaf_base_, capacity_ - 1);
}

// --- ReplayBuffer ---

ReplayBuffer::ReplayBuffer(size_t capacity)
    : capacity_(capacity), entries_(capacity), tree_(capacity) {
    if (capacity == 0) throw Error("ReplayBuffer: zero capacity");
}

const TransitionSample& ReplayBuffer::at(size_t slot) const {
    if (slot >= size_) throw InvalidSlot("ReplayBuffer: slot not occupied");
    return entries_[slot];
}

size_t ReplayBuffer::push(const TransitionSample& sample) {
    const size_t slot = next_;
    entries_[slot] = sample;
    tree_.set(slot, max_priority_);
    next_ = (next_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    return slot;
}

void ReplayBuffer::set_priority(size_t slot, double c_value) {
    if (slot >= size_) throw InvalidSlot("ReplayBuffer: slot not occupied");
    const double p = std::max(c_value, 0.0);
    tree_.set(slot, p);
    max_priority_ = std::max(max_priority_, p);
}

std::vector<size_t> ReplayBuffer::sample_prioritized(size_t batch_size,
                                                     std::mt19937_64& rng) const {
    if (size_ == 0) throw EmptyBuffer("sample_prioritized: empty buffer");
    const double total = tree_.total();
    if (total <= 0.0) throw ZeroMass("sample_prioritized: zero total priority");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<size_t> slots(batch_size);
    const double seg = total / static_cast<double>(batch_size);
    for (size_t i = 0; i < batch_size; ++i) {
        const double u = (static_cast<double>(i) + unif(rng)) * seg;
        slots[i] = tree_.sample(std::min(u, std::nextafter(total, 0.0)));
    }
    return slots;
}

std::vector<size_t> ReplayBuffer::sample_uniform(size_t batch_size,
                                                 std::mt19937_64& rng) const {
    if (size_ == 0) throw EmptyBuffer("sample_uniform: empty buffer");
    std::uniform_int_distribution<size_t> pick(0, size_ - 1);
    std::vector<size_t> slots(batch_size);
    for (size_t i = 0; i < batch_size; ++i) slots[i] = pick(rng);
    return slots;
}

// --- AgentParams ---

void TrainerConfig::validate() const {
    if (eta <= 0.0) throw Error("TrainerConfig: eta must be positive");
    if (!(gamma_hat >= 0.0 && gamma_hat <= 1.0))
        throw InvalidDiscount("TrainerConfig: gamma_hat outside [0,1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("TrainerConfig: bad epsilon");
    if (batch_size < 1) throw Error("TrainerConfig: bad batch size");
    if (normalization_weight < 0.0) throw Error("TrainerConfig: negative normalization weight");
    if (normalization_weight > 0.0 && batch_size < 2)
        throw Error("TrainerConfig: normalization needs batch_size >= 2");
    if (sync_period < 1) throw Error("TrainerConfig: bad sync period");
}

AgentParams::AgentParams(FeatureMap f, int n_actions)
    : features(std::move(f)),
      value_weights(features.k(), n_actions),
      ratio_weights(features.k(), 1.0 / features.k()),
      target_value_weights(value_weights),
      target_ratio_weights(ratio_weights) {}

double AgentParams::q(int s, int a) const {
    double acc = 0.0;
    for (int i = 0; i < features.k(); ++i)
        acc += features.features(s)[i] * value_weights.at(i, a);
    return acc;
}

double AgentParams::target_q(int s, int a) const {
    double acc = 0.0;
    for (int i = 0; i < features.k(); ++i)
        acc += features.features(s)[i] * target_value_weights.at(i, a);
    return acc;
}

double AgentParams::ratio(int s) const {
    return kernels::dot(features.features(s), ratio_weights.data(), ratio_weights.size());
}

double AgentParams::target_ratio(int s) const {
    return kernels::dot(features.features(s), target_ratio_weights.data(),
                        target_ratio_weights.size());
}

void AgentParams::sync_targets() {
    target_value_weights = value_weights;
    target_ratio_weights = ratio_weights;
}

nlohmann::json AgentParams::checkpoint(const ReplayBuffer& buffer,
                                       const std::string& rng_state) const {
    return {{"value_weights", value_weights.data},
            {"ratio_weights", ratio_weights},
            {"target_value_weights", target_value_weights.data},
            {"target_ratio_weights", target_ratio_weights},
            {"step_count", step_count},
            {"rng_state", rng_state},
            {"buffer_summary",
             {{"size", buffer.size()},
              {"capacity", buffer.capacity()},
              {"total_priority", buffer.total_priority()}}}};
}

// --- policies ---

Policy greedy_policy(const Matrix& q_values, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("greedy_policy: bad epsilon");
    const int n = q_values.rows;
    const int na = q_values.cols;
    Matrix probs(n, na);
    for (int s = 0; s < n; ++s) {
        int best = 0;
        for (int a = 1; a < na; ++a)
            if (q_values.at(s, a) > q_values.at(s, best)) best = a;
        for (int a = 0; a < na; ++a) probs.at(s, a) = epsilon / na;
        probs.at(s, best) += 1.0 - epsilon;
    }
    return Policy(std::move(probs));
}

Policy target_policy(const AgentParams& params, int n_states, double epsilon) {
    Matrix q(n_states, params.n_actions());
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < params.n_actions(); ++a) q.at(s, a) = params.target_q(s, a);
    return greedy_policy(q, epsilon);
}

// --- ratio loss ---

RatioLossResult ratio_loss(const AgentParams& params, const TransitionSample& sample,
                           const TrainerConfig& config, double target_action_prob) {
    if (sample.behavior_prob <= 0.0) throw Error("ratio_loss: behavior probability zero");
    double target;
    if (sample.is_initial) {
        target = 1.0;
    } else {
        const double boot = std::max(params.target_ratio(sample.state), 0.0);
        target = config.gamma_hat * boot * target_action_prob / sample.behavior_prob +
                 (1.0 - config.gamma_hat);
    }
    const double err = target - params.ratio(sample.next_state);
    RatioLossResult r;
    r.loss = config.eta * err * err;
    r.grad.assign(params.ratio_weights.size(), 0.0);
    // gradient flows only through c_theta(s')
    kernels::axpy(-2.0 * config.eta * err, params.features.features(sample.next_state),
                  r.grad.data(), r.grad.size());
    return r;
}

// --- train step ---

TrainMetrics train_step(AgentParams& params, ReplayBuffer& buffer, const TrainerConfig& config,
                        std::mt19937_64& rng, double gamma) {
    config.validate();
    if (buffer.size() < static_cast<size_t>(config.batch_size))
        throw BufferNotWarm("train_step: buffer smaller than batch size");
    TrainMetrics metrics;
    const Policy pi_target = [&] {
        // Number of states from the feature map (tabular/linear desk scale).
        return target_policy(params, params.features.n_states(), config.epsilon);
    }();

    // Value batch.
    const std::vector<size_t> value_slots =
        config.priority_mode == PriorityMode::Uniform
            ? buffer.sample_uniform(config.batch_size, rng)
            : buffer.sample_prioritized(config.batch_size, rng);
    for (size_t slot : value_slots) {
        const TransitionSample& t = buffer.at(slot);
        double best_next = params.target_q(t.next_state, 0);
        for (int a = 1; a < params.n_actions(); ++a)
            best_next = std::max(best_next, params.target_q(t.next_state, a));
        const double delta = t.reward + gamma * best_next - params.q(t.state, t.action);
        metrics.value_loss += delta * delta;
        const double scale = config.value_step * delta / config.batch_size;
        for (int i = 0; i < params.features.k(); ++i)
            params.value_weights.at(i, t.action) += scale * params.features.features(t.state)[i];
        // Lazy priority refresh on the slots this step touched.
        switch (config.priority_mode) {
            case PriorityMode::Ratio:
                buffer.set_priority(slot, params.ratio(t.state));
                break;
            case PriorityMode::TdError:
                buffer.set_priority(slot, std::fabs(delta));
                break;
            case PriorityMode::Uniform:
                break;
        }
    }
    metrics.value_loss /= config.batch_size;

    // Ratio batch (uniform by default; prioritized only behind the flag).
    if (config.learn_ratio) {
        const std::vector<size_t> ratio_slots =
            config.ratio_from_prioritized
                ? buffer.sample_prioritized(config.batch_size, rng)
                : buffer.sample_uniform(config.batch_size, rng);
        Vec grad(params.ratio_weights.size(), 0.0);
        for (size_t slot : ratio_slots) {
            const TransitionSample& t = buffer.at(slot);
            RatioLossResult r =
                ratio_loss(params, t, config, pi_target.prob(t.state, t.action));
            metrics.ratio_loss += r.loss;
            kernels::axpy(1.0 / config.batch_size, r.grad.data(), grad.data(), grad.size());
        }
        metrics.ratio_loss /= config.batch_size;
        if (config.normalization_weight > 0.0) {
            LinearRatioModel view(params.features);
            view.weights = params.ratio_weights;
            LinearRatio diff(view);
            std::vector<int> states;
            states.reserve(ratio_slots.size());
            for (size_t slot : ratio_slots) states.push_back(buffer.at(slot).next_state);
            Vec ngrad = normalization_grad_estimate(diff, states);
            kernels::axpy(config.normalization_weight, ngrad.data(), grad.data(), grad.size());
        }
        kernels::axpy(-config.ratio_step, grad.data(), params.ratio_weights.data(),
                      params.ratio_weights.size());
    }

    ++params.step_count;
    if (params.step_count % config.sync_period == 0) params.sync_targets();

    metrics.mean_priority = buffer.total_priority() / static_cast<double>(buffer.size());
    return metrics;
}

}  // namespace copkit
