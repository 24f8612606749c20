#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "copkit/replay.hpp"

using namespace copkit;

namespace {

TransitionSample sample_with_state(int s, int s2 = 0) {
    TransitionSample t;
    t.state = s;
    t.next_state = s2;
    t.behavior_prob = 0.5;
    t.target_prob = 0.5;
    return t;
}

}  // namespace

TEST_CASE("sum tree bookkeeping") {
    SUBCASE("set, get, total") {
        SumTree tree(8);
        const Vec p = {3.0, 1.0, 0.0, 2.0, 0.5, 1.5, 0.0, 4.0};
        for (size_t i = 0; i < p.size(); ++i) tree.set(i, p[i]);
        for (size_t i = 0; i < p.size(); ++i) CHECK(tree.get(i) == p[i]);
        CHECK(tree.total() == doctest::Approx(12.0));
        tree.set(3, 0.0);
        CHECK(tree.total() == doctest::Approx(10.0));
    }
    SUBCASE("descent lands in the leaf owning each mass coordinate") {
        SumTree tree(8);
        const Vec p = {3.0, 1.0, 0.0, 2.0, 0.5, 1.5, 0.0, 4.0};
        for (size_t i = 0; i < p.size(); ++i) tree.set(i, p[i]);
        double lo = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            if (p[i] > 0.0) {
                CHECK(tree.sample(lo) == i);
                CHECK(tree.sample(lo + p[i] / 2.0) == i);
                CHECK(tree.sample(std::nextafter(lo + p[i], 0.0)) == i);
            }
            lo += p[i];
        }
    }
    SUBCASE("non power of two capacity") {
        SumTree tree(5);
        for (size_t i = 0; i < 5; ++i) tree.set(i, static_cast<double>(i + 1));
        CHECK(tree.total() == doctest::Approx(15.0));
        CHECK(tree.sample(0.5) == 0);
        CHECK(tree.sample(14.9) == 4);
    }
    SUBCASE("proportional sampling over many draws") {
        SumTree tree(8);
        const Vec p = {3.0, 1.0, 0.0, 2.0, 0.5, 1.5, 0.0, 4.0};
        for (size_t i = 0; i < p.size(); ++i) tree.set(i, p[i]);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> unif(0.0, tree.total());
        const long draws = 100000;
        std::vector<long> counts(8, 0);
        for (long d = 0; d < draws; ++d) ++counts[tree.sample(unif(rng))];
        for (size_t i = 0; i < p.size(); ++i) {
            const double prob = p[i] / 12.0;
            const double sigma = std::sqrt(draws * prob * (1.0 - prob));
            CHECK(std::fabs(counts[i] - draws * prob) <= 3.0 * std::max(sigma, 1.0));
        }
    }
    SUBCASE("random operation interleaving keeps totals consistent") {
        std::mt19937_64 rng(2);
        for (size_t cap : {3u, 7u, 16u, 100u}) {
            SumTree tree(cap);
            Vec shadow(cap, 0.0);
            std::uniform_int_distribution<size_t> leaf(0, cap - 1);
            std::uniform_real_distribution<double> pr(0.0, 5.0);
            for (int op = 0; op < 10000; ++op) {
                const size_t i = leaf(rng);
                const double p = pr(rng);
                tree.set(i, p);
                shadow[i] = p;
                double total = 0.0;
                for (double v : shadow) total += v;
                CHECK(tree.total() == doctest::Approx(total).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("replay buffer") {
    SUBCASE("first push lands in slot 0 with priority 1") {
        ReplayBuffer buf(4);
        const size_t slot = buf.push(sample_with_state(7));
        CHECK(slot == 0);
        CHECK(buf.size() == 1);
        CHECK(buf.priority(0) == 1.0);
        CHECK(buf.at(0).state == 7);
    }
    SUBCASE("capacity-2 buffer evicts the oldest entry") {
        ReplayBuffer buf(2);
        buf.push(sample_with_state(0));
        buf.push(sample_with_state(1));
        const size_t slot = buf.push(sample_with_state(2));
        CHECK(slot == 0);
        CHECK(buf.size() == 2);
        CHECK(buf.at(0).state == 2);
        CHECK(buf.at(1).state == 1);
    }
    SUBCASE("set_priority clips negatives and tracks the running max") {
        ReplayBuffer buf(4);
        buf.push(sample_with_state(0));
        buf.push(sample_with_state(1));
        buf.set_priority(0, -0.3);
        CHECK(buf.priority(0) == 0.0);
        buf.set_priority(1, 2.5);
        CHECK(buf.priority(1) == 2.5);
        CHECK(buf.total_priority() == doctest::Approx(2.5));
        buf.push(sample_with_state(2));  // new entries inherit the max seen
        CHECK(buf.priority(2) == 2.5);
    }
    SUBCASE("unoccupied slots are rejected") {
        ReplayBuffer buf(4);
        buf.push(sample_with_state(0));
        CHECK_THROWS_AS(buf.at(1), InvalidSlot);
        CHECK_THROWS_AS(buf.set_priority(1, 1.0), InvalidSlot);
        CHECK_THROWS_AS(ReplayBuffer(0), Error);
    }
    SUBCASE("prioritized sampling respects the priorities") {
        ReplayBuffer buf(4);
        buf.push(sample_with_state(0));
        buf.push(sample_with_state(1));
        buf.set_priority(0, 0.0);
        buf.set_priority(1, 5.0);
        std::mt19937_64 rng(3);
        for (int i = 0; i < 200; ++i)
            for (size_t slot : buf.sample_prioritized(4, rng)) CHECK(slot == 1);
        buf.set_priority(0, 1.0);
        buf.set_priority(1, 3.0);
        const long draws = 25000;
        long hits = 0;
        for (long i = 0; i < draws; ++i)
            for (size_t slot : buf.sample_prioritized(4, rng))
                if (slot == 1) ++hits;
        const double n = 4.0 * draws, p = 0.75;
        CHECK(std::fabs(hits - n * p) <= 3.0 * std::sqrt(n * p * (1.0 - p)));
    }
    SUBCASE("degenerate prioritized sampling throws") {
        ReplayBuffer buf(4);
        std::mt19937_64 rng(4);
        CHECK_THROWS_AS(buf.sample_prioritized(1, rng), EmptyBuffer);
        CHECK_THROWS_AS(buf.sample_uniform(1, rng), EmptyBuffer);
        buf.push(sample_with_state(0));
        buf.set_priority(0, 0.0);
        CHECK_THROWS_AS(buf.sample_prioritized(1, rng), ZeroMass);
    }
    SUBCASE("uniform sampling ignores the priorities") {
        ReplayBuffer buf(4);
        buf.push(sample_with_state(0));
        buf.push(sample_with_state(1));
        buf.set_priority(0, 100.0);
        buf.set_priority(1, 0.001);
        std::mt19937_64 rng(5);
        const long draws = 40000;
        long hits = 0;
        for (long i = 0; i < draws; ++i)
            if (buf.sample_uniform(1, rng)[0] == 1) ++hits;
        CHECK(std::fabs(hits - draws * 0.5) <= 3.0 * std::sqrt(draws * 0.25));
    }
}

TEST_CASE("greedy_policy") {
    Matrix q(3, 2);
    q.at(0, 0) = 1.0;
    q.at(0, 1) = 0.0;
    q.at(1, 0) = -1.0;
    q.at(1, 1) = 2.0;
    q.at(2, 0) = 0.5;
    q.at(2, 1) = 0.5;  // tie: lowest index wins
    SUBCASE("epsilon 0 is the pure argmax") {
        const Policy pi = greedy_policy(q, 0.0);
        CHECK(pi.prob(0, 0) == 1.0);
        CHECK(pi.prob(1, 1) == 1.0);
        CHECK(pi.prob(2, 0) == 1.0);
    }
    SUBCASE("epsilon 1 is uniform") {
        const Policy pi = greedy_policy(q, 1.0);
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 2; ++a) CHECK(pi.prob(s, a) == doctest::Approx(0.5));
    }
    SUBCASE("intermediate epsilon splits the mass") {
        const Policy pi = greedy_policy(q, 0.1);
        CHECK(pi.prob(2, 0) == doctest::Approx(0.95));
        CHECK(pi.prob(2, 1) == doctest::Approx(0.05));
    }
    SUBCASE("bad epsilon rejected") {
        CHECK_THROWS_AS(greedy_policy(q, -0.1), Error);
    }
}

TEST_CASE("ratio_loss") {
    AgentParams params(FeatureMap::identity(2), 2);
    TrainerConfig config;
    config.eta = 0.02;
    config.gamma_hat = 1.0;

    TransitionSample t = sample_with_state(0, 1);

    SUBCASE("zero error yields zero loss and gradient") {
        params.target_ratio_weights = {2.0, 1.0};
        params.ratio_weights = {2.0, 1.0};
        // target = 1 * 2 * (0.25/0.5) + 0 = 1 = c(s').
        const RatioLossResult r = ratio_loss(params, t, config, 0.25);
        CHECK(r.loss == 0.0);
        for (double g : r.grad) CHECK(g == 0.0);
    }
    SUBCASE("closed form for a unit error") {
        params.target_ratio_weights = {2.0, 0.0};
        params.ratio_weights = {0.0, 0.0};
        // target = 2 * 0.5 = 1, c(s') = 0: err = 1.
        const RatioLossResult r = ratio_loss(params, t, config, 0.25);
        CHECK(r.loss == doctest::Approx(0.02));
        CHECK(r.grad[1] == doctest::Approx(-2.0 * 0.02));
        CHECK(r.grad[0] == 0.0);
    }
    SUBCASE("loss is linear in eta") {
        params.target_ratio_weights = {2.0, 0.0};
        params.ratio_weights = {0.0, 0.0};
        TrainerConfig big = config;
        big.eta = 0.04;
        CHECK(ratio_loss(params, t, big, 0.25).loss ==
              doctest::Approx(2.0 * ratio_loss(params, t, config, 0.25).loss));
    }
    SUBCASE("initial samples regress toward 1") {
        params.target_ratio_weights = {100.0, 100.0};
        params.ratio_weights = {0.0, 1.0};
        TransitionSample init = t;
        init.is_initial = true;
        CHECK(ratio_loss(params, init, config, 0.25).loss == 0.0);  // c(s') = 1
    }
    SUBCASE("negative bootstrap values are clipped") {
        params.target_ratio_weights = {-5.0, 0.0};
        params.ratio_weights = {0.0, 0.0};
        TrainerConfig gh = config;
        gh.gamma_hat = 0.6;
        // clip(-5) = 0: target = (1 - 0.6) = 0.4, err = 0.4.
        CHECK(ratio_loss(params, t, gh, 0.25).loss ==
              doctest::Approx(0.02 * 0.4 * 0.4));
    }
    SUBCASE("zero behavior probability rejected") {
        TransitionSample bad = t;
        bad.behavior_prob = 0.0;
        CHECK_THROWS_AS(ratio_loss(params, bad, config, 0.25), Error);
    }
}

TEST_CASE("train_step") {
    const double gamma = 0.9;
    TrainerConfig config;
    config.batch_size = 2;
    config.sync_period = 3;
    config.priority_mode = PriorityMode::Ratio;
    std::mt19937_64 rng(6);

    SUBCASE("cold buffer rejected, bad configs rejected") {
        AgentParams params(FeatureMap::identity(2), 2);
        ReplayBuffer buf(8);
        buf.push(sample_with_state(0, 1));
        CHECK_THROWS_AS(train_step(params, buf, config, rng, gamma), BufferNotWarm);
        TrainerConfig bad = config;
        bad.gamma_hat = 1.5;
        CHECK_THROWS_AS(bad.validate(), InvalidDiscount);
        bad = config;
        bad.normalization_weight = 0.1;
        bad.batch_size = 1;
        CHECK_THROWS_AS(bad.validate(), Error);
    }
    SUBCASE("targets sync exactly on the period boundary") {
        AgentParams params(FeatureMap::identity(2), 2);
        ReplayBuffer buf(8);
        TransitionSample t = sample_with_state(0, 1);
        t.reward = 1.0;
        buf.push(t);
        buf.push(sample_with_state(1, 0));
        for (int step = 1; step <= 6; ++step) {
            train_step(params, buf, config, rng, gamma);
            bool synced = true;
            for (int i = 0; i < 2; ++i)
                for (int a = 0; a < 2; ++a)
                    synced = synced &&
                             params.value_weights.at(i, a) == params.target_value_weights.at(i, a);
            if (step % config.sync_period == 0) {
                CHECK(synced);
            } else {
                CHECK_FALSE(synced);  // the value batch moved the live weights
            }
        }
        CHECK(params.step_count == 6);
    }
    SUBCASE("ratio head frozen when learn_ratio is off") {
        AgentParams params(FeatureMap::identity(2), 2);
        ReplayBuffer buf(8);
        buf.push(sample_with_state(0, 1));
        buf.push(sample_with_state(1, 0));
        TrainerConfig frozen = config;
        frozen.learn_ratio = false;
        const Vec before = params.ratio_weights;
        train_step(params, buf, frozen, rng, gamma);
        CHECK(params.ratio_weights == before);
    }
    SUBCASE("ratio priorities refresh on touched slots") {
        AgentParams params(FeatureMap::identity(2), 2);
        params.ratio_weights = {0.7, 1.3};
        ReplayBuffer buf(8);
        buf.push(sample_with_state(0, 1));
        buf.push(sample_with_state(1, 0));
        TrainerConfig frozen = config;
        frozen.learn_ratio = false;  // keep the ratio head fixed so the refresh is exact
        const TrainMetrics m = train_step(params, buf, frozen, rng, gamma);
        // Stratified batch of 2 over equal priorities touches both slots.
        CHECK(buf.priority(0) == doctest::Approx(0.7));
        CHECK(buf.priority(1) == doctest::Approx(1.3));
        CHECK(m.mean_priority == doctest::Approx(buf.total_priority() / 2.0));
    }
    SUBCASE("value head converges on a one-state bandit") {
        AgentParams params(FeatureMap::identity(1), 2);
        ReplayBuffer buf(8);
        TransitionSample t = sample_with_state(0, 0);
        t.action = 1;
        t.reward = 1.0;
        buf.push(t);
        buf.push(t);
        TrainerConfig bandit = config;
        bandit.priority_mode = PriorityMode::Uniform;
        bandit.learn_ratio = false;
        bandit.sync_period = 10;
        for (int step = 0; step < 2000; ++step) train_step(params, buf, bandit, rng, 0.0);
        CHECK(params.q(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("normalization penalty pulls a constant head toward mass 1") {
        AgentParams params(FeatureMap::identity(2), 2);
        params.ratio_weights = {3.0, 3.0};
        params.sync_targets();
        ReplayBuffer buf(8);
        TransitionSample a = sample_with_state(0, 1);
        TransitionSample b = sample_with_state(1, 0);
        a.is_initial = b.is_initial = true;  // silence the bootstrap term
        buf.push(a);
        buf.push(b);
        TrainerConfig norm = config;
        norm.eta = 1e-9;  // make the squared-error term negligible
        norm.normalization_weight = 0.5;
        norm.learn_ratio = true;
        norm.ratio_step = 0.01;
        norm.sync_period = 1000000;
        double mass0 = 0.5 * (params.ratio(0) + params.ratio(1));
        for (int step = 0; step < 200; ++step) train_step(params, buf, norm, rng, gamma);
        double mass1 = 0.5 * (params.ratio(0) + params.ratio(1));
        CHECK(std::fabs(mass1 - 1.0) < std::fabs(mass0 - 1.0));
    }
}
