#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "copkit/envs.hpp"
#include "copkit/operators.hpp"

using namespace copkit;

namespace {

InducedChain random_chain(int n, std::mt19937_64& rng, bool with_rewards = false) {
    Vec r(n, 0.0);
    if (with_rewards) {
        std::normal_distribution<double> norm(0.0, 1.0);
        for (double& v : r) v = norm(rng);
    }
    return InducedChain(random_ergodic_matrix(n, rng), std::move(r));
}

StateDistribution random_dist(int n, std::mt19937_64& rng) {
    return stationary_distribution(random_chain(n, rng));
}

double max_diff(const Vec& a, const Vec& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("bellman operator") {
    std::mt19937_64 rng(1);
    const InducedChain chain = random_chain(5, rng, true);
    const double gamma = 0.9;
    const Vec v_pi = exact_values(chain, gamma);

    SUBCASE("v_pi is a fixed point") {
        CHECK(max_diff(bellman_apply(chain, gamma, v_pi), v_pi) < 1e-10);
    }
    SUBCASE("gamma 0 returns the reward") {
        Vec v(5, 123.0);
        CHECK(max_diff(bellman_apply(chain, 0.0, v), chain.expected_reward()) < 1e-14);
    }
    SUBCASE("value iteration converges at rate gamma^k") {
        Vec v(5, 0.0);
        for (int k = 0; k < 500; ++k) v = bellman_apply(chain, gamma, v);
        double vmax = 0.0;
        for (double x : v_pi) vmax = std::max(vmax, std::fabs(x));
        CHECK(max_diff(v, v_pi) <= std::pow(gamma, 500) * vmax + 1e-12);
    }
}

TEST_CASE("weighted projector") {
    std::mt19937_64 rng(2);
    SUBCASE("identity features project to the input") {
        const WeightedProjector proj(FeatureMap::identity(4), random_dist(4, rng));
        const Vec x = {1.0, -2.0, 0.5, 3.0};
        CHECK(max_diff(proj.apply(x), x) < 1e-10);
    }
    SUBCASE("single-feature closed form") {
        Matrix phi(2, 1);
        phi.at(0, 0) = 1.0;
        phi.at(1, 0) = 2.0;
        const WeightedProjector proj(FeatureMap(phi), StateDistribution({0.5, 0.5}));
        const Vec y = proj.apply({1.0, 0.0});
        CHECK(y[0] == doctest::Approx(0.2));
        CHECK(y[1] == doctest::Approx(0.4));
    }
    SUBCASE("idempotence, span fixed points, and d-orthogonality") {
        std::normal_distribution<double> norm(0.0, 1.0);
        for (int trial = 0; trial < 10; ++trial) {
            const int n = 6, k = 3;
            Matrix phi(n, k);
            for (double& v : phi.data) v = norm(rng);
            const StateDistribution d = random_dist(n, rng);
            const WeightedProjector proj(FeatureMap(phi), d);
            Vec x(n), w(k);
            for (double& v : x) v = norm(rng);
            for (double& v : w) v = norm(rng);
            const Vec px = proj.apply(x);
            CHECK(max_diff(proj.apply(px), px) < 1e-10);
            Vec in_span(n, 0.0);
            for (int s = 0; s < n; ++s)
                for (int j = 0; j < k; ++j) in_span[s] += phi.at(s, j) * w[j];
            CHECK(max_diff(proj.apply(in_span), in_span) < 1e-10);
            double inner = 0.0;
            for (int s = 0; s < n; ++s) inner += d(s) * (x[s] - px[s]) * in_span[s];
            CHECK(std::fabs(inner) < 1e-10);
        }
    }
}

TEST_CASE("cop_apply") {
    std::mt19937_64 rng(3);
    SUBCASE("stationary ratio is a fixed point, including scaled copies") {
        const InducedChain chain = random_chain(6, rng);
        const StateDistribution d_mu = random_dist(6, rng);
        const RatioVector ratio = ratio_of(stationary_distribution(chain), d_mu);
        for (double beta : {-1.0, 0.5, 1.0, 10.0}) {
            Vec scaled = ratio.values();
            for (double& v : scaled) v *= beta;
            CHECK(max_diff(cop_apply(chain, d_mu, RatioVector(scaled)).values(), scaled) <
                  1e-10);
        }
    }
    SUBCASE("on-policy ones vector is fixed") {
        const InducedChain chain = random_chain(4, rng);
        const StateDistribution d_mu = stationary_distribution(chain);
        const RatioVector out = cop_apply(chain, d_mu, RatioVector::ones(4));
        CHECK(max_diff(out.values(), Vec(4, 1.0)) < 1e-12);
    }
    SUBCASE("matches the brute-force expectation form") {
        const InducedChain chain = random_chain(3, rng);
        const StateDistribution d_mu = random_dist(3, rng);
        const Vec c = {0.4, 1.7, -0.3};
        const RatioVector out = cop_apply(chain, d_mu, RatioVector(c));
        for (int s2 = 0; s2 < 3; ++s2) {
            double acc = 0.0;
            for (int s = 0; s < 3; ++s)
                acc += d_mu(s) * chain.transition().at(s, s2) * c[s] / d_mu(s2);
            CHECK(out(s2) == doctest::Approx(acc).epsilon(1e-13));
        }
    }
    SUBCASE("conserves d_mu-weighted mass") {
        for (int trial = 0; trial < 20; ++trial) {
            const InducedChain chain = random_chain(5, rng);
            const StateDistribution d_mu = random_dist(5, rng);
            std::uniform_real_distribution<double> unif(-2.0, 2.0);
            Vec c(5);
            for (double& v : c) v = unif(rng);
            const RatioVector out = cop_apply(chain, d_mu, RatioVector(c));
            double before = 0.0, after = 0.0;
            for (int s = 0; s < 5; ++s) {
                before += d_mu(s) * c[s];
                after += d_mu(s) * out(s);
            }
            CHECK(std::fabs(before - after) < 1e-12);
        }
    }
    SUBCASE("zero d_mu entry rejected") {
        const InducedChain chain = random_chain(3, rng);
        CHECK_THROWS_AS(
            cop_apply(chain, StateDistribution({0.5, 0.0, 0.5}), RatioVector::ones(3)),
            ZeroDenominator);
    }
}

TEST_CASE("normalized_cop_apply") {
    std::mt19937_64 rng(4);
    const InducedChain chain = random_chain(5, rng);
    const StateDistribution d_mu = random_dist(5, rng);
    const RatioVector ratio = ratio_of(stationary_distribution(chain), d_mu);

    SUBCASE("exact ratio is fixed") {
        CHECK(max_diff(normalized_cop_apply(chain, d_mu, ratio).values(), ratio.values()) <
              1e-10);
    }
    SUBCASE("scale invariant") {
        Vec c = {0.3, 1.2, 0.8, 2.0, 0.1};
        Vec scaled = c;
        for (double& v : scaled) v *= 7.5;
        CHECK(max_diff(normalized_cop_apply(chain, d_mu, RatioVector(c)).values(),
                       normalized_cop_apply(chain, d_mu, RatioVector(scaled)).values()) <
              1e-12);
    }
    SUBCASE("iteration from ones reaches the exact ratio") {
        std::mt19937_64 rng2(11);
        const InducedChain big = random_chain(10, rng2);
        const StateDistribution dm = random_dist(10, rng2);
        RatioVector c = RatioVector::ones(10);
        for (int k = 0; k < 10000; ++k) c = normalized_cop_apply(big, dm, c);
        CHECK(max_diff(c.values(), ratio_of(stationary_distribution(big), dm).values()) <
              1e-8);
    }
    SUBCASE("zero mass rejected") {
        CHECK_THROWS_AS(
            normalized_cop_apply(chain, d_mu, RatioVector(Vec(5, 0.0))), DegenerateMass);
    }
}

TEST_CASE("discounted_cop_apply") {
    std::mt19937_64 rng(5);
    const InducedChain chain = random_chain(5, rng);
    const StateDistribution d_mu = random_dist(5, rng);
    const Vec c = {0.2, 1.1, 0.7, 1.9, -0.4};

    SUBCASE("gamma_hat 0 returns ones") {
        CHECK(max_diff(discounted_cop_apply(chain, d_mu, RatioVector(c), 0.0).values(),
                       Vec(5, 1.0)) < 1e-15);
    }
    SUBCASE("gamma_hat 1 equals the plain operator") {
        CHECK(max_diff(discounted_cop_apply(chain, d_mu, RatioVector(c), 1.0).values(),
                       cop_apply(chain, d_mu, RatioVector(c)).values()) < 1e-15);
    }
    SUBCASE("closed-form fixed point") {
        const RatioVector cstar = ratio_of(discounted_stationary(chain, d_mu, 0.8), d_mu);
        CHECK(max_diff(discounted_cop_apply(chain, d_mu, cstar, 0.8).values(),
                       cstar.values()) < 1e-10);
    }
    SUBCASE("invalid discount rejected") {
        CHECK_THROWS_AS(discounted_cop_apply(chain, d_mu, RatioVector(c), -0.1),
                        InvalidDiscount);
    }
}

TEST_CASE("iterate_operator") {
    std::mt19937_64 rng(6);
    const InducedChain chain = random_chain(6, rng);
    const StateDistribution d_mu = random_dist(6, rng);

    SUBCASE("identity operator records zero residuals") {
        const RatioOperator id = [](const Vec& v) { return v; };
        const IterationTrace t = iterate_operator(id, RatioVector::ones(6), d_mu, 10, 2);
        for (double r : t.residuals) CHECK(r == 0.0);
        CHECK(t.steps.size() == 5);
    }
    SUBCASE("discounted iteration reaches the closed form") {
        const double gh = 0.9;
        const RatioOperator op = [&](const Vec& v) {
            return discounted_cop_apply(chain, d_mu, RatioVector(v), gh).values();
        };
        const IterationTrace t = iterate_operator(op, RatioVector::ones(6), d_mu, 2000, 2000);
        CHECK(max_diff(t.final, ratio_of(discounted_stationary(chain, d_mu, gh), d_mu).values()) <
              1e-8);
    }
    SUBCASE("doubling operator reports divergence with the step") {
        const RatioOperator doubling = [](const Vec& v) {
            Vec out = v;
            for (double& x : out) x *= 10.0;
            return out;
        };
        try {
            iterate_operator(doubling, RatioVector::ones(6), d_mu, 100, 10);
            FAIL("expected Diverged");
        } catch (const Diverged& e) {
            CHECK(e.step > 0);
            CHECK(e.step < 20);
        }
    }
}

TEST_CASE("projected_cop_iterate with identity features tracks the plain iteration") {
    std::mt19937_64 rng(7);
    const InducedChain chain = random_chain(5, rng);
    const StateDistribution d_mu = random_dist(5, rng);
    const WeightedProjector proj(FeatureMap::identity(5), d_mu);
    Vec c = {0.5, 1.5, 0.25, 2.0, 0.75};
    const ProjectedTrace out = projected_cop_iterate(chain, d_mu, proj, RatioVector(c), 50);
    Vec expect = c;
    for (long k = 0; k < out.trace.total_steps; ++k)
        expect = cop_apply(chain, d_mu, RatioVector(expect)).values();
    CHECK(max_diff(out.trace.final, expect) < 1e-9);
}

TEST_CASE("concentration") {
    std::mt19937_64 rng(8);
    SUBCASE("uniform d_mu two-state closed form") {
        Matrix p(2, 2);
        p.at(0, 0) = 0.9;
        p.at(0, 1) = 0.1;
        p.at(1, 0) = 0.2;
        p.at(1, 1) = 0.8;
        const InducedChain chain(std::move(p), Vec(2, 0.0));
        const ConcentrationReport rep =
            concentration(chain, StateDistribution({0.5, 0.5}),
                          stationary_distribution(chain), 1);
        CHECK(rep.k_n == doctest::Approx(1.1).epsilon(1e-12));
        CHECK(rep.safe_gamma == doctest::Approx(std::pow(1.1, -0.5)).epsilon(1e-12));
    }
    SUBCASE("on-policy coefficient is exactly 1") {
        const InducedChain chain = random_chain(6, rng);
        const StateDistribution d = stationary_distribution(chain);
        for (int n : {1, 2, 4})
            CHECK(concentration(chain, d, d, n).k_n == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("k_n bounded by k_bound and the operator norm is bounded by k_n") {
        for (int trial = 0; trial < 10; ++trial) {
            const InducedChain chain = random_chain(6, rng);
            const StateDistribution d_mu = random_dist(6, rng);
            const StateDistribution d_pi = stationary_distribution(chain);
            std::uniform_real_distribution<double> unif(-1.0, 1.0);
            for (int n : {1, 2, 4}) {
                const ConcentrationReport rep = concentration(chain, d_mu, d_pi, n);
                CHECK(rep.k_n >= 1.0 - 1e-12);
                CHECK(rep.k_n <= rep.k_bound + 1e-9);
                for (int t = 0; t < 100; ++t) {
                    Vec c(6);
                    for (double& v : c) v = unif(rng);
                    RatioVector y{c};
                    for (int i = 0; i < n; ++i) y = cop_apply(chain, d_mu, y);
                    const double num = weighted_norm(y.values(), d_mu);
                    const double den = weighted_norm(c, d_mu);
                    CHECK(num * num <= rep.k_n * den * den + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("contraction_check") {
    std::mt19937_64 rng(9);
    const InducedChain chain = random_chain(10, rng);
    const StateDistribution d_mu = random_dist(10, rng);

    SUBCASE("gamma_hat 0 contracts everything to the fixed point in one step") {
        const ContractionResult res = contraction_check(chain, d_mu, 0.0, 1, 20, rng);
        CHECK(res.measured_max == 0.0);
    }
    SUBCASE("bound holds for gamma_hat 0.95 at n in {1,2,4}") {
        for (int n : {1, 2, 4}) {
            const ContractionResult res = contraction_check(chain, d_mu, 0.95, n, 100, rng);
            CHECK(res.measured_max <= res.bound + 1e-9);
        }
    }
    SUBCASE("on-policy bound is gamma_hat^n") {
        const StateDistribution d = stationary_distribution(chain);
        const ContractionResult res = contraction_check(chain, d, 0.9, 2, 50, rng);
        CHECK(res.bound == doctest::Approx(0.81).epsilon(1e-9));
        CHECK(res.measured_max <= res.bound + 1e-9);
    }
    SUBCASE("contraction below safe_gamma on generated instances") {
        for (int trial = 0; trial < 5; ++trial) {
            const InducedChain c = random_chain(6, rng);
            const StateDistribution dm = random_dist(6, rng);
            const ConcentrationReport rep =
                concentration(c, dm, stationary_distribution(c), 1);
            const ContractionResult res =
                contraction_check(c, dm, rep.safe_gamma, 1, 50, rng);
            CHECK(res.measured_max <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("approximation_error_bound") {
    std::mt19937_64 rng(10);
    SUBCASE("d = d_pi with v_pi in the span gives a zero bound") {
        const InducedChain chain = random_chain(4, rng, true);
        const double gamma = 0.9;
        const Vec v_pi = exact_values(chain, gamma);
        Matrix phi(4, 2);
        for (int s = 0; s < 4; ++s) {
            phi.at(s, 0) = v_pi[s];
            phi.at(s, 1) = 1.0;
        }
        const StateDistribution d_pi = stationary_distribution(chain);
        const ApproximationErrorReport rep = approximation_error_bound(
            chain, gamma, WeightedProjector(FeatureMap(phi), d_pi), d_pi, v_pi);
        CHECK(rep.bound < 1e-9);
        CHECK(rep.actual < 1e-9);
    }
    SUBCASE("actual below bound on random admissible instances; d_pi minimizes the numerator") {
        std::normal_distribution<double> norm(0.0, 1.0);
        int admitted = 0;
        while (admitted < 20) {
            const InducedChain chain = random_chain(5, rng, true);
            const double gamma = 0.9;
            const Vec v_pi = exact_values(chain, gamma);
            const StateDistribution d_pi = stationary_distribution(chain);
            Matrix phi(5, 2);
            for (double& v : phi.data) v = norm(rng);
            try {
                const WeightedProjector pi_proj(FeatureMap(phi), d_pi);
                const ApproximationErrorReport rep =
                    approximation_error_bound(chain, gamma, pi_proj, d_pi, v_pi);
                CHECK(rep.actual <= rep.bound + 1e-9);
                // The d_pi-weighted projection minimizes the d_pi-norm
                // residual over all weightings.
                Vec diff(5);
                const Vec proj_v = pi_proj.apply(v_pi);
                for (int s = 0; s < 5; ++s) diff[s] = proj_v[s] - v_pi[s];
                const double best = weighted_norm(diff, d_pi);
                for (int probe = 0; probe < 20; ++probe) {
                    const StateDistribution d = random_dist(5, rng);
                    const Vec other = WeightedProjector(FeatureMap(phi), d).apply(v_pi);
                    for (int s = 0; s < 5; ++s) diff[s] = other[s] - v_pi[s];
                    CHECK(weighted_norm(diff, d_pi) >= best - 1e-10);
                }
                ++admitted;
            } catch (const PreconditionViolated&) {
            }
        }
    }
    SUBCASE("the spiral construction violates the precondition") {
        const GeneratedEnv env = generate_env(EnvSpec{EnvKind::DivergenceExample}, 0);
        const Mdp& mdp = env.require_mdp();
        const InducedChain chain = induce_chain(mdp, env.target);
        const StateDistribution d_mu =
            stationary_distribution(induce_chain(mdp, env.behavior));
        CHECK_THROWS_AS(
            approximation_error_bound(chain, mdp.discount(),
                                      WeightedProjector(*env.features, d_mu),
                                      stationary_distribution(chain),
                                      exact_values(chain, mdp.discount())),
            PreconditionViolated);
    }
}

TEST_CASE("episodic cop operator") {
    EnvSpec spec;
    spec.kind = EnvKind::EpisodicChain;
    spec.n_states = 4;
    const GeneratedEnv env = generate_env(spec, 0);
    const EpisodicMdp& emdp = env.require_emdp();
    const Vec d_mu = episodic_visitation(emdp, env.behavior);
    const Vec d_pi = episodic_visitation(emdp, env.target);
    Vec ratio(4);
    for (int s = 0; s < 4; ++s) ratio[s] = d_pi[s] / d_mu[s];

    SUBCASE("visitation ratio is a fixed point") {
        const RatioVector out = episodic_cop_apply(emdp, env.target, d_mu, RatioVector(ratio), 1.0);
        for (int s = 0; s < 4; ++s) CHECK(out(s) == doctest::Approx(ratio[s]).epsilon(1e-12));
    }
    SUBCASE("start state stays pinned at 1") {
        RatioVector c{Vec{1.0, 5.0, -2.0, 0.3}};
        for (int k = 0; k < 10; ++k) {
            c = episodic_cop_apply(emdp, env.target, d_mu, c, 0.9);
            CHECK(c(0) == 1.0);
        }
    }
    SUBCASE("iteration limit matches the visitation oracle") {
        RatioVector c = RatioVector::ones(4);
        for (int k = 0; k < 500; ++k) c = episodic_cop_apply(emdp, env.target, d_mu, c, 1.0);
        for (int s = 0; s < 4; ++s) CHECK(std::fabs(c(s) - ratio[s]) < 1e-9);
    }
}

TEST_CASE("reversible chain construction yields a symmetric operator") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        const ReversibleChain rc = random_reversible_chain(6, rng);
        // Uniform stationary distribution and a symmetric transition matrix,
        // so Y = D^{-1} P^T D = P^T = P.
        for (int s = 0; s < 6; ++s)
            CHECK(rc.stationary(s) == doctest::Approx(1.0 / 6.0).epsilon(1e-9));
        const Matrix& p = rc.chain.transition();
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                CHECK(std::fabs(p.at(i, j) - p.at(j, i)) < 1e-12);
        const StateDistribution check = stationary_distribution(rc.chain);
        for (int s = 0; s < 6; ++s)
            CHECK(check(s) == doctest::Approx(rc.stationary(s)).epsilon(1e-8));
    }
}
