#include "copkit/operators.hpp"

#include <cmath>
#include <iomanip>

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

Matrix from_eigen(const EMat& m) {
    Matrix out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    Eigen::Map<EMat>(out.data.data(), m.rows(), m.cols()) = m;
    return out;
}

void require_positive(const StateDistribution& d) {
    for (int s = 0; s < d.size(); ++s)
        if (d(s) <= 0.0) throw ZeroDenominator(s);
}

}  // namespace

// --- FeatureMap ---

FeatureMap::FeatureMap(Matrix phi) : phi_(std::move(phi)) {
    if (phi_.cols > phi_.rows) throw Error("FeatureMap: more features than states");
    Eigen::JacobiSVD<EMat> svd(emap(phi_));
    if (svd.singularValues().minCoeff() <= kRankTol)
        throw Error("FeatureMap: feature matrix not full column rank");
}

FeatureMap FeatureMap::identity(int n) {
    return FeatureMap(Matrix::identity(n));
}

// --- WeightedProjector ---

WeightedProjector::WeightedProjector(FeatureMap features, StateDistribution weights)
    : features_(std::move(features)), weights_(std::move(weights)) {
    if (weights_.size() != features_.n_states())
        throw DimensionMismatch("WeightedProjector: weight length mismatch");
    const int n = features_.n_states();
    const int k = features_.k();
    EMat phi = emap(features_.phi());
    EMat phit_d = phi.transpose();  // k x n, scaled by d columnwise
    for (int s = 0; s < n; ++s) phit_d.col(s) *= weights_(s);
    EMat gram = phit_d * phi;  // k x k
    Eigen::JacobiSVD<EMat> svd(gram, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin >= kCondLimit)
        throw IllConditioned("WeightedProjector: Phi^T D Phi nearly singular");
    solver_ = from_eigen(svd.solve(phit_d));
    (void)k;
}

Vec WeightedProjector::coefficients(const Vec& x) const {
    if (x.size() != static_cast<size_t>(features_.n_states()))
        throw DimensionMismatch("WeightedProjector: input length mismatch");
    Vec z(features_.k(), 0.0);
    kernels::matvec(solver_, x.data(), z.data());
    return z;
}

Vec WeightedProjector::apply(const Vec& x) const {
    const Vec z = coefficients(x);
    Vec y(features_.n_states(), 0.0);
    kernels::matvec(features_.phi(), z.data(), y.data());
    return y;
}

// --- free functions ---

double weighted_norm(const Vec& x, const StateDistribution& d) {
    return std::sqrt(kernels::weighted_dot(d.data(), x.data(), x.data(), x.size()));
}

Vec bellman_apply(const InducedChain& chain, double gamma, const Vec& v) {
    if (v.size() != static_cast<size_t>(chain.n_states()))
        throw DimensionMismatch("bellman_apply: value length mismatch");
    Vec out(chain.n_states(), 0.0);
    kernels::matvec(chain.transition(), v.data(), out.data());
    kernels::scale(gamma, out.data(), out.size());
    kernels::axpy(1.0, chain.expected_reward().data(), out.data(), out.size());
    return out;
}

Vec exact_values(const InducedChain& chain, double gamma) {
    const int n = chain.n_states();
    EMat a = EMat::Identity(n, n) - gamma * emap(chain.transition());
    EVec b(n);
    for (int i = 0; i < n; ++i) b(i) = chain.expected_reward()[i];
    EVec x = a.partialPivLu().solve(b);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = x(i);
    return v;
}

Vec weighted_project(const WeightedProjector& proj, const Vec& x) {
    return proj.apply(x);
}

RatioVector cop_apply(const InducedChain& chain, const StateDistribution& d_mu,
                      const RatioVector& c) {
    if (d_mu.size() != chain.n_states() || c.size() != chain.n_states())
        throw DimensionMismatch("cop_apply: size mismatch");
    require_positive(d_mu);
    const size_t n = c.values().size();
    Vec t(n), y(n);
    kernels::mul(d_mu.data(), c.values().data(), t.data(), n);
    kernels::matvec_t(chain.transition(), t.data(), y.data());
    kernels::div(y.data(), d_mu.data(), y.data(), n);
    return RatioVector(std::move(y));
}

RatioVector normalized_cop_apply(const InducedChain& chain, const StateDistribution& d_mu,
                                 const RatioVector& c) {
    RatioVector y = cop_apply(chain, d_mu, c);
    // The normalizer is the d_mu-weighted mass, which makes d_pi/d_mu an
    // exact fixed point.
    const double mass = kernels::dot(d_mu.data(), y.values().data(), y.values().size());
    if (std::fabs(mass) <= 1e-300) throw DegenerateMass("normalized_cop_apply: zero mass");
    kernels::scale(1.0 / mass, y.values().data(), y.values().size());
    return y;
}

RatioVector discounted_cop_apply(const InducedChain& chain, const StateDistribution& d_mu,
                                 const RatioVector& c, double gamma_hat) {
    if (!(gamma_hat >= 0.0 && gamma_hat <= 1.0))
        throw InvalidDiscount("discounted_cop_apply: gamma_hat outside [0,1]");
    RatioVector y = cop_apply(chain, d_mu, c);
    for (double& v : y.values()) v = gamma_hat * v + (1.0 - gamma_hat);
    return y;
}

RatioVector episodic_cop_apply(const EpisodicMdp& emdp, const Policy& policy,
                               const Vec& d_mu_unnormalized, const RatioVector& c,
                               double gamma_hat) {
    if (!(gamma_hat >= 0.0 && gamma_hat <= 1.0))
        throw InvalidDiscount("episodic_cop_apply: gamma_hat outside [0,1]");
    const InducedChain chain = induce_chain(emdp, policy);
    const int n = chain.n_states();
    if (static_cast<int>(d_mu_unnormalized.size()) != n || c.size() != n)
        throw DimensionMismatch("episodic_cop_apply: size mismatch");
    for (int s = 0; s < n; ++s)
        if (d_mu_unnormalized[s] <= 0.0) throw ZeroDenominator(s);
    Vec t(n), y(n);
    kernels::mul(d_mu_unnormalized.data(), c.values().data(), t.data(), n);
    kernels::matvec_t(chain.transition(), t.data(), y.data());
    kernels::div(y.data(), d_mu_unnormalized.data(), y.data(), n);
    y[emdp.start_state()] += 1.0;  // + d_0
    if (gamma_hat < 1.0)
        for (double& v : y) v = gamma_hat * v + (1.0 - gamma_hat);
    y[emdp.start_state()] = 1.0;  // start-state ratio is policy independent
    return RatioVector(std::move(y));
}

IterationTrace iterate_operator(const RatioOperator& op, const RatioVector& c0,
                                const StateDistribution& d_mu, long steps, long record_every) {
    if (steps < 1) throw Error("iterate_operator: steps must be >= 1");
    if (record_every < 1) record_every = steps;
    IterationTrace trace;
    Vec c = c0.values();
    Vec diff(c.size());
    for (long k = 1; k <= steps; ++k) {
        Vec next = op(c);
        for (size_t i = 0; i < c.size(); ++i) diff[i] = next[i] - c[i];
        const double res = weighted_norm(diff, d_mu);
        if (kernels::max_abs(next.data(), next.size()) > kDivergeLimit) throw Diverged(k);
        c = std::move(next);
        if (k % record_every == 0 || k == steps) {
            trace.steps.push_back(k);
            trace.iterates.push_back(c);
            trace.residuals.push_back(res);
        }
    }
    trace.final = c;
    trace.total_steps = steps;
    return trace;
}

ProjectedTrace projected_cop_iterate(const InducedChain& chain, const StateDistribution& d_mu,
                                     const WeightedProjector& proj, const RatioVector& c0,
                                     long steps) {
    ProjectedTrace out;
    Vec c = c0.values();
    Vec diff(c.size());
    for (long k = 1; k <= steps; ++k) {
        Vec next = proj.apply(cop_apply(chain, d_mu, RatioVector(c)).values());
        for (size_t i = 0; i < c.size(); ++i) diff[i] = next[i] - c[i];
        const double res = weighted_norm(diff, d_mu);
        c = std::move(next);
        out.trace.steps.push_back(k);
        out.trace.residuals.push_back(res);
        const double mx = kernels::max_abs(c.data(), c.size());
        if (mx > kDivergeLimit) {
            out.outcome = ProjectedOutcome::Diverged;
            break;
        }
        if (mx < kResidualTol) {
            out.outcome = ProjectedOutcome::ConvergedToZero;
            break;
        }
    }
    out.trace.final = c;
    out.trace.total_steps = out.trace.steps.empty() ? 0 : out.trace.steps.back();
    return out;
}

ConcentrationReport concentration(const InducedChain& chain, const StateDistribution& d_mu,
                                  const StateDistribution& d_pi, int n) {
    if (n < 1) throw Error("concentration: n must be >= 1");
    require_positive(d_mu);
    require_positive(d_pi);
    const int ns = chain.n_states();
    EMat pn = emap(chain.transition());
    for (int i = 1; i < n; ++i) pn = pn * emap(chain.transition());
    ConcentrationReport rep;
    rep.n = n;
    rep.k_n = 0.0;
    for (int s2 = 0; s2 < ns; ++s2) {
        double acc = 0.0;
        for (int s = 0; s < ns; ++s) acc += d_mu(s) / d_mu(s2) * pn(s, s2);
        rep.k_n = std::max(rep.k_n, acc);
    }
    double a = 0.0, b = 0.0;
    for (int s = 0; s < ns; ++s) {
        a = std::max(a, d_mu(s) / d_pi(s));
        b = std::max(b, d_pi(s) / d_mu(s));
    }
    rep.k_bound = a * b;
    rep.safe_gamma = std::pow(rep.k_n, -1.0 / (2.0 * n));
    if (rep.k_n < 1.0 - 1e-9)
        throw Error("concentration: K below 1, mass accounting broken");
    return rep;
}

ContractionResult contraction_check(const InducedChain& chain, const StateDistribution& d_mu,
                                    double gamma_hat, int n, int trials,
                                    std::mt19937_64& rng) {
    if (trials < 1) throw Error("contraction_check: trials must be >= 1");
    const StateDistribution d_pi = stationary_distribution(chain);
    const ConcentrationReport rep = concentration(chain, d_mu, d_pi, n);
    const StateDistribution dhat = discounted_stationary(chain, d_mu, gamma_hat);
    const RatioVector cstar = ratio_of(dhat, d_mu);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ContractionResult result;
    result.bound = std::pow(gamma_hat, n) * std::sqrt(rep.k_n);
    Vec diff(cstar.values().size());
    for (int t = 0; t < trials; ++t) {
        Vec c(cstar.values().size());
        for (double& v : c) v = unif(rng);
        for (size_t i = 0; i < c.size(); ++i) diff[i] = c[i] - cstar(static_cast<int>(i));
        const double before = weighted_norm(diff, d_mu);
        if (before == 0.0) continue;
        RatioVector y{c};
        for (int i = 0; i < n; ++i) y = discounted_cop_apply(chain, d_mu, y, gamma_hat);
        for (size_t i = 0; i < c.size(); ++i) diff[i] = y(static_cast<int>(i)) - cstar(static_cast<int>(i));
        result.measured_max = std::max(result.measured_max, weighted_norm(diff, d_mu) / before);
    }
    if (result.measured_max > result.bound + 1e-9)
        throw BoundViolated("contraction_check: measured ratio exceeds bound");
    return result;
}

ApproximationErrorReport approximation_error_bound(const InducedChain& chain, double gamma,
                                                   const WeightedProjector& proj,
                                                   const StateDistribution& d_pi,
                                                   const Vec& v_pi) {
    require_positive(d_pi);
    const int n = chain.n_states();
    const int k = proj.features().k();
    EMat phi = emap(proj.features().phi());
    EMat p = emap(chain.transition());

    // Pi_d as an explicit n x n matrix, then the d_pi-weighted induced norm
    // of Pi_d P_pi as a largest singular value after similarity transform.
    EMat phit_d = phi.transpose();
    for (int s = 0; s < n; ++s) phit_d.col(s) *= proj.weights()(s);
    EMat proj_mat = phi * (phit_d * phi).inverse() * phit_d;
    EMat m = proj_mat * p;
    EMat scaled = m;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            scaled(i, j) = std::sqrt(d_pi(i)) * m(i, j) / std::sqrt(d_pi(j));
    Eigen::JacobiSVD<EMat> svd(scaled);
    ApproximationErrorReport rep;
    rep.operator_norm = svd.singularValues().maxCoeff();
    if (rep.operator_norm >= 1.0 / gamma) throw PreconditionViolated(rep.operator_norm);

    // Projected fixed point: theta = (Phi^T D (Phi - gamma P Phi))^{-1} Phi^T D r.
    EVec r(n);
    for (int i = 0; i < n; ++i) r(i) = chain.expected_reward()[i];
    EMat a = phit_d * (phi - gamma * p * phi);
    Eigen::PartialPivLU<EMat> lu(a);
    if ((a * lu.inverse() - EMat::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-6)
        throw SolverFailure("approximation_error_bound: projected system singular");
    EVec theta = lu.solve(phit_d * r);
    EVec vhat = phi * theta;

    Vec diff(n);
    for (int i = 0; i < n; ++i) diff[i] = vhat(i) - v_pi[i];
    rep.actual = weighted_norm(diff, d_pi);
    EVec proj_v = proj_mat * Eigen::Map<const EVec>(v_pi.data(), n);
    for (int i = 0; i < n; ++i) diff[i] = proj_v(i) - v_pi[i];
    rep.bound = weighted_norm(diff, d_pi) / (1.0 - gamma * rep.operator_norm);
    if (rep.actual > rep.bound + 1e-9)
        throw BoundViolated("approximation_error_bound: actual error above bound");
    return rep;
}

void write_trace_csv(std::ostream& os, const IterationTrace& trace,
                     const StateDistribution& d_mu, const Vec& fixed_point) {
    os << "step,residual,distance_to_fixed_point,max_entry\n";
    os << std::setprecision(17);
    Vec diff;
    for (size_t i = 0; i < trace.steps.size(); ++i) {
        os << trace.steps[i] << ',' << trace.residuals[i] << ',';
        if (!fixed_point.empty() && i < trace.iterates.size()) {
            const Vec& it = trace.iterates[i];
            diff.resize(it.size());
            for (size_t j = 0; j < it.size(); ++j) diff[j] = it[j] - fixed_point[j];
            os << weighted_norm(diff, d_mu);
        }
        os << ',';
        if (i < trace.iterates.size())
            os << kernels::max_abs(trace.iterates[i].data(), trace.iterates[i].size());
        os << '\n';
    }
}

}  // namespace copkit
