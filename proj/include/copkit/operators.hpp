#pragma once

#include <functional>
#include <ostream>
#include <random>

#include "copkit/mdp.hpp"

// Exact (expectation-level) operators and the bounds attached to them:
// Bellman, weighted projection, COP, normalized / discounted COP,
// concentration coefficients, contraction measurement, and the linear
// approximation error bound.
namespace copkit {

class FeatureMap {
public:
    // Full column rank required (smallest singular value > kRankTol).
    explicit FeatureMap(Matrix phi);

    int n_states() const { return phi_.rows; }
    int k() const { return phi_.cols; }
    const Matrix& phi() const { return phi_; }
    const double* features(int s) const { return phi_.row(s); }

    static FeatureMap identity(int n);

private:
    Matrix phi_;
};

// Weighted least-squares projection onto span(Phi) in the d-weighted norm:
// Pi_d = Phi (Phi^T D Phi)^{-1} Phi^T D.
class WeightedProjector {
public:
    WeightedProjector(FeatureMap features, StateDistribution weights);

    Vec apply(const Vec& x) const;
    // Coefficients z with Pi_d x = Phi z.
    Vec coefficients(const Vec& x) const;

    const FeatureMap& features() const { return features_; }
    const StateDistribution& weights() const { return weights_; }

private:
    FeatureMap features_;
    StateDistribution weights_;
    Matrix solver_;  // (Phi^T D Phi)^{-1} Phi^T D, precomputed k x n
};

struct ConcentrationReport {
    int n = 1;
    double k_n = 1.0;       // K_{pi,mu,n}
    double k_bound = 1.0;   // K_{pi,mu}
    double safe_gamma = 1.0;  // (K_{pi,mu,n})^{-1/2n}
};

// d-weighted norm: sqrt(sum_s d(s) x(s)^2).
double weighted_norm(const Vec& x, const StateDistribution& d);

Vec bellman_apply(const InducedChain& chain, double gamma, const Vec& v);

// Closed-form V^pi = (I - gamma P_pi)^{-1} r_pi.
Vec exact_values(const InducedChain& chain, double gamma);

Vec weighted_project(const WeightedProjector& proj, const Vec& x);

// Y c = D_mu^{-1} P_pi^T D_mu c.
RatioVector cop_apply(const InducedChain& chain, const StateDistribution& d_mu,
                      const RatioVector& c);

// Y c divided by its d_mu-weighted mass.
RatioVector normalized_cop_apply(const InducedChain& chain, const StateDistribution& d_mu,
                                 const RatioVector& c);

// Y_gh c = gamma_hat Y c + (1 - gamma_hat) e.
RatioVector discounted_cop_apply(const InducedChain& chain, const StateDistribution& d_mu,
                                 const RatioVector& c, double gamma_hat);

// gamma_hat = 1: D_mu^{-1} P_pi^T D_mu c + d_0; general case blends with e.
// c(s_0) is re-pinned to 1 after every application.
RatioVector episodic_cop_apply(const EpisodicMdp& emdp, const Policy& policy,
                               const Vec& d_mu_unnormalized, const RatioVector& c,
                               double gamma_hat);

struct IterationTrace {
    std::vector<long> steps;
    std::vector<Vec> iterates;
    std::vector<double> residuals;  // ||c^{k+1} - c^k||_{d_mu}
    Vec final;
    long total_steps = 0;
};

using RatioOperator = std::function<Vec(const Vec&)>;

// Applies `op` repeatedly, recording every `record_every` steps. Throws
// Diverged once any entry exceeds kDivergeLimit in magnitude.
IterationTrace iterate_operator(const RatioOperator& op, const RatioVector& c0,
                                const StateDistribution& d_mu, long steps, long record_every);

enum class ProjectedOutcome { ConvergedToZero, Diverged, Other };

struct ProjectedTrace {
    IterationTrace trace;
    ProjectedOutcome outcome = ProjectedOutcome::Other;
};

// Repeated Pi o Y without normalization; either collapses to zero or
// diverges unless d_pi/d_mu lies in span(Phi).
ProjectedTrace projected_cop_iterate(const InducedChain& chain, const StateDistribution& d_mu,
                                     const WeightedProjector& proj, const RatioVector& c0,
                                     long steps);

ConcentrationReport concentration(const InducedChain& chain, const StateDistribution& d_mu,
                                  const StateDistribution& d_pi, int n);

struct ContractionResult {
    double measured_max = 0.0;
    double bound = 0.0;
};

// Measures ||Y_gh^n c - c*||_{d_mu} / ||c - c*||_{d_mu} over random c and
// compares to gamma_hat^n sqrt(K_{pi,mu,n}). Throws BoundViolated when the
// measured ratio exceeds the bound beyond 1e-9.
ContractionResult contraction_check(const InducedChain& chain, const StateDistribution& d_mu,
                                    double gamma_hat, int n, int trials,
                                    std::mt19937_64& rng);

struct ApproximationErrorReport {
    double bound = 0.0;
    double actual = 0.0;
    double operator_norm = 0.0;  // ||Pi_d P_pi||_{d_pi}
};

// Error bound for the off-policy projected fixed point; throws
// PreconditionViolated when ||Pi_d P_pi||_{d_pi} >= 1/gamma.
ApproximationErrorReport approximation_error_bound(const InducedChain& chain, double gamma,
                                                   const WeightedProjector& proj,
                                                   const StateDistribution& d_pi,
                                                   const Vec& v_pi);

// CSV rows: step,residual,distance_to_fixed_point,max_entry. Pass an empty
// fixed point to leave the distance column blank.
void write_trace_csv(std::ostream& os, const IterationTrace& trace,
                     const StateDistribution& d_mu, const Vec& fixed_point);

}  // namespace copkit
