#pragma once

// Central numeric tolerances. Probability structure is validated at
// construction time; solver residuals are checked after every solve.
namespace copkit {

inline constexpr double kProbTol = 1e-12;      // row sums, entry nonnegativity
inline constexpr double kDistTol = 1e-10;      // distribution sums, solver residuals
inline constexpr double kNormTol = 1e-8;       // d_mu-weighted normalization checks
inline constexpr double kRankTol = 1e-10;      // smallest singular value for full rank
inline constexpr double kCondLimit = 1e12;     // condition number limit for projections
inline constexpr double kDivergeLimit = 1e12;  // iteration drivers report divergence past this
inline constexpr double kResidualTol = 1e-9;   // default convergence threshold for iterations
inline constexpr double kSpectralMargin = 1e-9;
inline constexpr int kSpectralIters = 200;     // power iterations for episodic radius check
inline constexpr int kDirectSolveMaxStates = 2000;

}  // namespace copkit
