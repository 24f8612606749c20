#pragma once

#include <stdexcept>
#include <string>

namespace copkit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct NonErgodic : Error {
    using Error::Error;
};
struct SolverFailure : Error {
    using Error::Error;
};
struct InvalidDiscount : Error {
    using Error::Error;
};
struct NonEpisodic : Error {
    using Error::Error;
};
struct IllConditioned : Error {
    using Error::Error;
};
struct DegenerateMass : Error {
    using Error::Error;
};
struct InsufficientSamples : Error {
    using Error::Error;
};
struct Infeasible : Error {
    using Error::Error;
};
struct InvalidSlot : Error {
    using Error::Error;
};
struct EmptyBuffer : Error {
    using Error::Error;
};
struct ZeroMass : Error {
    using Error::Error;
};
struct BufferNotWarm : Error {
    using Error::Error;
};
struct InvalidSpec : Error {
    using Error::Error;
};
struct BoundViolated : Error {
    using Error::Error;
};

// Identifies the state whose denominator vanished.
struct ZeroDenominator : Error {
    int state;
    explicit ZeroDenominator(int s)
        : Error("zero denominator at state " + std::to_string(s)), state(s) {}
};

// Carries the step at which an iterate left the admissible range.
struct Diverged : Error {
    long step;
    explicit Diverged(long at)
        : Error("iteration diverged at step " + std::to_string(at)), step(at) {}
};

// Approximation-bound precondition failure; carries the measured operator norm.
struct PreconditionViolated : Error {
    double norm;
    explicit PreconditionViolated(double measured)
        : Error("operator norm precondition violated, |Pi P|_dpi = " +
                std::to_string(measured)),
          norm(measured) {}
};

}  // namespace copkit
