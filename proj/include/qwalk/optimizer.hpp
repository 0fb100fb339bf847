#pragma once

#include <cstdint>

#include "qwalk/engineering.hpp"

namespace qwalk {

struct OptimizerOptions {
    int maxIterations = 0;  // 0 = 2000 * nSteps
    int restarts = 8;
    bool optimizeProjection = false;
    bool optimizeInitialCoin = false;
    std::uint64_t seed = 0;
    double probWeight = 0.0;  // objective = F + probWeight * p
};

struct OptimizeResult {
    EngineeringSolution solution;
    std::vector<double> coinParams;  // flat (theta, xi, zeta) per step
    int iterations = 0;
    bool converged = false;          // best restart hit the simplex tolerance
    std::vector<double> bestTrace;   // best-so-far fidelity per iteration
};

/// Walk + projection evaluation: returns (fidelity, probability) of the
/// normalized projected state against the target. Zero projection
/// probability gives fidelity 0 with no division.
std::pair<double, double> evaluate(const std::vector<double>& coinParams,
                                   const std::array<cplx, 2>& initialCoin,
                                   const std::array<cplx, 2>& projectionBra,
                                   const TargetSuperposition& target);

/// Multi-restart simplex descent with finite-difference gradient polish over
/// the coin angles (plus optional projection / initial-coin angles).
/// Deterministic for a fixed seed.
OptimizeResult optimize_coins(const TargetSuperposition& target, int nSteps,
                              const OptimizerOptions& options = {});

}  // namespace qwalk
