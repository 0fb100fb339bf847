#pragma once

#include <cstdint>
#include <optional>

#include "qwalk/backsolver.hpp"

namespace qwalk {

// Largest step count handled by the polynomial-system solver; larger targets
// go through the fidelity optimizer instead.
inline constexpr int N_MAX_POLY = 6;

struct DSolution {
    std::vector<cplx> d;       // d_2..d_n
    double residualMax = 0.0;  // max |constraint| over the quadratic system
    double probability = 0.0;  // projection probability on |+>
};

struct DSolveOptions {
    std::uint64_t seed = 0;
    int restartsPerStep = 200;   // restarts = restartsPerStep * n
    int maxIterations = 120;
    /// Acceptance threshold on the projectivized residual (the constraints
    /// rescaled so every root is O(1)); genuine roots polish to ~1e-15 while
    /// the numerically unresolvable pseudo-roots near infinity stall around
    /// 1e-13, so the default sits between the two.
    double residualTol = 1e-13;
    double dedupRadius = 1e-6;   // in projective (g, rho) coordinates
};

/// Interior-splitting state of the target with parameters d (Eq.-12 form):
/// site 1 -> (u_1, 0), site i -> (u_i - d_i, d_i), site n+1 -> (0, u_{n+1});
/// normalized. Projecting the coin on |+> recovers the target for every d.
WalkerState assemble_full_state(const TargetSuperposition& target,
                                const std::vector<cplx>& d);

/// The n-1 complex quadratic constraints the d-parameters must satisfy for
/// the assembled state to be reachable in n steps.
std::vector<cplx> d_residuals(const TargetSuperposition& target,
                              const std::vector<cplx>& d);

/// Projection probability on |+> of the assembled state.
double d_probability(const TargetSuperposition& target,
                     const std::vector<cplx>& d);

/// Analytic 2-step solver. Generic targets (|u1| != |u3|) give the single
/// closed-form solution; the degenerate |u1| = |u3| case gives a
/// one-parameter family sampled on a fixed d_I grid when consistent, or an
/// empty list with a diagnostic.
struct D2Result {
    std::vector<DSolution> solutions;
    std::string diagnostic;  // set when no solution exists
};
D2Result solve_d2(const TargetSuperposition& target);

/// Family member of the degenerate 2-step branch at offset dI from the
/// minimum-norm (maximum-probability) solution.
std::optional<cplx> solve_d2_family_member(const TargetSuperposition& target,
                                           double dI);

/// Closed-form projection probability for real 3-amplitude targets
/// (u3 = sqrt(1 - u1^2 - u2^2) >= 0).
double projection_probability_2step_closed_form(double u1, double u2);

/// Multi-start damped-Newton solver for the full quadratic system,
/// 2 <= n <= N_MAX_POLY. Solutions are deduplicated and sorted by
/// descending probability then lexicographic d.
std::vector<DSolution> solve_d_system(const TargetSuperposition& target,
                                      const DSolveOptions& opts = {});

struct EngineerOptions {
    std::uint64_t seed = 0;
    int maxSolutions = 0;  // 0 = all
    DSolveOptions dsolve{};
};

/// Full pipeline: d-solutions -> assembled states -> back-solved coins and
/// initial coin, with probability and fidelity recomputed by forward
/// simulation.
std::vector<EngineeringSolution> engineer_target(const TargetSuperposition& target,
                                                 const EngineerOptions& opts = {});

/// Wraps one d-vector into a complete, forward-verified solution.
EngineeringSolution solution_from_d(const TargetSuperposition& target,
                                    const std::vector<cplx>& d);

}  // namespace qwalk
