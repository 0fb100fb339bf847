#pragma once

#include "qwalk/engineering.hpp"

namespace qwalk {

// --- Jones-calculus conventions (single source of truth) -----------------
//
// Linear basis (H, V). A wave plate with fast axis at angle t and
// retardance delta acts as R(t) diag(e^{-i delta/2}, e^{+i delta/2}) R(-t)
// (symmetric-phase convention); QWP has delta = pi/2, HWP has delta = pi.
// Circular basis |L> = (|H> - i|V>)/sqrt(2), |R> = (|H> + i|V>)/sqrt(2);
// matrices below are expressed in the ordered basis (|L>, |R>).
// Coin encoding: |up> = |L>, |dn> = |R> at even step parity (the q-plate
// flips handedness every step, so the correspondence alternates).
// Walker site i after t steps sits at OAM m = t - 2(i - 1), starting from
// m = 0 for site 1 at t = 0. Keeping that map linear requires the q-plate
// charge sign to alternate with the step parity (+1/2 odd, -1/2 even);
// compile_experiment emits the alternation.

enum class Pol { L, R };

enum class PlateKind { QWP, HWP };

struct JonesElement {
    PlateKind kind = PlateKind::QWP;
    double angle = 0.0;  // fast-axis orientation, radians
};

/// Jones matrix of a single plate in the circular basis.
Mat2 jones_matrix(PlateKind kind, double angle);

/// Product QWP(qwp2) * HWP(hwp) * QWP(qwp1) in the circular basis.
Mat2 waveplates_to_jones(double qwp1, double hwp, double qwp2);

struct WaveplateDecomposition {
    double qwp1 = 0.0, hwp = 0.0, qwp2 = 0.0;  // radians, in [0, pi)
    double globalPhase = 0.0;
    double residual = 0.0;  // max elementwise |J - e^{i phase} C|
};

/// Deterministic grid + Gauss-Newton inversion of the QWP-HWP-QWP triple
/// realizing a coin up to a global phase. Throws numerical_error if the
/// residual budget (1e-8) cannot be met.
WaveplateDecomposition coin_to_waveplates(const CoinOperator& coin);

/// q-plate action |m,R> -> |m-2q,L>, |m,L> -> |m+2q,R>; 2q must be integral.
std::pair<int, Pol> qplate_action(int m, Pol pol, double q);

struct ExperimentStep {
    double qwp1Angle = 0.0, hwpAngle = 0.0, qwp2Angle = 0.0;
    double qplateCharge = 0.5;
};

struct ExperimentPlan {
    std::vector<ExperimentStep> steps;
    double projectionHwpAngle = 0.0;
    int inputSpan = 1;
    std::array<cplx, 2> initialCoin{cplx(1, 0), cplx(0, 0)};
};

/// Lowers a solution to the photonic OAM/SAM architecture: one
/// QWP-HWP-QWP + q-plate unit per coin and an HWP+PBS projection stage.
/// Requires a balanced-modulus projection bra (realizable with a single
/// HWP before the PBS).
ExperimentPlan compile_experiment(const EngineeringSolution& solution);

struct PlanSimulation {
    WalkerState walkerState;      // decoded walker+coin state before projection
    std::vector<cplx> siteAmps;   // after the projection stage (unnormalized)
    double probability = 0.0;
};

/// Literal optical simulation of the plan: Jones matrices on polarization,
/// q-plate permutations on OAM, decoded back to walker labels.
PlanSimulation simulate_plan(const ExperimentPlan& plan);

}  // namespace qwalk
