#pragma once

#include <cstdint>
#include <string>

#include "qwalk/optimizer.hpp"
#include "qwalk/rng.hpp"

namespace qwalk {

/// Haar-uniform target over `dim` sites: normalized complex standard-normal
/// vector; deterministic for a fixed seed.
TargetSuperposition haar_random_target(int dim, std::uint64_t seed);
TargetSuperposition haar_random_target(int dim, Rng& rng);

enum class HistogramMode { DSystem, Optimizer };

struct HistogramOptions {
    int nSteps = 2;
    int nSamples = 100;
    HistogramMode mode = HistogramMode::DSystem;
    int bins = 40;
    std::uint64_t seed = 0;
    OptimizerOptions optimizer{};
    DSolveOptions dsolve{};
};

struct HistogramRecord {
    int sample = 0;
    double minP = 0.0;  // d-system mode: lowest-probability branch
    double maxP = 0.0;  // d-system mode: highest-probability branch
    double p = 0.0;     // optimizer mode
    double fidelity = 0.0;
    int solutionCount = 0;
};

struct HistogramResult {
    std::vector<HistogramRecord> records;
    std::vector<int> binCounts;        // of maxP (d-system) or p (optimizer)
    double binLo = 0.0, binHi = 1.0;
    /// Retained fraction after dropping fidelity < 1 - 10^-t, per
    /// t in {0, 2, 5, 10, 12} (optimizer mode).
    std::vector<std::pair<int, double>> retainedFractions;

    std::string to_csv() const;
};

HistogramResult probability_histogram(const HistogramOptions& opts);

/// Worker count for embarrassingly parallel sampling: hardware concurrency
/// capped by the QWALK_THREADS environment variable (>= 1).
int thread_budget();

/// Which angle of which step to perturb; step < 0 iterates all coin angles.
struct ParamSelector {
    int step = -1;   // 0-based coin index
    int angle = -1;  // 0 = theta, 1 = xi, 2 = zeta
};

enum class SweepMode { Absolute, Relative };

struct SweepPoint {
    int step = 0;
    int angle = 0;
    double eps = 0.0;
    double fidelity = 0.0;
    double probability = 0.0;
};

/// Re-runs the walk with one coin angle perturbed by eps (added, or scaled
/// by 1+eps in relative mode) and reports fidelity/probability against the
/// solution's own target (recovered from its full state).
std::vector<SweepPoint> perturb_sweep(const EngineeringSolution& solution,
                                      const ParamSelector& sel,
                                      const std::vector<double>& epsGrid,
                                      SweepMode mode);

std::string sweep_to_csv(const std::vector<SweepPoint>& pts);

/// Worst fidelity over all coin angles perturbed one at a time by eps.
double worst_fidelity_at(const EngineeringSolution& solution, double eps,
                         SweepMode mode);

}  // namespace qwalk
