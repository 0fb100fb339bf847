#pragma once

#include "qwalk/types.hpp"

namespace qwalk {

struct ProjectionResult {
    int origin = 1;                  // 1-based label of first entry
    std::vector<cplx> siteAmps;      // unnormalized projected amplitudes
    double probability = 0.0;        // sum |siteAmps|^2

    /// siteAmps / sqrt(probability); empty when probability is zero.
    std::vector<cplx> normalizedTarget() const {
        if (probability <= 0.0) return {};
        std::vector<cplx> t = siteAmps;
        double s = std::sqrt(probability);
        for (auto& a : t) a /= s;
        return t;
    }
};

/// One step W_C = S (I (x) C) under the stand-still / move-right shift.
/// Operates on the raw amplitude table; never renormalizes.
WalkerState apply_step(const WalkerState& state, const CoinOperator& coin);

/// Inverse step. Requires the extremal amplitudes u_{first,dn} and
/// u_{last,up} to vanish within tol (the state must lie in the image of the
/// shift); throws not_reachable_error otherwise.
WalkerState apply_inverse_step(const WalkerState& state, const CoinOperator& coin,
                               double tol = TOL_ZERO);

/// n-step walk from |1> (x) initialCoin.
WalkerState run_walk(const std::array<cplx, 2>& initialCoin,
                     const std::vector<CoinOperator>& coins);

/// Projects the coin on bra (a, b): siteAmps_i = a* u_{i,up} + b* u_{i,dn}.
ProjectionResult project_coin(const WalkerState& state,
                              const std::array<cplx, 2>& bra);

}  // namespace qwalk
