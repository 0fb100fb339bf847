#pragma once

#include "qwalk/dynamics.hpp"
#include "qwalk/reachability.hpp"

namespace qwalk {

/// Recovers the last coin of a walk producing `state` (spanning n+1 sites),
/// up to the column-phase alpha. Requires v_1^dag v_n = 0 within tol.
CoinOperator solve_last_coin(const WalkerState& state, double alpha,
                             double tol = REACH_TOL);

/// Solves C_1 mapping initialCoin to the amplitude pair (u_{1,up}, u_{2,dn})
/// of the 1-step state. The canonical choice maps the orthogonal complement
/// of initialCoin to the complement of the image with no extra phase.
CoinOperator solve_first_coin(const WalkerState& stateAfter1,
                              const std::array<cplx, 2>& initialCoin);

/// Full constructive inversion: coins C_1..C_n regenerating `state` from
/// |1> (x) initialCoin. alphas has n-1 entries, one per back-step (alphas[j]
/// is used for C_{j+2}); empty means all zeros.
std::vector<CoinOperator> backsolve(const WalkerState& state,
                                    const std::array<cplx, 2>& initialCoin,
                                    const std::vector<double>& alphas = {},
                                    double tol = REACH_TOL);

/// Back-solves coins and picks the initial coin as the normalized pre-image
/// of the first layer, so C_1 comes out canonical.
struct BacksolveResult {
    std::vector<CoinOperator> coins;
    std::array<cplx, 2> initialCoin;
};
BacksolveResult backsolve_auto(const WalkerState& state,
                               const std::vector<double>& alphas = {},
                               double tol = REACH_TOL);

}  // namespace qwalk
