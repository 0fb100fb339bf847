#pragma once

#include "qwalk/types.hpp"

namespace qwalk {

/// v_i = (u_{i,up}, u_{i+1,dn}) for i over the state's span; empty for a
/// single-site state.
std::vector<VVector> v_vectors(const WalkerState& state);

/// Residuals certifying that `state` (spanning m+1 sites) is the output of
/// at least n walk steps:
///   [ u_{first,dn}, u_{last,up}, r_1, ..., r_{n-1} ]
/// with r_s = sum_{i=1}^{s} v_i^dag v_{m-s+i}. All entries vanish iff the
/// state is reachable in >= n steps.
std::vector<cplx> reachability_residuals(const WalkerState& state, int n);

/// Largest n whose residuals all stay below tol (scaled by the state norm);
/// 0 if none.
int max_reachable_steps(const WalkerState& state, double tol = REACH_TOL);

}  // namespace qwalk
