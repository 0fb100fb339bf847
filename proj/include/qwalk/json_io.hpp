#pragma once

#include <nlohmann/json_fwd.hpp>

#include "qwalk/optics.hpp"

namespace qwalk {

using json = nlohmann::json;

// JSON schemas:
//   state    {origin: int, amps: [[re_up, im_up, re_dn, im_dn], ...]}
//   coin     {theta, xi, zeta}
//   target   {amps: [[re, im], ...]}
//   solution {d, coins, initialCoin, projection, probability, fidelity,
//             fullState}
//   plan     {steps: [{qwp1Angle, hwpAngle, qwp2Angle, qplateCharge}, ...],
//             projectionStage: {hwpAngle}, inputSpan, initialCoin}
// On serialization the global phase of a state is canonicalized: the first
// nonzero amplitude is made real-positive.

json state_to_json(const WalkerState& s);
WalkerState state_from_json(const json& j);

json coin_to_json(const CoinOperator& c);
CoinOperator coin_from_json(const json& j);

json target_to_json(const TargetSuperposition& t);
TargetSuperposition target_from_json(const json& j);

json solution_to_json(const EngineeringSolution& s);
EngineeringSolution solution_from_json(const json& j);

json plan_to_json(const ExperimentPlan& p);
ExperimentPlan plan_from_json(const json& j);

json complex_pair_to_json(const std::array<cplx, 2>& v);
std::array<cplx, 2> complex_pair_from_json(const json& j);

/// Parses "re+imi" / "re-imi" / "re" (e.g. "0.5-0.5i", "1", "i").
cplx parse_complex(const std::string& s);

}  // namespace qwalk
