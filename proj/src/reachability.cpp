#include "qwalk/reachability.hpp"

#include <cmath>

namespace qwalk {

std::vector<VVector> v_vectors(const WalkerState& state) {
    int first = std::min(state.origin(), 1);
    int last = state.last_label();
    std::vector<VVector> vs;
    vs.reserve(static_cast<size_t>(std::max(0, last - first)));
    for (int s = first; s < last; ++s)
        vs.push_back(VVector{state.up_at(s), state.dn_at(s + 1)});
    return vs;
}

std::vector<cplx> reachability_residuals(const WalkerState& state, int n) {
    int first = std::min(state.origin(), 1);
    int last = state.last_label();
    int m = last - first;
    if (n < 1 || n > m)
        throw std::invalid_argument(
            "reachability_residuals: a state on " + std::to_string(m + 1) +
            " sites cannot certify " + std::to_string(n) + " steps");
    std::vector<cplx> res;
    res.reserve(static_cast<size_t>(n) + 1);
    res.push_back(state.dn_at(first));
    res.push_back(state.up_at(last));
    auto vs = v_vectors(state);
    for (int s = 1; s <= n - 1; ++s) {
        cplx r = 0.0;
        for (int i = 1; i <= s; ++i)
            r += vs[static_cast<size_t>(i - 1)].dot(vs[static_cast<size_t>(m - s + i - 1)]);
        res.push_back(r);
    }
    return res;
}

int max_reachable_steps(const WalkerState& state, double tol) {
    int first = std::min(state.origin(), 1);
    int m = state.last_label() - first;
    double scale = std::max(state.norm(), 1.0);
    int best = 0;
    for (int n = 1; n <= m; ++n) {
        bool ok = true;
        for (const auto& r : reachability_residuals(state, n))
            if (std::abs(r) > tol * scale) {
                ok = false;
                break;
            }
        if (!ok) break;
        best = n;
    }
    return best;
}

}  // namespace qwalk
