#include "qwalk/dynamics.hpp"

#include <cmath>

namespace qwalk {

WalkerState apply_step(const WalkerState& state, const CoinOperator& coin) {
    int m = state.site_count();
    std::vector<SiteAmp> out(static_cast<size_t>(m) + 1);
    const Mat2& c = coin.matrix();
    for (int i = 0; i < m; ++i) {
        auto v = c.apply(state.up(i), state.dn(i));
        out[static_cast<size_t>(i)].up += v[0];
        out[static_cast<size_t>(i) + 1].dn += v[1];
    }
    WalkerState res(state.origin(), std::move(out));
    res.trim();
    return res;
}

WalkerState apply_inverse_step(const WalkerState& state, const CoinOperator& coin,
                               double tol) {
    // The claimed span runs from label 1 (or the stored origin, if smaller)
    // to the last stored site; the preimage occupies one site fewer.
    int first = std::min(state.origin(), 1);
    int last = state.last_label();
    double scale = std::max(state.norm(), 1.0);
    double lo = std::abs(state.dn_at(first));
    double hi = std::abs(state.up_at(last));
    if (lo > tol * scale || hi > tol * scale)
        throw not_reachable_error(
            "apply_inverse_step: extremal amplitudes do not vanish "
            "(|u_first,dn| = " + std::to_string(lo) +
                ", |u_last,up| = " + std::to_string(hi) + ")",
            std::max(lo, hi));
    if (last - first < 1)
        throw not_reachable_error(
            "apply_inverse_step: single-site span is not a step image", lo);
    Mat2 ci = coin.matrix().adjoint();
    std::vector<SiteAmp> out(static_cast<size_t>(last - first));
    for (int s = first; s < last; ++s) {
        auto v = ci.apply(state.up_at(s), state.dn_at(s + 1));
        out[static_cast<size_t>(s - first)] = SiteAmp{v[0], v[1]};
    }
    WalkerState res(first, std::move(out));
    res.trim();
    return res;
}

WalkerState run_walk(const std::array<cplx, 2>& initialCoin,
                     const std::vector<CoinOperator>& coins) {
    WalkerState s = WalkerState::localized(1, initialCoin[0], initialCoin[1]);
    for (const auto& c : coins) s = apply_step(s, c);
    return s;
}

ProjectionResult project_coin(const WalkerState& state,
                              const std::array<cplx, 2>& bra) {
    double bn = std::sqrt(std::norm(bra[0]) + std::norm(bra[1]));
    if (bn < TOL_ZERO)
        throw std::invalid_argument("project_coin: zero bra");
    ProjectionResult r;
    r.origin = state.origin();
    r.siteAmps.reserve(static_cast<size_t>(state.site_count()));
    for (int i = 0; i < state.site_count(); ++i) {
        cplx a = std::conj(bra[0]) * state.up(i) + std::conj(bra[1]) * state.dn(i);
        r.siteAmps.push_back(a);
        r.probability += std::norm(a);
    }
    return r;
}

}  // namespace qwalk
