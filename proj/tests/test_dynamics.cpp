#include <doctest.h>

#include <cmath>
#include <vector>

#include "qwalk/dynamics.hpp"
#include "qwalk/rng.hpp"

using namespace qwalk;

namespace {

WalkerState random_state(Rng& rng, int sites, int origin = 1) {
    std::vector<SiteAmp> amps(static_cast<size_t>(sites));
    for (auto& a : amps) {
        a.up = rng.cnormal();
        a.dn = rng.cnormal();
    }
    WalkerState s(origin, std::move(amps));
    s.normalize();
    return s;
}

CoinOperator random_coin(Rng& rng) {
    return coin_from_params(rng.uniform(0.0, M_PI / 2), rng.uniform(-M_PI, M_PI),
                            rng.uniform(-M_PI, M_PI));
}

double state_dist(const WalkerState& a, const WalkerState& b) {
    int lo = std::min(a.origin(), b.origin());
    int hi = std::max(a.last_label(), b.last_label());
    double r = 0.0;
    for (int l = lo; l <= hi; ++l) {
        r = std::max(r, std::abs(a.up_at(l) - b.up_at(l)));
        r = std::max(r, std::abs(a.dn_at(l) - b.dn_at(l)));
    }
    return r;
}

// Independent oracle: dense matrix S (I (x) C) on a truncated lattice of
// `sites` input sites, basis ordering (site, coin) with coin fastest.
std::vector<cplx> dense_step_oracle(const std::vector<cplx>& psi,
                                    const CoinOperator& coin, int sites) {
    const Mat2& c = coin.matrix();
    int dim = 2 * (sites + 1);
    std::vector<cplx> coined(static_cast<size_t>(dim), cplx{});
    for (int i = 0; i < sites; ++i) {
        coined[static_cast<size_t>(2 * i)] =
            c.a * psi[static_cast<size_t>(2 * i)] + c.b * psi[static_cast<size_t>(2 * i + 1)];
        coined[static_cast<size_t>(2 * i + 1)] =
            c.c * psi[static_cast<size_t>(2 * i)] + c.d * psi[static_cast<size_t>(2 * i + 1)];
    }
    // Shift: |i,up> stays, |i,dn> -> |i+1,dn>.
    std::vector<cplx> out(static_cast<size_t>(dim), cplx{});
    for (int i = 0; i < sites; ++i) {
        out[static_cast<size_t>(2 * i)] += coined[static_cast<size_t>(2 * i)];
        out[static_cast<size_t>(2 * (i + 1) + 1)] += coined[static_cast<size_t>(2 * i + 1)];
    }
    return out;
}

}  // namespace

TEST_CASE("single step hand examples") {
    CoinOperator id = CoinOperator::identity();
    WalkerState s1 = apply_step(WalkerState::localized(1, 1, 0), id);
    CHECK(std::abs(s1.up_at(1) - 1.0) < 1e-15);
    CHECK(s1.squared_norm() == doctest::Approx(1.0));

    WalkerState s2 = apply_step(WalkerState::localized(1, 0, 1), id);
    CHECK(std::abs(s2.dn_at(2) - 1.0) < 1e-15);

    WalkerState s3 =
        apply_step(WalkerState::localized(1, 1, 0), coin_from_params(M_PI / 4, 0, 0));
    double r = 1 / std::sqrt(2.0);
    CHECK(std::abs(s3.up_at(1) - r) < 1e-15);
    CHECK(std::abs(s3.dn_at(2) + r) < 1e-15);
}

TEST_CASE("dense matrix oracle agreement") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        int sites = 1 + static_cast<int>(rng.uniform() * 6);
        WalkerState s = random_state(rng, sites);
        CoinOperator c = random_coin(rng);
        std::vector<cplx> psi(static_cast<size_t>(2 * sites));
        for (int i = 0; i < sites; ++i) {
            psi[static_cast<size_t>(2 * i)] = s.up(i);
            psi[static_cast<size_t>(2 * i + 1)] = s.dn(i);
        }
        auto expect = dense_step_oracle(psi, c, sites);
        WalkerState out = apply_step(s, c);
        for (int i = 0; i <= sites; ++i) {
            CHECK(std::abs(out.up_at(s.origin() + i) -
                           expect[static_cast<size_t>(2 * i)]) < 1e-10);
            CHECK(std::abs(out.dn_at(s.origin() + i) -
                           expect[static_cast<size_t>(2 * i + 1)]) < 1e-10);
        }
    }
}

TEST_CASE("norm conservation and linearity") {
    Rng rng(22);
    for (int trial = 0; trial < 1000; ++trial) {
        WalkerState s = random_state(rng, 1 + (trial % 5));
        CoinOperator c = random_coin(rng);
        CHECK(apply_step(s, c).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Linearity on raw (unnormalized) tables.
    for (int trial = 0; trial < 50; ++trial) {
        int sites = 2 + (trial % 4);
        WalkerState s1 = random_state(rng, sites);
        WalkerState s2 = random_state(rng, sites);
        cplx a = rng.cnormal(), b = rng.cnormal();
        CoinOperator c = random_coin(rng);
        std::vector<SiteAmp> mix(static_cast<size_t>(sites));
        for (int i = 0; i < sites; ++i)
            mix[static_cast<size_t>(i)] =
                SiteAmp{a * s1.up(i) + b * s2.up(i), a * s1.dn(i) + b * s2.dn(i)};
        WalkerState sm = apply_step(WalkerState(1, std::move(mix)), c);
        WalkerState o1 = apply_step(s1, c);
        WalkerState o2 = apply_step(s2, c);
        for (int l = 1; l <= sites + 1; ++l) {
            CHECK(std::abs(sm.up_at(l) - (a * o1.up_at(l) + b * o2.up_at(l))) < 1e-12);
            CHECK(std::abs(sm.dn_at(l) - (a * o1.dn_at(l) + b * o2.dn_at(l))) < 1e-12);
        }
    }
}

TEST_CASE("inverse step examples and round trip") {
    CoinOperator id = CoinOperator::identity();
    WalkerState s = apply_inverse_step(WalkerState::localized(2, 0, 1), id);
    CHECK(std::abs(s.dn_at(1) - 1.0) < 1e-15);

    double r = 1 / std::sqrt(2.0);
    WalkerState plusminus(1, {SiteAmp{r, 0}, SiteAmp{0, -r}});
    WalkerState back = apply_inverse_step(plusminus, coin_from_params(M_PI / 4, 0, 0));
    CHECK(std::abs(back.up_at(1) - 1.0) < 1e-12);
    CHECK(std::abs(back.dn_at(1)) < 1e-12);

    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        WalkerState st = random_state(rng, 1 + (trial % 5));
        CoinOperator c = random_coin(rng);
        WalkerState fwd = apply_step(st, c);
        WalkerState inv = apply_inverse_step(fwd, c, 1e-9);
        CHECK(state_dist(inv, st) < 1e-10);
    }
}

TEST_CASE("inverse step rejects states outside the shift image") {
    WalkerState bad(1, {SiteAmp{0, 1}, SiteAmp{0, 0.0}});  // u_{1,dn} != 0
    bad.normalize();
    CHECK_THROWS_AS(apply_inverse_step(bad, CoinOperator::identity()),
                    not_reachable_error);
}

TEST_CASE("run_walk basics") {
    WalkerState s = run_walk({cplx(1, 0), cplx(0, 0)}, {CoinOperator::identity()});
    CHECK(std::abs(s.up_at(1) - 1.0) < 1e-15);

    CoinOperator h = coin_from_params(M_PI / 4, 0, 0);
    WalkerState s2 = run_walk({cplx(1, 0), cplx(0, 0)}, {h, h});
    CHECK(std::abs(s2.up_at(1) - 0.5) < 1e-14);
    CHECK(std::abs(s2.up_at(2) + 0.5) < 1e-14);
    CHECK(std::abs(s2.dn_at(2) + 0.5) < 1e-14);
    CHECK(std::abs(s2.dn_at(3) + 0.5) < 1e-14);

    Rng rng(24);
    std::vector<CoinOperator> coins;
    for (int i = 0; i < 5; ++i) coins.push_back(random_coin(rng));
    WalkerState s5 = run_walk({cplx(0.6, 0), cplx(0, 0.8)}, coins);
    CHECK(s5.last_label() <= 6);
    CHECK(std::abs(s5.dn_at(1)) < 1e-12);
    CHECK(std::abs(s5.up_at(6)) < 1e-12);

    // Empty coin list returns the initial localized state.
    WalkerState s0 = run_walk({cplx(0, 1), cplx(0, 0)}, {});
    CHECK(std::abs(s0.up_at(1) - cplx(0, 1)) < 1e-15);
}

TEST_CASE("coin projection") {
    WalkerState s = WalkerState::localized(1, 1, 0);
    ProjectionResult r1 = project_coin(s, {cplx(1, 0), cplx(0, 0)});
    CHECK(r1.probability == doctest::Approx(1.0));
    ProjectionResult r0 = project_coin(s, {cplx(0, 0), cplx(1, 0)});
    CHECK(r0.probability == doctest::Approx(0.0));
    CHECK_THROWS_AS(project_coin(s, {cplx(0, 0), cplx(0, 0)}),
                    std::invalid_argument);

    // Probabilities over an orthonormal bra pair sum to one.
    Rng rng(25);
    for (int trial = 0; trial < 100; ++trial) {
        WalkerState st = random_state(rng, 2 + (trial % 4));
        cplx a = rng.cnormal(), b = rng.cnormal();
        double n = std::sqrt(std::norm(a) + std::norm(b));
        a /= n;
        b /= n;
        double p1 = project_coin(st, {a, b}).probability;
        double p2 = project_coin(st, {-std::conj(b), std::conj(a)}).probability;
        CHECK(p1 + p2 == doctest::Approx(1.0).epsilon(1e-12));
    }
}
