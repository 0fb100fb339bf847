#include <doctest.h>

#include <cmath>

#include "qwalk/dynamics.hpp"
#include "qwalk/optics.hpp"
#include "qwalk/rng.hpp"

using namespace qwalk;

namespace {

CoinOperator random_coin(Rng& rng) {
    return coin_from_params(rng.uniform(0.0, M_PI / 2), rng.uniform(-M_PI, M_PI),
                            rng.uniform(-M_PI, M_PI));
}

double mat_dist_phase(const Mat2& a, const Mat2& b) {
    cplx tr = std::conj(b.a) * a.a + std::conj(b.b) * a.b +
              std::conj(b.c) * a.c + std::conj(b.d) * a.d;
    cplx ph = std::abs(tr) > 0 ? tr / std::abs(tr) : cplx(1, 0);
    Mat2 pb = ph * b;
    double r = 0.0;
    r = std::max(r, std::abs(a.a - pb.a));
    r = std::max(r, std::abs(a.b - pb.b));
    r = std::max(r, std::abs(a.c - pb.c));
    r = std::max(r, std::abs(a.d - pb.d));
    return r;
}

}  // namespace

TEST_CASE("plate Jones matrices are unitary with the right determinant") {
    for (double t = -1.5; t <= 3.2; t += 0.17) {
        Mat2 q = jones_matrix(PlateKind::QWP, t);
        Mat2 h = jones_matrix(PlateKind::HWP, t);
        CHECK(q.unitarity_residual() < 1e-12);
        CHECK(h.unitarity_residual() < 1e-12);
        // Symmetric-phase convention: det(QWP) = 1, det(HWP) = 1 in both
        // bases since diag(e^{-i d/2}, e^{i d/2}) has unit determinant.
        CHECK(std::abs(q.det() - 1.0) < 1e-12);
        CHECK(std::abs(h.det() - 1.0) < 1e-12);
    }

    // HWP at angle t in the circular basis is an antidiagonal phase swap.
    Mat2 h0 = jones_matrix(PlateKind::HWP, 0.0);
    CHECK(std::abs(h0.a) < 1e-12);
    CHECK(std::abs(h0.d) < 1e-12);
    CHECK(std::abs(std::abs(h0.b) - 1.0) < 1e-12);
    CHECK(std::abs(std::abs(h0.c) - 1.0) < 1e-12);
}

TEST_CASE("waveplate triple composition matches the factors") {
    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        double a = rng.uniform(0.0, M_PI), b = rng.uniform(0.0, M_PI),
               c = rng.uniform(0.0, M_PI);
        Mat2 lhs = waveplates_to_jones(a, b, c);
        Mat2 rhs = jones_matrix(PlateKind::QWP, c) *
                   jones_matrix(PlateKind::HWP, b) *
                   jones_matrix(PlateKind::QWP, a);
        CHECK(mat_dist_phase(lhs, rhs) < 1e-12);
        CHECK(lhs.unitarity_residual() < 1e-12);
    }
}

TEST_CASE("coin decomposition round trip") {
    Rng rng(72);
    for (int trial = 0; trial < 60; ++trial) {
        CoinOperator c = random_coin(rng);
        WaveplateDecomposition w = coin_to_waveplates(c);
        CHECK(w.residual < 1e-8);
        Mat2 j = waveplates_to_jones(w.qwp1, w.hwp, w.qwp2);
        CHECK(mat_dist_phase(j, c.matrix()) < 1e-7);
        CHECK(w.qwp1 >= 0.0);
        CHECK(w.qwp1 < M_PI);
        CHECK(w.hwp >= 0.0);
        CHECK(w.hwp < M_PI);
        CHECK(w.qwp2 >= 0.0);
        CHECK(w.qwp2 < M_PI);
    }

    // Identity coin decomposes too.
    WaveplateDecomposition wi = coin_to_waveplates(CoinOperator::identity());
    CHECK(wi.residual < 1e-8);
}

TEST_CASE("q-plate action on OAM and handedness") {
    // |m,R> -> |m-2q,L>, |m,L> -> |m+2q,R>.
    CHECK(qplate_action(0, Pol::R, 0.5) == std::pair<int, Pol>{-1, Pol::L});
    CHECK(qplate_action(0, Pol::L, 0.5) == std::pair<int, Pol>{1, Pol::R});
    CHECK(qplate_action(3, Pol::R, 1.0) == std::pair<int, Pol>{1, Pol::L});
    CHECK(qplate_action(-2, Pol::L, 1.5) == std::pair<int, Pol>{1, Pol::R});
    CHECK_THROWS_AS(qplate_action(0, Pol::L, 0.3), std::invalid_argument);

    // The q-plate alone squares to the identity on (m, pol)...
    for (int m : {-3, 0, 2}) {
        for (Pol p : {Pol::L, Pol::R}) {
            auto once = qplate_action(m, p, 0.5);
            auto twice = qplate_action(once.first, once.second, 0.5);
            CHECK(twice == std::pair<int, Pol>{m, p});
        }
    }
    // ...while q-plate composed with a handedness flip walks the OAM ladder
    // by a uniform 2q per double application.
    for (int m : {-3, 0, 2}) {
        auto step = [](int mm, Pol pp) {
            auto r = qplate_action(mm, pp, 0.5);
            return std::pair<int, Pol>{r.first, r.second == Pol::L ? Pol::R : Pol::L};
        };
        auto a = step(m, Pol::L);
        auto b = step(a.first, a.second);
        CHECK(b.first - m == 2);
        CHECK(b.second == Pol::L);
        auto c = step(m, Pol::R);
        auto d2 = step(c.first, c.second);
        CHECK(d2.first - m == -2);
    }
}

TEST_CASE("compiled plan reproduces the engineered walk") {
    TargetSuperposition t({1, 1, 1, 1});
    auto sols = engineer_target(t, EngineerOptions{.seed = 11});
    REQUIRE(!sols.empty());
    for (const auto& sol : sols) {
        ExperimentPlan plan = compile_experiment(sol);
        REQUIRE(plan.steps.size() == sol.coins.size());
        PlanSimulation sim = simulate_plan(plan);
        CHECK(sim.probability == doctest::Approx(sol.probability).epsilon(1e-8));
        TargetSuperposition got(sim.siteAmps);
        CHECK(t.fidelity(got.amps()) > 1 - 1e-8);
    }
}

TEST_CASE("random solutions survive the optical lowering") {
    Rng rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        int sites = 3 + (trial % 4);
        std::vector<cplx> a(static_cast<size_t>(sites));
        for (auto& x : a) x = rng.cnormal();
        TargetSuperposition t(std::move(a));
        auto sols = engineer_target(
            t, EngineerOptions{.seed = 500 + static_cast<std::uint64_t>(trial),
                               .maxSolutions = 1});
        REQUIRE(!sols.empty());
        ExperimentPlan plan = compile_experiment(sols[0]);
        PlanSimulation sim = simulate_plan(plan);
        TargetSuperposition got(sim.siteAmps);
        CHECK(t.fidelity(got.amps()) > 1 - 1e-8);
        CHECK(sim.probability == doctest::Approx(sols[0].probability).epsilon(1e-8));
    }
}

TEST_CASE("unbalanced projection bras are rejected") {
    TargetSuperposition t({2, 1, 1});
    auto sols = engineer_target(t, EngineerOptions{.seed = 1});
    REQUIRE(!sols.empty());
    EngineeringSolution sol = sols[0];
    sol.projection = {cplx(0.8, 0), cplx(0.6, 0)};
    CHECK_THROWS_AS(compile_experiment(sol), std::invalid_argument);
}
