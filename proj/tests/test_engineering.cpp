#include <doctest.h>

#include <cmath>

#include "qwalk/dynamics.hpp"
#include "qwalk/engineering.hpp"
#include "qwalk/reachability.hpp"
#include "qwalk/rng.hpp"

using namespace qwalk;

namespace {

TargetSuperposition haar_target(Rng& rng, int sites) {
    std::vector<cplx> a(static_cast<size_t>(sites));
    for (auto& x : a) x = rng.cnormal();
    return TargetSuperposition(std::move(a));
}

double residual_max(const std::vector<cplx>& r) {
    double m = 0.0;
    for (const auto& c : r) m = std::max(m, std::abs(c));
    return m;
}

bool contains_d(const std::vector<DSolution>& sols, const std::vector<cplx>& d,
                double tol) {
    for (const auto& s : sols) {
        double dist = 0.0;
        for (size_t i = 0; i < d.size(); ++i)
            dist = std::max(dist, std::abs(s.d[i] - d[i]));
        if (dist < tol) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("assemble_full_state edge and displayed cases") {
    // n=1: no interior sites, the state is the target itself.
    TargetSuperposition t2({cplx(0.6, 0), cplx(0, 0.8)});
    WalkerState s2 = assemble_full_state(t2, {});
    CHECK(std::abs(s2.up_at(1) - 0.6) < 1e-12);
    CHECK(std::abs(s2.dn_at(2) - cplx(0, 0.8)) < 1e-12);

    // Balanced 4-site target at d = (i, 1-i)/2 gives the known 3-step state
    // (1,(1-i),i,i,(1-i),1)/2 up to overall normalization (that listing has
    // norm sqrt(2)); the conjugate branch d = (-i, 1+i)/2 gives its mirror.
    TargetSuperposition t4({1, 1, 1, 1});
    cplx i(0, 1);
    WalkerState s4 = assemble_full_state(t4, {i / 2.0, (1.0 - i) / 2.0});
    double r = 1 / std::sqrt(8.0);
    CHECK(std::abs(s4.up_at(1) - r) < 1e-12);
    CHECK(std::abs(s4.up_at(2) - r * (1.0 - i)) < 1e-12);
    CHECK(std::abs(s4.dn_at(2) - r * i) < 1e-12);
    CHECK(std::abs(s4.up_at(3) - r * i) < 1e-12);
    CHECK(std::abs(s4.dn_at(3) - r * (1.0 - i)) < 1e-12);
    CHECK(std::abs(s4.dn_at(4) - r) < 1e-12);

    CHECK_THROWS_AS(assemble_full_state(t4, {i}), std::invalid_argument);
}

TEST_CASE("projection identity holds for arbitrary d") {
    Rng rng(51);
    for (int trial = 0; trial < 200; ++trial) {
        int sites = 3 + (trial % 5);
        TargetSuperposition t = haar_target(rng, sites);
        std::vector<cplx> d(static_cast<size_t>(sites - 2));
        for (auto& x : d) x = 3.0 * rng.cnormal();
        WalkerState full = assemble_full_state(t, d);
        ProjectionResult pr = project_coin(full, plus_bra());
        CHECK(t.fidelity(pr.normalizedTarget()) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(pr.probability == doctest::Approx(d_probability(t, d)).epsilon(1e-10));
    }
}

TEST_CASE("two-step analytic solution") {
    // Unnormalized (2,1,1): d2 = 2(2*1 + 1*1)/(4-1) = 2, which scales with
    // the normalization to 2/sqrt(6).
    TargetSuperposition t({2, 1, 1});
    D2Result r = solve_d2(t);
    REQUIRE(r.solutions.size() == 1);
    CHECK(std::abs(r.solutions[0].d[0] - 2.0 / std::sqrt(6.0)) < 1e-12);
    CHECK(r.solutions[0].residualMax < 1e-12);

    // The defining constraint directly: u1*(u2 - d2) + conj(d2) u3 = 0.
    cplx d2 = r.solutions[0].d[0];
    CHECK(residual_max(d_residuals(t, {d2})) < 1e-12);
}

TEST_CASE("two-step closed-form probability") {
    CHECK(projection_probability_2step_closed_form(0.6, 0.0) ==
          doctest::Approx(0.5));
    CHECK(projection_probability_2step_closed_form(1 / std::sqrt(2.0), 0.0) ==
          doctest::Approx(0.0));
    // u1 = -u3: the generic formula has a removable singularity but p stays
    // finite and nonzero.
    double p = projection_probability_2step_closed_form(-0.6, 0.0);
    CHECK(p > 0.0);
    CHECK(std::isfinite(p));

    CHECK_THROWS_AS(projection_probability_2step_closed_form(0.9, 0.9),
                    std::invalid_argument);
}

TEST_CASE("closed form matches the pipeline on a real grid") {
    for (int i = -9; i <= 9; ++i)
        for (int j = -9; j <= 9; ++j) {
            double u1 = i / 10.0, u2 = j / 10.0;
            double rest = 1.0 - u1 * u1 - u2 * u2;
            if (rest < 1e-3) continue;
            double u3 = std::sqrt(rest);
            if (std::abs(std::abs(u1) - u3) < 1e-6) continue;  // degenerate branch
            TargetSuperposition t({u1, u2, u3});
            D2Result r = solve_d2(t);
            REQUIRE(r.solutions.size() == 1);
            CHECK(std::abs(r.solutions[0].probability -
                           projection_probability_2step_closed_form(u1, u2)) < 1e-10);
        }
}

TEST_CASE("degenerate two-step family") {
    // |u1| = |u3| consistent case: a one-parameter family with the maximum
    // probability at dI = 0.
    TargetSuperposition t({cplx(0, 0.5), cplx(0.2, 0), cplx(0, 0.5)});
    D2Result r = solve_d2(t);
    REQUIRE(r.solutions.size() >= 3);
    CHECK(r.diagnostic.empty());
    for (const auto& s : r.solutions) CHECK(s.residualMax < 1e-10);

    auto d0 = solve_d2_family_member(t, 0.0);
    REQUIRE(d0.has_value());
    double p0 = d_probability(t, {*d0});
    for (double dI : {0.25, -0.25, 1.0, -1.0, 2.0, -2.0}) {
        auto dd = solve_d2_family_member(t, dI);
        REQUIRE(dd.has_value());
        CHECK(residual_max(d_residuals(t, {*dd})) < 1e-10);
        CHECK(d_probability(t, {*dd}) < p0 + 1e-12);
    }

    // Probability decreases monotonically in |dI|.
    double prev = p0;
    for (double dI : {0.5, 1.0, 1.5, 2.0}) {
        double p = d_probability(t, {*solve_d2_family_member(t, dI)});
        CHECK(p < prev);
        prev = p;
    }

    // Real target with u1 = u3: inconsistent, no solution, explained.
    TargetSuperposition bad({0.5, 0.2, 0.5});
    D2Result rb = solve_d2(bad);
    CHECK(rb.solutions.empty());
    CHECK(!rb.diagnostic.empty());
}

TEST_CASE("polynomial solver agrees with the analytic two-step branch") {
    Rng rng(52);
    for (int trial = 0; trial < 200; ++trial) {
        TargetSuperposition t = haar_target(rng, 3);
        D2Result a = solve_d2(t);
        if (a.solutions.size() != 1) continue;  // skip measure-zero degenerate draws
        DSolveOptions opts;
        opts.seed = 1000 + static_cast<std::uint64_t>(trial);
        auto b = solve_d_system(t, opts);
        REQUIRE(b.size() == 1);
        CHECK(std::abs(b[0].d[0] - a.solutions[0].d[0]) < 1e-8);
    }
}

TEST_CASE("balanced four-site branches") {
    TargetSuperposition t({1, 1, 1, 1});
    auto sols = solve_d_system(t, DSolveOptions{.seed = 7});
    REQUIRE(sols.size() == 2);
    cplx i(0, 1);
    CHECK(contains_d(sols, {-i / 2.0, (1.0 + i) / 2.0}, 1e-9));
    CHECK(contains_d(sols, {i / 2.0, (1.0 - i) / 2.0}, 1e-9));
    for (const auto& s : sols) {
        CHECK(s.probability == doctest::Approx(0.25).epsilon(1e-10));
        CHECK(s.residualMax < 1e-10);
    }
}

TEST_CASE("solver output satisfies reachability after assembly") {
    Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        int sites = 3 + (trial % 3);
        TargetSuperposition t = haar_target(rng, sites);
        auto sols = solve_d_system(t, DSolveOptions{.seed = 60 + static_cast<std::uint64_t>(trial)});
        CHECK(!sols.empty());
        for (const auto& s : sols) {
            WalkerState full = assemble_full_state(t, s.d);
            CHECK(residual_max(reachability_residuals(full, sites - 1)) < 1e-9);
        }
        // Sorted by descending probability.
        for (size_t k = 1; k < sols.size(); ++k)
            CHECK(sols[k].probability <= sols[k - 1].probability + 1e-12);
    }
}

TEST_CASE("full engineering pipeline is forward verified") {
    TargetSuperposition t({1, 1, 1, 1});
    auto sols = engineer_target(t, EngineerOptions{.seed = 3});
    REQUIRE(sols.size() == 2);
    for (const auto& s : sols) {
        CHECK(s.fidelity > 1 - 1e-9);
        CHECK(s.probability == doctest::Approx(0.25).epsilon(1e-9));
        REQUIRE(s.coins.size() == 3);
        // Replay the coins from scratch and project.
        WalkerState replay = run_walk(s.initialCoin, s.coins);
        ProjectionResult pr = project_coin(replay, s.projection);
        CHECK(t.fidelity(pr.normalizedTarget()) > 1 - 1e-9);
        CHECK(pr.probability == doctest::Approx(s.probability).epsilon(1e-9));
    }

    Rng rng(54);
    TargetSuperposition rt = haar_target(rng, 3);
    auto rsols = engineer_target(rt, EngineerOptions{.seed = 4});
    REQUIRE(rsols.size() == 1);
    CHECK(rsols[0].fidelity > 1 - 1e-9);
}
