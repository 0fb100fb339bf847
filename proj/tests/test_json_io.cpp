#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "qwalk/json_io.hpp"
#include "qwalk/rng.hpp"

using namespace qwalk;

TEST_CASE("complex literal parsing") {
    CHECK(parse_complex("1") == cplx(1, 0));
    CHECK(parse_complex("-2.5") == cplx(-2.5, 0));
    CHECK(parse_complex("i") == cplx(0, 1));
    CHECK(parse_complex("-i") == cplx(0, -1));
    CHECK(parse_complex("0.5-0.5i") == cplx(0.5, -0.5));
    CHECK(parse_complex("1+2i") == cplx(1, 2));
    CHECK(parse_complex("1e-3+2e-4i") == cplx(1e-3, 2e-4));
    CHECK(parse_complex("-1.5e2i") == cplx(0, -150));
    CHECK_THROWS_AS(parse_complex("frog"), std::invalid_argument);
    CHECK_THROWS_AS(parse_complex(""), std::invalid_argument);
}

TEST_CASE("state round trip with phase canonicalization") {
    Rng rng(81);
    for (int trial = 0; trial < 100; ++trial) {
        int sites = 1 + (trial % 5);
        std::vector<SiteAmp> amps(static_cast<size_t>(sites));
        for (auto& a : amps) {
            a.up = rng.cnormal();
            a.dn = rng.cnormal();
        }
        WalkerState s(1 + (trial % 3), std::move(amps));
        s.normalize();
        WalkerState back = state_from_json(state_to_json(s));
        CHECK(back.origin() == s.origin());
        REQUIRE(back.site_count() == s.site_count());
        // Serialization fixes the global phase; compare after aligning.
        cplx first = s.up(0);
        cplx ph = std::abs(first) > 1e-12 ? std::abs(first) / first : cplx(1, 0);
        for (int i = 0; i < sites; ++i) {
            CHECK(std::abs(back.up(i) - ph * s.up(i)) < 1e-12);
            CHECK(std::abs(back.dn(i) - ph * s.dn(i)) < 1e-12);
        }
        // Idempotent once canonical.
        WalkerState again = state_from_json(state_to_json(back));
        for (int i = 0; i < sites; ++i)
            CHECK(std::abs(again.up(i) - back.up(i)) < 1e-14);
    }
}

TEST_CASE("coin and target round trips") {
    Rng rng(82);
    for (int trial = 0; trial < 100; ++trial) {
        CoinOperator c = coin_from_params(rng.uniform(0.0, M_PI / 2),
                                          rng.uniform(-M_PI, M_PI),
                                          rng.uniform(-M_PI, M_PI));
        CoinOperator back = coin_from_json(coin_to_json(c));
        Mat2 a = c.su2(), b = back.su2();
        CHECK(std::abs(a.a - b.a) < 1e-12);
        CHECK(std::abs(a.b - b.b) < 1e-12);

        std::vector<cplx> amps(static_cast<size_t>(2 + trial % 5));
        for (auto& x : amps) x = rng.cnormal();
        TargetSuperposition t(amps);
        TargetSuperposition tb = target_from_json(target_to_json(t));
        REQUIRE(tb.size() == t.size());
        CHECK(t.fidelity(tb.amps()) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("solution and plan round trips") {
    TargetSuperposition t({1, 1, 1, 1});
    auto sols = engineer_target(t, EngineerOptions{.seed = 6});
    REQUIRE(!sols.empty());
    const EngineeringSolution& s = sols[0];

    EngineeringSolution back = solution_from_json(solution_to_json(s));
    REQUIRE(back.coins.size() == s.coins.size());
    REQUIRE(back.d.size() == s.d.size());
    CHECK(back.probability == doctest::Approx(s.probability).epsilon(1e-12));
    CHECK(back.fidelity == doctest::Approx(s.fidelity).epsilon(1e-12));
    for (size_t i = 0; i < s.d.size(); ++i)
        CHECK(std::abs(back.d[i] - s.d[i]) < 1e-12);
    // The round-tripped coins replay to the same projected target.
    WalkerState replay = run_walk(back.initialCoin, back.coins);
    ProjectionResult pr = project_coin(replay, back.projection);
    CHECK(t.fidelity(pr.normalizedTarget()) > 1 - 1e-9);

    ExperimentPlan plan = compile_experiment(s);
    ExperimentPlan pback = plan_from_json(plan_to_json(plan));
    REQUIRE(pback.steps.size() == plan.steps.size());
    CHECK(pback.inputSpan == plan.inputSpan);
    for (size_t i = 0; i < plan.steps.size(); ++i) {
        CHECK(pback.steps[i].qwp1Angle == doctest::Approx(plan.steps[i].qwp1Angle));
        CHECK(pback.steps[i].hwpAngle == doctest::Approx(plan.steps[i].hwpAngle));
        CHECK(pback.steps[i].qwp2Angle == doctest::Approx(plan.steps[i].qwp2Angle));
        CHECK(pback.steps[i].qplateCharge == plan.steps[i].qplateCharge);
    }
    PlanSimulation sim = simulate_plan(pback);
    CHECK(sim.probability == doctest::Approx(s.probability).epsilon(1e-8));
}

TEST_CASE("malformed documents are rejected") {
    CHECK_THROWS(state_from_json(json::parse(R"({"origin": 1})")));
    CHECK_THROWS(state_from_json(json::parse(R"({"origin": 1, "amps": [[1, 0]]})")));
    CHECK_THROWS(coin_from_json(json::parse(R"({"theta": 9.0, "xi": 0, "zeta": 0})")));
    CHECK_THROWS(target_from_json(json::parse(R"({"amps": [[1, 0]]})")));
    CHECK_THROWS(target_from_json(json::parse(R"({"amps": []})")));
}

TEST_CASE("complex pair serialization") {
    std::array<cplx, 2> v{cplx(0.6, -0.1), cplx(0, 0.79)};
    auto back = complex_pair_from_json(complex_pair_to_json(v));
    CHECK(std::abs(back[0] - v[0]) < 1e-15);
    CHECK(std::abs(back[1] - v[1]) < 1e-15);
}
