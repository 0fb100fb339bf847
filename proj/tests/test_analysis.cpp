#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qwalk/analysis.hpp"

using namespace qwalk;

TEST_CASE("haar targets are normalized and deterministic") {
    for (int dim : {2, 4, 9}) {
        TargetSuperposition a = haar_random_target(dim, 123);
        TargetSuperposition b = haar_random_target(dim, 123);
        TargetSuperposition c = haar_random_target(dim, 124);
        REQUIRE(a.size() == dim);
        double n = 0.0;
        bool same = true, diff = false;
        for (int i = 0; i < dim; ++i) {
            n += std::norm(a[i]);
            same = same && a[i] == b[i];
            diff = diff || std::abs(a[i] - c[i]) > 1e-12;
        }
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(same);
        CHECK(diff);
    }

    // Mean squared amplitude over many draws approaches 1/dim per component.
    int dim = 5;
    double acc = 0.0;
    int draws = 400;
    for (int s = 0; s < draws; ++s) acc += std::norm(haar_random_target(dim, 1000 + static_cast<std::uint64_t>(s))[0]);
    CHECK(acc / draws == doctest::Approx(1.0 / dim).epsilon(0.15));
}

TEST_CASE("two-step histogram bookkeeping") {
    HistogramOptions opts;
    opts.nSteps = 2;
    opts.nSamples = 40;
    opts.bins = 10;
    opts.seed = 77;
    HistogramResult r = probability_histogram(opts);
    REQUIRE(static_cast<int>(r.records.size()) == opts.nSamples);
    int total = 0;
    for (int c : r.binCounts) total += c;
    CHECK(total == opts.nSamples);
    CHECK(static_cast<int>(r.binCounts.size()) == opts.bins);
    CHECK(r.binLo < r.binHi);
    for (const auto& rec : r.records) {
        CHECK(rec.solutionCount >= 1);
        CHECK(rec.minP <= rec.maxP + 1e-15);
        CHECK(rec.maxP > 0.0);
        CHECK(rec.maxP <= 1.0 + 1e-12);
    }

    // Same seed reproduces the records exactly.
    HistogramResult r2 = probability_histogram(opts);
    for (size_t i = 0; i < r.records.size(); ++i) {
        CHECK(r.records[i].minP == r2.records[i].minP);
        CHECK(r.records[i].maxP == r2.records[i].maxP);
    }

    std::string csv = r.to_csv();
    CHECK(csv.find(',') != std::string::npos);
    // One header plus one line per record.
    int lines = 0;
    std::istringstream is(csv);
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    CHECK(lines >= opts.nSamples + 1);
}

TEST_CASE("optimizer-mode histogram tracks fidelity retention") {
    HistogramOptions opts;
    opts.nSteps = 2;
    opts.nSamples = 6;
    opts.bins = 5;
    opts.seed = 5;
    opts.mode = HistogramMode::Optimizer;
    opts.optimizer.restarts = 3;
    HistogramResult r = probability_histogram(opts);
    REQUIRE(static_cast<int>(r.records.size()) == opts.nSamples);
    for (const auto& rec : r.records) {
        CHECK(rec.fidelity > 0.9);  // n=2 targets are exactly reachable
        CHECK(rec.p > 0.0);
    }
    REQUIRE(!r.retainedFractions.empty());
    // Retained fraction is monotone nonincreasing in the threshold exponent.
    for (size_t i = 1; i < r.retainedFractions.size(); ++i) {
        CHECK(r.retainedFractions[i].first > r.retainedFractions[i - 1].first);
        CHECK(r.retainedFractions[i].second <= r.retainedFractions[i - 1].second + 1e-15);
    }
}

TEST_CASE("perturbation sweep identities") {
    TargetSuperposition t({1, 1, 1, 1});
    auto sols = engineer_target(t, EngineerOptions{.seed = 2});
    REQUIRE(!sols.empty());
    const EngineeringSolution& sol = sols.front();

    // eps = 0 reproduces the unperturbed fidelity/probability.
    for (int step = 0; step < 3; ++step)
        for (int angle = 0; angle < 3; ++angle) {
            auto pts = perturb_sweep(sol, ParamSelector{step, angle}, {0.0},
                                     SweepMode::Absolute);
            REQUIRE(pts.size() == 1);
            CHECK(pts[0].fidelity == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(pts[0].probability == doctest::Approx(sol.probability).epsilon(1e-9));
        }

    // Fidelity at small eps stays near 1 and falls off as eps grows.
    auto pts = perturb_sweep(sol, ParamSelector{0, 0}, {-0.3, -0.1, 0.0, 0.1, 0.3},
                             SweepMode::Absolute);
    REQUIRE(pts.size() == 5);
    CHECK(pts[2].fidelity > pts[0].fidelity);
    CHECK(pts[2].fidelity > pts[4].fidelity);

    // step = -1 iterates every coin angle.
    auto all = perturb_sweep(sol, ParamSelector{-1, -1}, {0.0, 0.1},
                             SweepMode::Absolute);
    CHECK(all.size() == 2u * 9u);

    std::string csv = sweep_to_csv(pts);
    CHECK(csv.find("eps") != std::string::npos);

    // Relative mode scales the angle instead of shifting it; theta = 0 angles
    // are then insensitive while absolute mode moves them.
    double wAbs = worst_fidelity_at(sol, 0.2, SweepMode::Absolute);
    double wRel = worst_fidelity_at(sol, 0.2, SweepMode::Relative);
    CHECK(wAbs < 1.0 - 1e-6);
    CHECK(wRel < 1.0 - 1e-6);
    CHECK(worst_fidelity_at(sol, 0.0, SweepMode::Absolute) ==
          doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("thread budget is at least one") {
    CHECK(thread_budget() >= 1);
}
