#include "qwalk/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace qwalk {

TargetSuperposition haar_random_target(int dim, Rng& rng) {
    if (dim < 2)
        throw std::invalid_argument("haar_random_target: dim must be >= 2");
    std::vector<cplx> amps(static_cast<size_t>(dim));
    for (auto& a : amps) a = rng.cnormal();
    return TargetSuperposition(std::move(amps));
}

TargetSuperposition haar_random_target(int dim, std::uint64_t seed) {
    Rng rng(splitmix64(seed));
    return haar_random_target(dim, rng);
}

HistogramResult probability_histogram(const HistogramOptions& opts) {
    if (opts.mode == HistogramMode::DSystem && opts.nSteps > N_MAX_POLY)
        throw std::invalid_argument(
            "probability_histogram: d-system mode is limited to " +
            std::to_string(N_MAX_POLY) + " steps");
    HistogramResult res;
    res.records.resize(static_cast<size_t>(std::max(0, opts.nSamples)));
    auto run_sample = [&](int s) {
        Rng rng = Rng::substream(opts.seed, static_cast<std::uint64_t>(s));
        TargetSuperposition target = haar_random_target(opts.nSteps + 1, rng);
        HistogramRecord rec;
        rec.sample = s;
        if (opts.mode == HistogramMode::DSystem) {
            DSolveOptions dopts = opts.dsolve;
            dopts.seed = splitmix64(opts.seed ^ static_cast<std::uint64_t>(s));
            std::vector<DSolution> sols =
                opts.nSteps == 2 ? solve_d2(target).solutions
                                 : solve_d_system(target, dopts);
            rec.solutionCount = static_cast<int>(sols.size());
            if (!sols.empty()) {
                auto [lo, hi] = std::minmax_element(
                    sols.begin(), sols.end(),
                    [](const DSolution& a, const DSolution& b) {
                        return a.probability < b.probability;
                    });
                rec.minP = lo->probability;
                rec.maxP = hi->probability;
                rec.fidelity = 1.0;
            }
        } else {
            OptimizerOptions oo = opts.optimizer;
            oo.seed = splitmix64(opts.seed ^ (static_cast<std::uint64_t>(s) << 20));
            OptimizeResult r = optimize_coins(target, opts.nSteps, oo);
            rec.p = r.solution.probability;
            rec.fidelity = r.solution.fidelity;
            rec.solutionCount = 1;
        }
        res.records[static_cast<size_t>(s)] = rec;
    };
    int workers = std::min(thread_budget(), std::max(1, opts.nSamples));
    if (workers <= 1) {
        for (int s = 0; s < opts.nSamples; ++s) run_sample(s);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (int s = w; s < opts.nSamples; s += workers) run_sample(s);
            });
        for (auto& t : pool) t.join();
    }
    res.binCounts.assign(static_cast<size_t>(opts.bins), 0);
    for (const auto& rec : res.records) {
        double v = opts.mode == HistogramMode::DSystem ? rec.maxP : rec.p;
        int b = std::clamp(static_cast<int>(v * opts.bins), 0, opts.bins - 1);
        res.binCounts[static_cast<size_t>(b)]++;
    }
    if (opts.mode == HistogramMode::Optimizer) {
        for (int t : {0, 2, 5, 10, 12}) {
            double thr = 1.0 - std::pow(10.0, -t);
            int kept = 0;
            for (const auto& rec : res.records)
                if (rec.fidelity >= thr) ++kept;
            res.retainedFractions.emplace_back(
                t, static_cast<double>(kept) / std::max(1, opts.nSamples));
        }
    }
    return res;
}

int thread_budget() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("QWALK_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

std::string HistogramResult::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "sample,minP,maxP,p,fidelity,solutionCount\n";
    for (const auto& r : records)
        os << r.sample << ',' << r.minP << ',' << r.maxP << ',' << r.p << ','
           << r.fidelity << ',' << r.solutionCount << '\n';
    return os.str();
}

namespace {

std::vector<SweepPoint> sweep_one(const EngineeringSolution& solution,
                                  const TargetSuperposition& target, int step,
                                  int angle, const std::vector<double>& epsGrid,
                                  SweepMode mode) {
    int n = static_cast<int>(solution.coins.size());
    std::vector<std::array<double, 3>> params;
    params.reserve(static_cast<size_t>(n));
    for (const auto& c : solution.coins)
        params.push_back({c.theta(), c.xi(), c.zeta()});
    std::vector<SweepPoint> out;
    out.reserve(epsGrid.size());
    for (double eps : epsGrid) {
        auto perturbed = params;
        double& v = perturbed[static_cast<size_t>(step)][static_cast<size_t>(angle)];
        v = mode == SweepMode::Absolute ? v + eps : v * (1.0 + eps);
        std::vector<double> flat;
        flat.reserve(static_cast<size_t>(3 * n));
        for (const auto& p : perturbed)
            flat.insert(flat.end(), {p[0], p[1], p[2]});
        auto [f, p] = evaluate(flat, solution.initialCoin, solution.projection, target);
        out.push_back(SweepPoint{step, angle, eps, f, p});
    }
    return out;
}

}  // namespace

std::vector<SweepPoint> perturb_sweep(const EngineeringSolution& solution,
                                      const ParamSelector& sel,
                                      const std::vector<double>& epsGrid,
                                      SweepMode mode) {
    int n = static_cast<int>(solution.coins.size());
    ProjectionResult proj = project_coin(solution.fullState, solution.projection);
    TargetSuperposition target(proj.normalizedTarget());
    std::vector<SweepPoint> out;
    if (sel.step >= 0) {
        if (sel.step >= n || sel.angle < 0 || sel.angle > 2)
            throw std::invalid_argument("perturb_sweep: selector out of range");
        out = sweep_one(solution, target, sel.step, sel.angle, epsGrid, mode);
    } else {
        for (int s = 0; s < n; ++s)
            for (int a = 0; a < 3; ++a) {
                auto part = sweep_one(solution, target, s, a, epsGrid, mode);
                out.insert(out.end(), part.begin(), part.end());
            }
    }
    return out;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& pts) {
    std::ostringstream os;
    os.precision(17);
    os << "step,angle,eps,fidelity,probability\n";
    for (const auto& p : pts)
        os << p.step << ',' << p.angle << ',' << p.eps << ',' << p.fidelity << ','
           << p.probability << '\n';
    return os.str();
}

double worst_fidelity_at(const EngineeringSolution& solution, double eps,
                         SweepMode mode) {
    auto pts = perturb_sweep(solution, ParamSelector{}, {eps}, mode);
    double worst = 1.0;
    for (const auto& p : pts) worst = std::min(worst, p.fidelity);
    return worst;
}

}  // namespace qwalk
