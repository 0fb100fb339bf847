// Command-line front end: every pipeline in the library behind one binary
// with stable JSON/CSV formats and explicit seeds.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "qwalk/analysis.hpp"
#include "qwalk/json_io.hpp"

using namespace qwalk;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    json j;
    in >> j;
    return j;
}

void write_output(const std::string& path, const std::string& data) {
    if (path.empty() || path == "-") {
        std::cout << data;
        if (!data.empty() && data.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write file: " + path);
    out << data;
    if (!data.empty() && data.back() != '\n') out << '\n';
}

void write_output(const std::string& path, const json& j) {
    write_output(path, j.dump(2));
}

std::array<cplx, 2> parse_spinor(const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos)
        throw std::invalid_argument("expected two comma-separated amplitudes: " + s);
    return {parse_complex(s.substr(0, comma)), parse_complex(s.substr(comma + 1))};
}

std::vector<CoinOperator> coins_from_file(const std::string& path) {
    json j = read_json_file(path);
    const json& arr = j.is_array() ? j : j.at("coins");
    std::vector<CoinOperator> coins;
    for (const auto& c : arr) coins.push_back(coin_from_json(c));
    return coins;
}

EngineeringSolution solution_from_file(const std::string& path) {
    return solution_from_json(read_json_file(path));
}

json error_object(const std::string& code, const std::string& message,
                  const json& context = json::object()) {
    return {{"code", code}, {"message", message}, {"context", context}};
}

int fail(int status, const std::string& code, const std::string& message,
         const json& context = json::object()) {
    std::cout << error_object(code, message, context).dump(2) << '\n';
    std::cerr << "error: " << message << '\n';
    return status;
}

json solutions_to_json(const std::vector<EngineeringSolution>& sols) {
    json arr = json::array();
    for (const auto& s : sols) arr.push_back(solution_to_json(s));
    return {{"solutions", arr}};
}

// --- subcommand bodies ---------------------------------------------------

int cmd_simulate(const std::string& initialCoin, const std::string& coinsPath,
                 const std::string& out) {
    auto coins = coins_from_file(coinsPath);
    WalkerState state = run_walk(parse_spinor(initialCoin), coins);
    write_output(out, state_to_json(state));
    std::cerr << "simulated " << coins.size() << " steps, final norm "
              << state.norm() << '\n';
    return 0;
}

int cmd_project(const std::string& statePath, const std::string& bra,
                const std::string& out) {
    WalkerState state = state_from_json(read_json_file(statePath));
    std::array<cplx, 2> b = parse_spinor(bra);
    double bn = std::sqrt(std::norm(b[0]) + std::norm(b[1]));
    if (bn < TOL_ZERO) throw std::invalid_argument("zero bra");
    b[0] /= bn;
    b[1] /= bn;
    ProjectionResult r = project_coin(state, b);
    json amps = json::array();
    for (const auto& a : r.siteAmps) amps.push_back({a.real(), a.imag()});
    json target = json::array();
    for (const auto& a : r.normalizedTarget())
        target.push_back({a.real(), a.imag()});
    write_output(out, json{{"origin", r.origin},
                           {"siteAmps", amps},
                           {"probability", r.probability},
                           {"normalizedTarget", target}});
    std::cerr << "projection probability " << r.probability << '\n';
    return 0;
}

int cmd_check(const std::string& statePath, int steps, double tol,
              const std::string& out) {
    WalkerState state = state_from_json(read_json_file(statePath));
    int maxSteps = max_reachable_steps(state, tol);
    int n = steps > 0 ? steps : std::max(1, state.last_label() - 1);
    json residuals = json::array();
    if (n <= state.last_label() - std::min(state.origin(), 1))
        for (const auto& r : reachability_residuals(state, n))
            residuals.push_back(std::abs(r));
    write_output(out, json{{"maxSteps", maxSteps}, {"residuals", residuals}});
    std::cerr << "reachable in up to " << maxSteps << " steps\n";
    return 0;
}

int cmd_backsolve(const std::string& statePath, const std::string& initialCoin,
                  const std::string& alphasPath, bool randomAlphas,
                  std::uint64_t seed, double tol, const std::string& out) {
    WalkerState state = state_from_json(read_json_file(statePath));
    std::vector<double> alphas;
    if (!alphasPath.empty())
        for (const auto& a : read_json_file(alphasPath))
            alphas.push_back(a.get<double>());
    if (randomAlphas) {
        Rng rng(splitmix64(seed));
        int n = state.last_label() - std::min(state.origin(), 1);
        alphas.clear();
        for (int i = 0; i + 1 < n; ++i)
            alphas.push_back(2 * M_PI * rng.uniform() - M_PI);
    }
    std::vector<CoinOperator> coins;
    std::array<cplx, 2> ic{};
    if (initialCoin.empty()) {
        BacksolveResult r = backsolve_auto(state, alphas, tol);
        coins = std::move(r.coins);
        ic = r.initialCoin;
    } else {
        ic = parse_spinor(initialCoin);
        coins = backsolve(state, ic, alphas, tol);
    }
    json arr = json::array();
    for (const auto& c : coins) arr.push_back(coin_to_json(c));
    write_output(out, json{{"coins", arr},
                           {"initialCoin", complex_pair_to_json(ic)}});
    std::cerr << "recovered " << coins.size() << " coins\n";
    return 0;
}

int cmd_engineer(const std::string& targetPath, int maxSolutions,
                 std::uint64_t seed, const std::string& out) {
    TargetSuperposition target = target_from_json(read_json_file(targetPath));
    EngineerOptions opts;
    opts.seed = seed;
    opts.maxSolutions = maxSolutions;
    auto sols = engineer_target(target, opts);
    if (sols.empty()) {
        std::string diag = "no solution found";
        if (target.size() == 3) {
            D2Result r = solve_d2(target);
            if (!r.diagnostic.empty()) diag = r.diagnostic;
        }
        return fail(2, "no_solution", diag, {{"sites", target.size()}});
    }
    write_output(out, solutions_to_json(sols));
    std::cerr << sols.size() << " solutions, best p = " << sols[0].probability
              << '\n';
    return 0;
}

int cmd_optimize(const std::string& targetPath, int steps, std::uint64_t seed,
                 bool optProjection, bool optInitialCoin, int restarts,
                 int maxIterations, const std::string& out) {
    TargetSuperposition target = target_from_json(read_json_file(targetPath));
    OptimizerOptions opts;
    opts.seed = seed;
    opts.optimizeProjection = optProjection;
    opts.optimizeInitialCoin = optInitialCoin;
    opts.restarts = restarts;
    opts.maxIterations = maxIterations;
    OptimizeResult r = optimize_coins(target, steps, opts);
    json j = solution_to_json(r.solution);
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    write_output(out, j);
    std::cerr << "F = " << r.solution.fidelity << ", p = "
              << r.solution.probability << '\n';
    return 0;
}

int cmd_histogram(int steps, int samples, const std::string& mode,
                  int bins, std::uint64_t seed, const std::string& out) {
    HistogramOptions opts;
    opts.nSteps = steps;
    opts.nSamples = samples;
    opts.bins = bins;
    opts.seed = seed;
    if (mode == "d-system")
        opts.mode = HistogramMode::DSystem;
    else if (mode == "optimizer")
        opts.mode = HistogramMode::Optimizer;
    else
        throw std::invalid_argument("mode must be d-system or optimizer");
    HistogramResult r = probability_histogram(opts);
    write_output(out, r.to_csv());
    std::cerr << samples << " samples at " << steps << " steps\n";
    for (auto [t, f] : r.retainedFractions)
        std::cerr << "  F >= 1-1e-" << t << ": " << 100 * f << "%\n";
    return 0;
}

int cmd_sweep(const std::string& solutionPath, const std::string& param,
              const std::string& grid, const std::string& mode,
              const std::string& out) {
    EngineeringSolution sol = solution_from_file(solutionPath);
    ParamSelector sel;
    if (!param.empty() && param != "all") {
        auto colon = param.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("param must be step:angle or all");
        sel.step = std::stoi(param.substr(0, colon));
        std::string a = param.substr(colon + 1);
        if (a == "theta" || a == "0") sel.angle = 0;
        else if (a == "xi" || a == "1") sel.angle = 1;
        else if (a == "zeta" || a == "2") sel.angle = 2;
        else throw std::invalid_argument("angle must be theta|xi|zeta");
    }
    double lo = 0.0, hi = 0.0;
    int k = 0;
    {
        std::istringstream is(grid);
        char c1 = 0, c2 = 0;
        if (!(is >> lo >> c1 >> hi >> c2 >> k) || c1 != ',' || c2 != ',' || k < 2)
            throw std::invalid_argument("grid must be lo,hi,count with count >= 2");
    }
    std::vector<double> eps;
    for (int i = 0; i < k; ++i) eps.push_back(lo + (hi - lo) * i / (k - 1));
    SweepMode m = mode == "relative" ? SweepMode::Relative : SweepMode::Absolute;
    if (mode != "relative" && mode != "absolute")
        throw std::invalid_argument("mode must be absolute or relative");
    auto pts = perturb_sweep(sol, sel, eps, m);
    write_output(out, sweep_to_csv(pts));
    std::cerr << pts.size() << " sweep points\n";
    return 0;
}

int cmd_compile(const std::string& solutionPath, const std::string& out) {
    EngineeringSolution sol = solution_from_file(solutionPath);
    ExperimentPlan plan = compile_experiment(sol);
    write_output(out, plan_to_json(plan));
    std::cerr << plan.steps.size() << " plate units compiled\n";
    return 0;
}

TargetSuperposition balanced_target(int sites, bool lastMinus = false) {
    std::vector<cplx> amps(static_cast<size_t>(sites), cplx(1, 0));
    if (lastMinus) amps.back() = -1.0;
    return TargetSuperposition(std::move(amps));
}

int cmd_reproduce(const std::string& name, std::uint64_t seed,
                  const std::string& out) {
    if (name == "balanced4" || name == "balanced6" || name == "sixsites-minus") {
        TargetSuperposition target =
            name == "balanced4" ? balanced_target(4)
            : name == "balanced6" ? balanced_target(6)
                                  : balanced_target(6, true);
        EngineerOptions opts;
        opts.seed = seed;
        auto sols = engineer_target(target, opts);
        if (sols.empty()) return fail(2, "no_solution", "no solution found");
        std::string path = out.empty() ? name + "-solutions.json" : out;
        write_output(path, solutions_to_json(sols));
        std::cerr << name << ": " << sols.size() << " solutions, p range ["
                  << sols.back().probability << ", " << sols[0].probability
                  << "] -> " << path << '\n';
        return 0;
    }
    if (name == "hist2" || name == "hist15") {
        HistogramOptions opts;
        opts.seed = seed;
        if (name == "hist2") {
            opts.nSteps = 2;
            opts.nSamples = 500;
            opts.mode = HistogramMode::DSystem;
        } else {
            opts.nSteps = 15;
            opts.nSamples = 100;
            opts.mode = HistogramMode::Optimizer;
        }
        HistogramResult r = probability_histogram(opts);
        std::string path = out.empty() ? name + ".csv" : out;
        write_output(path, r.to_csv());
        std::cerr << name << ": " << opts.nSamples << " samples -> " << path
                  << '\n';
        return 0;
    }
    throw std::invalid_argument("unknown case: " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete-time quantum walk engineering toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    double tol = REACH_TOL;
    std::string out;
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();
    app.add_option("--tol", tol, "numerical tolerance")->capture_default_str();
    app.add_option("--out", out, "output path (default: stdout)");

    std::string initialCoin, coinsPath, statePath, bra, alphasPath;
    std::string targetPath, solutionPath, param = "all", grid = "-0.1,0.1,21";
    std::string histMode = "d-system", sweepMode = "absolute", caseName;
    int steps = 0, samples = 100, bins = 40, maxSolutions = 0, restarts = 8;
    int maxIterations = 0;
    bool randomAlphas = false, optProjection = false, optInitialCoin = false;

    auto* sim = app.add_subcommand("simulate", "run a walk from coin list");
    sim->add_option("--initial-coin", initialCoin, "a,b")->required();
    sim->add_option("--coins", coinsPath, "coins JSON")->required();

    auto* prj = app.add_subcommand("project", "project coin on a bra");
    prj->add_option("--state", statePath, "state JSON")->required();
    prj->add_option("--bra", bra, "a,b")->default_str("");

    auto* chk = app.add_subcommand("check", "reachability residuals");
    chk->add_option("--state", statePath, "state JSON")->required();
    chk->add_option("--steps", steps, "claimed step count");

    auto* bks = app.add_subcommand("backsolve", "recover coins from a state");
    bks->add_option("--state", statePath, "state JSON")->required();
    bks->add_option("--initial-coin", initialCoin, "a,b (default: auto)");
    bks->add_option("--alphas", alphasPath, "per-step gauge phases JSON");
    bks->add_flag("--random-alphas", randomAlphas, "random gauge phases");

    auto* eng = app.add_subcommand("engineer", "solve the d-system pipeline");
    eng->add_option("--target", targetPath, "target JSON")->required();
    eng->add_option("--max-solutions", maxSolutions, "0 = all");

    auto* opt = app.add_subcommand("optimize", "fidelity maximization");
    opt->add_option("--target", targetPath, "target JSON")->required();
    opt->add_option("--steps", steps, "walk length")->required();
    opt->add_option("--restarts", restarts)->capture_default_str();
    opt->add_option("--max-iterations", maxIterations, "0 = 2000*steps");
    opt->add_flag("--optimize-projection", optProjection);
    opt->add_flag("--optimize-initial-coin", optInitialCoin);

    auto* hst = app.add_subcommand("histogram", "Haar-sample statistics");
    hst->add_option("--steps", steps, "walk length")->required();
    hst->add_option("--samples", samples)->capture_default_str();
    hst->add_option("--mode", histMode, "d-system | optimizer")
        ->capture_default_str();
    hst->add_option("--bins", bins)->capture_default_str();

    auto* swp = app.add_subcommand("sweep", "coin-angle stability sweep");
    swp->add_option("--solution", solutionPath, "solution JSON")->required();
    swp->add_option("--param", param, "step:angle or all")->capture_default_str();
    swp->add_option("--grid", grid, "lo,hi,count")->capture_default_str();
    swp->add_option("--mode", sweepMode, "absolute | relative")
        ->capture_default_str();

    auto* cmp = app.add_subcommand("compile", "lower to the optical plan");
    cmp->add_option("--solution", solutionPath, "solution JSON")->required();

    auto* rpr = app.add_subcommand("reproduce", "regenerate a named artifact");
    rpr->add_option("--case", caseName,
                    "balanced4 | balanced6 | sixsites-minus | hist2 | hist15")
        ->required();

    // Let --seed/--tol/--out be given after the subcommand as well.
    for (auto* sc : app.get_subcommands([](const CLI::App*) { return true; }))
        sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int r = app.exit(e);
        return r == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed()) return cmd_simulate(initialCoin, coinsPath, out);
        if (prj->parsed())
            return cmd_project(statePath, bra.empty() ? "1,1" : bra, out);
        if (chk->parsed()) return cmd_check(statePath, steps, tol, out);
        if (bks->parsed())
            return cmd_backsolve(statePath, initialCoin, alphasPath,
                                 randomAlphas, seed, tol, out);
        if (eng->parsed()) return cmd_engineer(targetPath, maxSolutions, seed, out);
        if (opt->parsed())
            return cmd_optimize(targetPath, steps, seed, optProjection,
                                optInitialCoin, restarts, maxIterations, out);
        if (hst->parsed())
            return cmd_histogram(steps, samples, histMode, bins, seed, out);
        if (swp->parsed())
            return cmd_sweep(solutionPath, param, grid, sweepMode, out);
        if (cmp->parsed()) return cmd_compile(solutionPath, out);
        if (rpr->parsed()) return cmd_reproduce(caseName, seed, out);
    } catch (const not_reachable_error& e) {
        return fail(2, "not_reachable", e.what(), {{"residual", e.residual()}});
    } catch (const numerical_error& e) {
        return fail(3, "numerical_failure", e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(1, "validation", e.what());
    } catch (const std::invalid_argument& e) {
        return fail(1, "validation", e.what());
    } catch (const std::exception& e) {
        return fail(3, "numerical_failure", e.what());
    }
    return 1;
}
