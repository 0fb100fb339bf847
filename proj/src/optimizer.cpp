#include "qwalk/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "qwalk/rng.hpp"

namespace qwalk {

namespace {

// Eq.-10 matrix without the theta range restriction; unitary for any angles.
Mat2 coin_matrix(double theta, double xi, double zeta) {
    double ct = std::cos(theta), st = std::sin(theta);
    return {std::polar(ct, xi), std::polar(st, zeta),
            -std::polar(st, -zeta), std::polar(ct, -xi)};
}

std::array<cplx, 2> spinor_from_angles(double a, double b) {
    return {cplx(std::cos(a), 0.0), std::polar(std::sin(a), b)};
}

struct ParamLayout {
    int nSteps = 0;
    bool optProj = false;
    bool optInit = false;

    int dim() const { return 3 * nSteps + (optProj ? 2 : 0) + (optInit ? 2 : 0); }
};

std::pair<double, double> eval_point(const std::vector<double>& x,
                                     const ParamLayout& lay,
                                     const std::array<cplx, 2>& initialCoin,
                                     const std::array<cplx, 2>& projectionBra,
                                     const TargetSuperposition& target) {
    WalkerState s = WalkerState::localized(1, initialCoin[0], initialCoin[1]);
    std::array<cplx, 2> bra = projectionBra;
    size_t k = static_cast<size_t>(3 * lay.nSteps);
    if (lay.optProj) {
        bra = spinor_from_angles(x[k], x[k + 1]);
        k += 2;
    }
    if (lay.optInit) {
        auto ic = spinor_from_angles(x[k], x[k + 1]);
        s = WalkerState::localized(1, ic[0], ic[1]);
    }
    for (int t = 0; t < lay.nSteps; ++t) {
        size_t j = static_cast<size_t>(3 * t);
        s = apply_step(s, CoinOperator(coin_matrix(x[j], x[j + 1], x[j + 2])));
    }
    ProjectionResult proj = project_coin(s, bra);
    double p = proj.probability;
    double f = p > 0.0 ? target.fidelity(proj.normalizedTarget()) : 0.0;
    return {f, p};
}

struct NmResult {
    std::vector<double> x;
    double value = 0.0;  // minimized objective
    int iterations = 0;
    bool converged = false;
};

// Standard Nelder-Mead on f (minimization).
template <typename F>
NmResult nelder_mead(F&& f, std::vector<double> x0, double step, int maxIter,
                     double ftol, std::vector<double>* trace) {
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> vals(n + 1);
    for (size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    for (size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);
    std::vector<size_t> ord(n + 1);
    NmResult res;
    int it = 0;
    for (; it < maxIter; ++it) {
        for (size_t i = 0; i <= n; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(),
                  [&](size_t a, size_t b) { return vals[a] < vals[b]; });
        if (trace) trace->push_back(vals[ord[0]]);
        if (vals[ord[n]] - vals[ord[0]] < ftol) {
            res.converged = true;
            break;
        }
        std::vector<double> centroid(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) centroid[j] += pts[ord[i]][j] / static_cast<double>(n);
        auto blend = [&](double c) {
            std::vector<double> p(n);
            for (size_t j = 0; j < n; ++j)
                p[j] = centroid[j] + c * (centroid[j] - pts[ord[n]][j]);
            return p;
        };
        auto xr = blend(alpha);
        double fr = f(xr);
        if (fr < vals[ord[0]]) {
            auto xe = blend(gamma);
            double fe = f(xe);
            if (fe < fr) {
                pts[ord[n]] = xe;
                vals[ord[n]] = fe;
            } else {
                pts[ord[n]] = xr;
                vals[ord[n]] = fr;
            }
        } else if (fr < vals[ord[n - 1]]) {
            pts[ord[n]] = xr;
            vals[ord[n]] = fr;
        } else {
            auto xc = blend(fr < vals[ord[n]] ? rho : -rho);
            double fc = f(xc);
            if (fc < std::min(fr, vals[ord[n]])) {
                pts[ord[n]] = xc;
                vals[ord[n]] = fc;
            } else {
                for (size_t i = 1; i <= n; ++i) {
                    size_t k = ord[i];
                    for (size_t j = 0; j < n; ++j)
                        pts[k][j] = pts[ord[0]][j] + sigma * (pts[k][j] - pts[ord[0]][j]);
                    vals[k] = f(pts[k]);
                }
            }
        }
    }
    size_t best = 0;
    for (size_t i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    res.x = pts[best];
    res.value = vals[best];
    res.iterations = it;
    return res;
}

// L-BFGS polish (memory 10) with finite-difference gradients and Armijo
// backtracking.
template <typename F>
int gradient_polish(F&& fmin, std::vector<double>& x, double& fx, int maxIter,
                    std::vector<double>* trace) {
    const double h = 1e-6;
    const size_t n = x.size(), mem = 10;
    auto grad = [&](const std::vector<double>& p) {
        std::vector<double> g(n);
        std::vector<double> q = p;
        for (size_t j = 0; j < n; ++j) {
            double orig = q[j];
            q[j] = orig + h;
            double fp = fmin(q);
            q[j] = orig - h;
            double fm = fmin(q);
            q[j] = orig;
            g[j] = (fp - fm) / (2 * h);
        }
        return g;
    };
    auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t j = 0; j < n; ++j) s += a[j] * b[j];
        return s;
    };
    std::vector<double> g = grad(x);
    std::vector<std::vector<double>> sHist, yHist;
    std::vector<double> rhoHist;
    int it = 0;
    for (; it < maxIter; ++it) {
        double gnorm = std::sqrt(dot(g, g));
        if (gnorm < 1e-11) break;
        // Two-loop recursion for the search direction.
        std::vector<double> q = g;
        size_t k = sHist.size();
        std::vector<double> alphaH(k);
        for (size_t i = k; i-- > 0;) {
            alphaH[i] = rhoHist[i] * dot(sHist[i], q);
            for (size_t j = 0; j < n; ++j) q[j] -= alphaH[i] * yHist[i][j];
        }
        double scale = 1.0;
        if (k > 0)
            scale = dot(sHist[k - 1], yHist[k - 1]) / dot(yHist[k - 1], yHist[k - 1]);
        for (auto& v : q) v *= scale;
        for (size_t i = 0; i < k; ++i) {
            double beta = rhoHist[i] * dot(yHist[i], q);
            for (size_t j = 0; j < n; ++j)
                q[j] += (alphaH[i] - beta) * sHist[i][j];
        }
        // q now approximates H g; descend along -q.
        double gq = dot(g, q);
        if (gq <= 0) {  // not a descent direction; fall back to steepest
            q = g;
            gq = gnorm * gnorm;
        }
        double t = 1.0;
        std::vector<double> xn(n);
        double fn = fx;
        bool moved = false;
        for (int bt = 0; bt < 30; ++bt) {
            for (size_t j = 0; j < n; ++j) xn[j] = x[j] - t * q[j];
            fn = fmin(xn);
            if (fn <= fx - 1e-4 * t * gq) {
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break;
        std::vector<double> gn = grad(xn);
        std::vector<double> sv(n), yv(n);
        for (size_t j = 0; j < n; ++j) {
            sv[j] = xn[j] - x[j];
            yv[j] = gn[j] - g[j];
        }
        double sy = dot(sv, yv);
        if (sy > 1e-14) {
            sHist.push_back(std::move(sv));
            yHist.push_back(std::move(yv));
            rhoHist.push_back(1.0 / sy);
            if (sHist.size() > mem) {
                sHist.erase(sHist.begin());
                yHist.erase(yHist.begin());
                rhoHist.erase(rhoHist.begin());
            }
        }
        x = std::move(xn);
        fx = fn;
        g = std::move(gn);
        if (trace) trace->push_back(fx);
    }
    return it;
}

}  // namespace

std::pair<double, double> evaluate(const std::vector<double>& coinParams,
                                   const std::array<cplx, 2>& initialCoin,
                                   const std::array<cplx, 2>& projectionBra,
                                   const TargetSuperposition& target) {
    if (coinParams.size() % 3 != 0)
        throw std::invalid_argument("evaluate: coinParams must be 3 per step");
    ParamLayout lay{static_cast<int>(coinParams.size() / 3), false, false};
    return eval_point(coinParams, lay, initialCoin, projectionBra, target);
}

OptimizeResult optimize_coins(const TargetSuperposition& target, int nSteps,
                              const OptimizerOptions& options) {
    if (nSteps < target.size() - 1)
        throw std::invalid_argument(
            "optimize_coins: need at least target_size - 1 steps");
    ParamLayout lay{nSteps, options.optimizeProjection, options.optimizeInitialCoin};
    int maxIter = options.maxIterations > 0 ? options.maxIterations : 2000 * nSteps;
    std::array<cplx, 2> defaultInit{cplx(1, 0), cplx(0, 0)};
    std::array<cplx, 2> defaultBra = plus_bra();

    auto fmin = [&](const std::vector<double>& x) {
        auto [f, p] = eval_point(x, lay, defaultInit, defaultBra, target);
        return -(f + options.probWeight * p);
    };

    OptimizeResult best;
    double bestVal = 1.0;  // minimized objective; anything found beats this
    for (int r = 0; r < std::max(options.restarts, 1); ++r) {
        Rng rng = Rng::substream(options.seed, static_cast<std::uint64_t>(r));
        std::vector<double> x0(static_cast<size_t>(lay.dim()));
        for (int t = 0; t < nSteps; ++t) {
            x0[static_cast<size_t>(3 * t)] = rng.uniform(0.0, M_PI / 2);
            x0[static_cast<size_t>(3 * t + 1)] = rng.uniform(-M_PI, M_PI);
            x0[static_cast<size_t>(3 * t + 2)] = rng.uniform(-M_PI, M_PI);
        }
        for (int j = 3 * nSteps; j < lay.dim(); ++j)
            x0[static_cast<size_t>(j)] = rng.uniform(0.0, M_PI);

        std::vector<double> trace;
        NmResult nm = nelder_mead(fmin, std::move(x0), 0.4, maxIter / 2, 1e-13,
                                  &trace);
        double fx = nm.value;
        int polishIters =
            gradient_polish(fmin, nm.x, fx, std::min(maxIter / 2, 400), &trace);
        if (fx < bestVal) {
            bestVal = fx;
            best.coinParams.assign(nm.x.begin(), nm.x.begin() + 3 * nSteps);
            best.iterations = nm.iterations + polishIters;
            best.converged = nm.converged;
            best.bestTrace = std::move(trace);
            best.solution.coins.clear();
            for (int t = 0; t < nSteps; ++t)
                best.solution.coins.push_back(CoinOperator(coin_matrix(
                    nm.x[static_cast<size_t>(3 * t)], nm.x[static_cast<size_t>(3 * t + 1)],
                    nm.x[static_cast<size_t>(3 * t + 2)])));
            size_t k = static_cast<size_t>(3 * nSteps);
            best.solution.projection = defaultBra;
            if (lay.optProj) {
                best.solution.projection = spinor_from_angles(nm.x[k], nm.x[k + 1]);
                k += 2;
            }
            best.solution.initialCoin = defaultInit;
            if (lay.optInit)
                best.solution.initialCoin = spinor_from_angles(nm.x[k], nm.x[k + 1]);
        }
    }

    // Forward-verify the reported figures.
    WalkerState s = run_walk(best.solution.initialCoin, best.solution.coins);
    ProjectionResult proj = project_coin(s, best.solution.projection);
    best.solution.fullState = s;
    best.solution.probability = proj.probability;
    best.solution.fidelity =
        proj.probability > 0.0 ? target.fidelity(proj.normalizedTarget()) : 0.0;

    // The trace reports the best objective seen so far, monotonically.
    double runmax = 0.0;
    for (auto& v : best.bestTrace) {
        runmax = std::max(runmax, -v);
        v = runmax;
    }
    return best;
}

}  // namespace qwalk
