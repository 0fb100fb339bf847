#include "qwalk/engineering.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "qwalk/rng.hpp"

namespace qwalk {

namespace {

// Unnormalized amplitude table of the Eq.-12 parametrization.
std::vector<SiteAmp> raw_table(const TargetSuperposition& u,
                               const std::vector<cplx>& d) {
    int n = u.size() - 1;
    std::vector<SiteAmp> amps(static_cast<size_t>(n) + 1);
    amps[0] = SiteAmp{u[0], 0.0};
    for (int i = 1; i < n; ++i)
        amps[static_cast<size_t>(i)] =
            SiteAmp{u[i] - d[static_cast<size_t>(i - 1)], d[static_cast<size_t>(i - 1)]};
    amps[static_cast<size_t>(n)] = SiteAmp{0.0, u[n]};
    return amps;
}

double raw_squared_norm(const std::vector<SiteAmp>& amps) {
    double s = 0.0;
    for (const auto& a : amps) s += std::norm(a.up) + std::norm(a.dn);
    return s;
}

}  // namespace

WalkerState assemble_full_state(const TargetSuperposition& target,
                                const std::vector<cplx>& d) {
    int n = target.size() - 1;
    if (static_cast<int>(d.size()) != n - 1)
        throw std::invalid_argument("assemble_full_state: need n-1 d parameters");
    WalkerState st(1, raw_table(target, d));
    st.normalize();
    return st;
}

std::vector<cplx> d_residuals(const TargetSuperposition& target,
                              const std::vector<cplx>& d) {
    int n = target.size() - 1;
    if (static_cast<int>(d.size()) != n - 1)
        throw std::invalid_argument("d_residuals: need n-1 d parameters");
    auto amps = raw_table(target, d);
    std::vector<cplx> res(static_cast<size_t>(n - 1));
    auto v = [&](int i) {  // v_i, 1-based
        return VVector{amps[static_cast<size_t>(i - 1)].up,
                       amps[static_cast<size_t>(i)].dn};
    };
    for (int s = 1; s <= n - 1; ++s) {
        cplx r = 0.0;
        for (int i = 1; i <= s; ++i) r += v(i).dot(v(n - s + i));
        res[static_cast<size_t>(s - 1)] = r;
    }
    return res;
}

double d_probability(const TargetSuperposition& target,
                     const std::vector<cplx>& d) {
    return 1.0 / (2.0 * raw_squared_norm(raw_table(target, d)));
}

double projection_probability_2step_closed_form(double u1, double u2) {
    double rest = 1.0 - u1 * u1 - u2 * u2;
    if (rest < -1e-12)
        throw std::invalid_argument(
            "projection_probability_2step_closed_form: u1^2 + u2^2 > 1");
    double u3 = std::sqrt(std::max(rest, 0.0));
    // u1 = u3 zeroes the numerator, and at u2 = 0 also the denominator
    // (1 - 2 u1 u3 reduces to u2^2 there); the probability limit is 0.
    if (std::abs(u1 - u3) < 1e-12) return 0.0;
    double num = (u1 - u3) * (u1 - u3);
    double den = 2.0 * (1.0 - u2 * u2) * (1.0 - 2.0 * u1 * u3);
    return num / den;
}

std::optional<cplx> solve_d2_family_member(const TargetSuperposition& target,
                                           double dI) {
    if (target.size() != 3) return std::nullopt;
    cplx u1 = target[0], u2 = target[1], u3 = target[2];
    cplx alpha = -std::conj(u1), beta = u3;
    cplx c = -std::conj(u1) * u2;
    double mag = std::max(std::abs(alpha), std::abs(beta));
    if (mag < TOL_ZERO) {
        // u1 = u3 = 0: every d solves; the max-probability point is u2/2.
        cplx k = std::abs(u2) > TOL_ZERO ? cplx(0, 1) * u2 / std::abs(u2)
                                         : cplx(0, 1);
        return u2 / 2.0 + dI * k;
    }
    if (std::abs(std::abs(alpha) - std::abs(beta)) > 1e-10 * mag)
        return std::nullopt;  // nondegenerate, no family
    // Kernel direction k of d -> alpha d + beta conj(d).
    double psi = -std::arg(-alpha / beta) / 2.0;
    cplx k = std::exp(cplx(0, psi));
    if (k.imag() < -TOL_ZERO || (std::abs(k.imag()) <= TOL_ZERO && k.real() < 0))
        k = -k;
    cplx rho = cplx(0, 1) * alpha * k;  // range direction, M(i k) = 2 rho
    cplx gamma = c / rho;
    if (std::abs(gamma.imag()) > 1e-9 * std::max(1.0, std::abs(gamma)))
        return std::nullopt;  // inconsistent: target unreachable in 2 steps
    cplx dp0 = cplx(0, 1) * k * gamma.real() / 2.0;
    // Slide along the kernel to the minimum-norm (max probability) member.
    double t = std::real(std::conj(u2) * k) / 2.0 -
               std::real(std::conj(k) * dp0);
    return dp0 + (t + dI) * k;
}

D2Result solve_d2(const TargetSuperposition& target) {
    if (target.size() != 3)
        throw std::invalid_argument("solve_d2: target must span 3 sites");
    cplx u1 = target[0], u2 = target[1], u3 = target[2];
    D2Result out;
    auto push = [&](cplx d2) {
        std::vector<cplx> d{d2};
        auto r = d_residuals(target, d);
        out.solutions.push_back(
            DSolution{d, std::abs(r[0]), d_probability(target, d)});
    };
    double det = std::norm(u1) - std::norm(u3);
    if (std::abs(det) > 1e-10) {
        push(u1 * (std::conj(u1) * u2 + std::conj(u2) * u3) / det);
        return out;
    }
    // Degenerate |u1| = |u3| branch: one-parameter family when consistent,
    // sampled on a fixed grid around the maximum-probability member.
    static constexpr double grid[] = {0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0};
    bool any = false;
    for (double dI : grid) {
        if (auto d2 = solve_d2_family_member(target, dI)) {
            push(*d2);
            any = true;
        }
    }
    if (!any)
        out.diagnostic =
            "degenerate target (|u1| = |u3|) fails the consistency conditions; "
            "no 2-step solution exists and the projection probability vanishes "
            "in the u1 -> u3 limit";
    return out;
}

namespace {

std::vector<cplx> unpack_d(const Eigen::VectorXd& x, size_t m) {
    std::vector<cplx> d(m);
    for (size_t i = 0; i < m; ++i)
        d[i] = cplx(x[static_cast<long>(2 * i)], x[static_cast<long>(2 * i + 1)]);
    return d;
}

Eigen::VectorXd real_residual(const TargetSuperposition& target,
                              const Eigen::VectorXd& x) {
    size_t m = static_cast<size_t>(x.size()) / 2;
    auto r = d_residuals(target, unpack_d(x, m));
    Eigen::VectorXd out(x.size());
    for (size_t i = 0; i < m; ++i) {
        out[static_cast<long>(2 * i)] = r[i].real();
        out[static_cast<long>(2 * i + 1)] = r[i].imag();
    }
    return out;
}

// Projectivized residual: x = (g, rho) with d = g / rho. Multiplying each
// constraint by rho^2 keeps everything O(1) even for roots far from the
// origin; the last entry pins |g| = 1.
Eigen::VectorXd scaled_residual(const TargetSuperposition& target,
                                const Eigen::VectorXd& x) {
    long m2 = x.size() - 1;
    size_t m = static_cast<size_t>(m2) / 2;
    double rho = x[m2];
    // Split the constraints into homogeneous degrees: F(d) = Q(d) + L(d) + c
    // evaluated via three probes (exact for quadratics).
    std::vector<cplx> g = unpack_d(x.head(m2), m);
    std::vector<cplx> zero(m, cplx{});
    std::vector<cplx> mg(m);
    for (size_t i = 0; i < m; ++i) mg[i] = -g[i];
    auto fp = d_residuals(target, g);
    auto fm = d_residuals(target, mg);
    auto f0 = d_residuals(target, zero);
    Eigen::VectorXd out(x.size());
    double gnorm2 = 0.0;
    for (size_t i = 0; i < m; ++i) gnorm2 += std::norm(g[i]);
    for (size_t i = 0; i < m; ++i) {
        cplx q = 0.5 * (fp[i] + fm[i]) - f0[i];       // Q(g)
        cplx l = 0.5 * (fp[i] - fm[i]);               // L(g)
        cplx r = q + rho * l + rho * rho * f0[i];
        out[static_cast<long>(2 * i)] = r.real();
        out[static_cast<long>(2 * i + 1)] = r.imag();
    }
    out[m2] = gnorm2 - 1.0;
    return out;
}

// Central differences are exact for the quadratic constraint maps.
template <typename F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& x) {
    const double h = 1e-6;
    Eigen::VectorXd f0 = f(x);
    Eigen::MatrixXd J(f0.size(), x.size());
    Eigen::VectorXd xp = x, xm = x;
    for (long j = 0; j < x.size(); ++j) {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        J.col(j) = (f(xp) - f(xm)) / (2 * h);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return J;
}

template <typename F>
bool newton_solve(F&& f, Eigen::VectorXd& x, int maxIter) {
    Eigen::VectorXd r = f(x);
    for (int it = 0; it < maxIter; ++it) {
        if (r.lpNorm<Eigen::Infinity>() < 1e-12) return true;
        Eigen::MatrixXd J = fd_jacobian(f, x);
        Eigen::VectorXd dx = J.fullPivLu().solve(-r);
        if (!dx.allFinite()) return false;
        double r0 = r.norm();
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 10; ++bt) {
            Eigen::VectorXd xn = x + t * dx;
            Eigen::VectorXd rn = f(xn);
            if (rn.norm() < (1.0 - 0.1 * t) * r0 || rn.norm() < 1e-13) {
                x = xn;
                r = rn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) return r.lpNorm<Eigen::Infinity>() < 1e-12;
    }
    return r.lpNorm<Eigen::Infinity>() < 1e-12;
}

}  // namespace

std::vector<DSolution> solve_d_system(const TargetSuperposition& target,
                                      const DSolveOptions& opts) {
    int n = target.size() - 1;
    if (n < 2 || n > N_MAX_POLY)
        throw std::invalid_argument("solve_d_system: need 2 <= n <= " +
                                    std::to_string(N_MAX_POLY));
    long dim = 2 * (n - 1);
    int restarts = opts.restartsPerStep * n;
    double sigma = 2.0 / std::sqrt(static_cast<double>(n + 1));
    std::vector<DSolution> found;
    Rng rng(splitmix64(opts.seed));
    auto fdirect = [&](const Eigen::VectorXd& x) {
        return real_residual(target, x);
    };
    auto fscaled = [&](const Eigen::VectorXd& x) {
        return scaled_residual(target, x);
    };
    // Roots are represented projectively as x = (g, rho) with |g| = 1,
    // rho > 0 and d = g / rho: this keeps acceptance, residual checks and
    // deduplication well-conditioned even for roots of enormous |d|
    // (near-vanishing projection probability), where arithmetic in the
    // original variables drowns in cancellation.
    std::vector<Eigen::VectorXd> roots;
    auto try_accept = [&](Eigen::VectorXd x) {
        if (x[dim] < 0) x = -x;
        double rho = x[dim];
        if (rho < 1e-11) return;  // root at infinity
        Eigen::VectorXd r = scaled_residual(target, x);
        if (r.lpNorm<Eigen::Infinity>() > opts.residualTol) return;
        for (const auto& known : roots)
            if ((x - known).norm() < opts.dedupRadius) return;
        // Reject non-isolated pseudo-roots: points deep in the near-ray
        // tube pass the residual test but have a machine-singular Jacobian,
        // while genuine roots stay comfortably isolated.
        Eigen::MatrixXd J = fd_jacobian(fscaled, x);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
        if (svd.singularValues()(J.cols() - 1) < 1e-12) return;
        std::vector<cplx> d = unpack_d(x.head(dim), static_cast<size_t>(n - 1));
        for (auto& v : d) v /= rho;
        double rmax = 0.0;
        for (const auto& rr : d_residuals(target, d))
            rmax = std::max(rmax, std::abs(rr));
        double p = d_probability(target, d);
        roots.push_back(std::move(x));
        found.push_back(DSolution{std::move(d), rmax, p});
    };
    auto to_projective = [&](const Eigen::VectorXd& xd) {
        Eigen::VectorXd x(dim + 1);
        double dn = xd.norm();
        if (dn < 1e-300) return x;  // left empty; caller skips
        x.head(dim) = xd / dn;
        x[dim] = 1.0 / dn;
        return x;
    };
    // Saturation-driven restarts: run at least `restarts`, then keep going
    // while discoveries are recent, up to a hard cap. Targets whose far
    // roots hide in small basins get extra effort automatically.
    static constexpr double scales[] = {1.0, 1.0, 3.0, 10.0};
    int lastFound = 0;
    int window = std::max(restarts / 2, 200);
    int cap = 10 * restarts;
    for (int rs = 0; rs < cap; ++rs) {
        if (rs >= restarts && rs - lastFound >= window) break;
        size_t before = found.size();
        if (rs % 2 == 0) {
            // Direct phase: Gaussian starts over a few scales catch the
            // roots of ordinary magnitude.
            double scale = sigma * scales[(rs / 2) % 4];
            Eigen::VectorXd x(dim);
            for (long j = 0; j < dim; ++j) x[j] = scale * rng.normal();
            if (!newton_solve(fdirect, x, opts.maxIterations)) continue;
            if (x.norm() < 1e-300) continue;
            Eigen::VectorXd xp = to_projective(x);
            newton_solve(fscaled, xp, 8);  // tighten in clean coordinates
            try_accept(std::move(xp));
        } else {
            // Projectivized phase: random unit g and small rho seed the
            // basins of the far roots directly.
            Eigen::VectorXd x(dim + 1);
            double gn = 0.0;
            for (long j = 0; j < dim; ++j) {
                x[j] = rng.normal();
                gn += x[j] * x[j];
            }
            gn = std::sqrt(gn);
            for (long j = 0; j < dim; ++j) x[j] /= gn;
            // Log-uniform |rho| reaches the far-root regime (tiny projection
            // probability) with the same effort as the ordinary one.
            double mag = std::pow(10.0, rng.uniform(-6.0, 0.0));
            x[dim] = rng.uniform() < 0.5 ? mag : -mag;
            if (!newton_solve(fscaled, x, opts.maxIterations)) continue;
            try_accept(std::move(x));
        }
        if (found.size() > before) lastFound = rs;
    }
    std::sort(found.begin(), found.end(), [](const DSolution& a, const DSolution& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        for (size_t i = 0; i < a.d.size(); ++i) {
            if (a.d[i].real() != b.d[i].real()) return a.d[i].real() < b.d[i].real();
            if (a.d[i].imag() != b.d[i].imag()) return a.d[i].imag() < b.d[i].imag();
        }
        return false;
    });
    return found;
}

EngineeringSolution solution_from_d(const TargetSuperposition& target,
                                    const std::vector<cplx>& d) {
    WalkerState full = assemble_full_state(target, d);
    BacksolveResult bs = backsolve_auto(full);
    WalkerState forward = run_walk(bs.initialCoin, bs.coins);
    ProjectionResult proj = project_coin(forward, plus_bra());
    EngineeringSolution sol;
    sol.d = d;
    sol.fullState = forward;
    sol.coins = std::move(bs.coins);
    sol.initialCoin = bs.initialCoin;
    sol.projection = plus_bra();
    sol.probability = proj.probability;
    sol.fidelity = target.fidelity(proj.normalizedTarget());
    return sol;
}

std::vector<EngineeringSolution> engineer_target(const TargetSuperposition& target,
                                                 const EngineerOptions& opts) {
    int n = target.size() - 1;
    std::vector<DSolution> dsols;
    if (n == 1) {
        dsols.push_back(DSolution{{}, 0.0, 0.5});
    } else if (n == 2) {
        dsols = solve_d2(target).solutions;
    } else {
        DSolveOptions dopts = opts.dsolve;
        dopts.seed = dopts.seed == 0 ? opts.seed : dopts.seed;
        dsols = solve_d_system(target, dopts);
    }
    std::vector<EngineeringSolution> out;
    for (const auto& ds : dsols) {
        EngineeringSolution sol = solution_from_d(target, ds.d);
        if (sol.fidelity > 1.0 - 1e-9) out.push_back(std::move(sol));
        if (opts.maxSolutions > 0 &&
            static_cast<int>(out.size()) >= opts.maxSolutions)
            break;
    }
    return out;
}

}  // namespace qwalk
