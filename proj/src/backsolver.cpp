#include "qwalk/backsolver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>

namespace qwalk {

CoinOperator solve_last_coin(const WalkerState& state, double alpha, double tol) {
    int first = std::min(state.origin(), 1);
    int last = state.last_label();
    if (last - first < 1)
        throw std::invalid_argument("solve_last_coin: need at least 2 sites");
    VVector v1{state.up_at(first), state.dn_at(first + 1)};
    VVector vn{state.up_at(last - 1), state.dn_at(last)};
    double scale = std::max(state.squared_norm(), 1.0);
    // For a single-step state v_1 and v_n coincide and there is no
    // orthogonality condition; C_n is fixed by its first column alone.
    if (last - first >= 2) {
        double ortho = std::abs(v1.dot(vn));
        if (ortho > tol * scale)
            throw not_reachable_error(
                "solve_last_coin: v_1 and v_n are not orthogonal (|v1.vn| = " +
                    std::to_string(ortho) + ")",
                ortho);
    }
    // Either column determines the coin; pick the better-conditioned one.
    // The direction of a vector of norm r carries relative rounding ~eps/r,
    // so always deriving the coin from v_1 destabilizes walks whose weight
    // has drifted away from the left edge. The degenerate-layer cutoff is a
    // fixed tiny epsilon, independent of the reachability tolerance.
    double dead = TOL_ZERO * std::sqrt(scale);
    if (v1.norm() >= vn.norm() && v1.norm() > dead)
        return coin_from_first_column(v1.up, v1.dn, alpha);
    if (vn.norm() > dead) {
        // Second column fixed by v_n, first by its orthogonal complement.
        cplx nup = vn.up / vn.norm(), ndn = vn.dn / vn.norm();
        cplx ph = std::exp(cplx(0, alpha));
        return CoinOperator(Mat2{std::conj(ndn), ph * nup,
                                 -std::conj(nup), ph * ndn});
    }
    // Fully degenerate layer: any unitary works.
    return CoinOperator::identity();
}

CoinOperator solve_first_coin(const WalkerState& stateAfter1,
                              const std::array<cplx, 2>& initialCoin) {
    if (std::abs(stateAfter1.dn_at(1)) > 1e-6 ||
        std::abs(stateAfter1.up_at(2)) > 1e-6 || stateAfter1.last_label() > 2)
        throw std::invalid_argument(
            "solve_first_coin: state is not a valid 1-step layer");
    cplx w0 = stateAfter1.up_at(1), w1 = stateAfter1.dn_at(2);
    double wn = std::sqrt(std::norm(w0) + std::norm(w1));
    double gn = std::sqrt(std::norm(initialCoin[0]) + std::norm(initialCoin[1]));
    if (std::abs(wn - 1.0) > 1e-6 || std::abs(gn - 1.0) > 1e-6)
        throw std::invalid_argument(
            "solve_first_coin: layer and initial coin must be unit norm");
    w0 /= wn;
    w1 /= wn;
    cplx g0 = initialCoin[0] / gn, g1 = initialCoin[1] / gn;
    // C = w g^dag + w_perp g_perp^dag
    cplx p0 = -std::conj(w1), p1 = std::conj(w0);
    cplx q0 = -std::conj(g1), q1 = std::conj(g0);
    Mat2 m{w0 * std::conj(g0) + p0 * std::conj(q0),
           w0 * std::conj(g1) + p0 * std::conj(q1),
           w1 * std::conj(g0) + p1 * std::conj(q0),
           w1 * std::conj(g1) + p1 * std::conj(q1)};
    return CoinOperator(m);
}

namespace {

// Extended-precision scalar for the peel. The backward recursion amplifies
// rounding by roughly the inverse of the edge v-vector norms it divides by;
// compounded over ~15 steps that can reach 1e15, which in double precision
// puts the recovered coins off by ~1e-4 and in 80-bit long double still by
// ~1e-8. Quad precision (eps ~ 1e-34) leaves the surviving error far below
// the round-trip fidelity budget; forward replay of the (double-rounded)
// coins is unitary and does not amplify it back.
#if defined(__SIZEOF_FLOAT128__) && !defined(__clang__)
using preal = __float128;
inline preal psqrt(preal x) { return __builtin_sqrtf128(x); }
#else
using preal = long double;
inline preal psqrt(preal x) { return std::sqrt(x); }
#endif

struct pcplx {
    preal re{}, im{};
    pcplx() = default;
    pcplx(preal r, preal i) : re(r), im(i) {}
    pcplx(cplx z) : re(z.real()), im(z.imag()) {}
    pcplx conj() const { return {re, -im}; }
    preal norm() const { return re * re + im * im; }
    preal abs() const { return psqrt(norm()); }
    cplx to_double() const {
        return {static_cast<double>(re), static_cast<double>(im)};
    }
    friend pcplx operator+(pcplx a, pcplx b) { return {a.re + b.re, a.im + b.im}; }
    friend pcplx operator-(pcplx a) { return {-a.re, -a.im}; }
    friend pcplx operator*(pcplx a, pcplx b) {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    friend pcplx operator/(pcplx a, preal s) { return {a.re / s, a.im / s}; }
};

struct PAmp {
    pcplx up{}, dn{};
};

struct PeeledWalk {
    std::vector<CoinOperator> coins;  // C_n, ..., C_2 in peel order
    cplx layerUp{}, layerDn{};        // remaining 1-step layer
    // Interior layer tables, free coordinates only: tables[k] (k = 1..n-1)
    // holds [up(site 1..k), dn(site 2..k+1)] of the k-step layer. They come
    // out of the peel itself, so together with the coins they satisfy the
    // backward recursion to working precision; the only inconsistencies are
    // the dropped extremal amplitudes.
    std::vector<Eigen::VectorXcd> tables;
};

// One dry back-recursion sweep collecting, per level, the complex v1.vn
// product and the two extremal amplitudes the back-step discards. All of
// them vanish identically on exactly reachable states, so together they
// are a local defining system for the reachable set.
std::vector<preal> peel_defects(std::vector<PAmp> a, int n) {
    std::vector<preal> R(static_cast<size_t>(6 * (n - 1)));
    size_t idx = 0;
    for (int k = n; k >= 2; --k) {
        pcplx v1u = a[0].up, v1d = a[1].dn;
        pcplx vnu = a[static_cast<size_t>(k - 1)].up,
              vnd = a[static_cast<size_t>(k)].dn;
        pcplx dot = v1u.conj() * vnu + v1d.conj() * vnd;
        R[idx++] = dot.re;
        R[idx++] = dot.im;
        R[idx++] = a[0].dn.re;
        R[idx++] = a[0].dn.im;
        R[idx++] = a[static_cast<size_t>(k)].up.re;
        R[idx++] = a[static_cast<size_t>(k)].up.im;
        preal n1 = psqrt(v1u.norm() + v1d.norm());
        preal nn = psqrt(vnu.norm() + vnd.norm());
        pcplx m00, m01, m10, m11;
        preal dead = preal(1e-300);
        if (n1 >= nn && n1 > dead) {
            pcplx cu = v1u / n1, cd = v1d / n1;
            m00 = cu;
            m10 = cd;
            m01 = -cd.conj();
            m11 = cu.conj();
        } else if (nn > dead) {
            pcplx cu = vnu / nn, cd = vnd / nn;
            m00 = cd.conj();
            m10 = -cu.conj();
            m01 = cu;
            m11 = cd;
        } else {
            m00 = m11 = pcplx{1, 0};
            m01 = m10 = pcplx{0, 0};
        }
        std::vector<PAmp> b(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            pcplx up = a[static_cast<size_t>(i)].up;
            pcplx dn = a[static_cast<size_t>(i) + 1].dn;
            b[static_cast<size_t>(i)].up = m00.conj() * up + m10.conj() * dn;
            b[static_cast<size_t>(i)].dn = m01.conj() * up + m11.conj() * dn;
        }
        a = std::move(b);
    }
    return R;
}

// The n-step reachability residuals evaluated in extended precision:
// vanishing extremal components plus the anti-diagonal partial sums of
// v-vector overlaps. Unlike the per-level peel defects these are plain
// quadratics in the amplitudes with O(1) coefficients, so Gauss-Newton on
// them is benign.
std::vector<preal> reach_defects(const std::vector<PAmp>& a, int n) {
    std::vector<preal> R;
    R.reserve(static_cast<size_t>(2 * (n + 1)));
    R.push_back(a[0].dn.re);
    R.push_back(a[0].dn.im);
    R.push_back(a[static_cast<size_t>(n)].up.re);
    R.push_back(a[static_cast<size_t>(n)].up.im);
    for (int s = 1; s <= n - 1; ++s) {
        pcplx r{0, 0};
        for (int t = 0; t < s; ++t) {
            int j = n - s + t;
            r = r + a[static_cast<size_t>(t)].up.conj() *
                        a[static_cast<size_t>(j)].up +
                a[static_cast<size_t>(t) + 1].dn.conj() *
                    a[static_cast<size_t>(j) + 1].dn;
        }
        R.push_back(r.re);
        R.push_back(r.im);
    }
    return R;
}

// The back-recursion amplifies the input's off-manifold component through
// every thin level, so even input rounding (~1e-16) can surface as ~1e-4
// coin defects on ill-conditioned walks. The component itself is tiny,
// and the reachability residuals are an explicit local defining system
// for the manifold: project the input onto their zero set in extended
// precision first, then peel the projected state. Gauss-Newton converges
// quadratically here, taking the off-manifold distance to ~1e-30 where
// the peel's amplification is harmless.
void project_to_reachable(std::vector<PAmp>& a, int n) {
    if (n < 2) return;
    int np = 4 * (n + 1);
    int nr = 2 * (n + 1);
    const preal h = preal(1e-20);
    auto slot_of = [](std::vector<PAmp>& v, int p) -> preal* {
        int site = p / 4;
        switch (p % 4) {
            case 0: return &v[static_cast<size_t>(site)].up.re;
            case 1: return &v[static_cast<size_t>(site)].up.im;
            case 2: return &v[static_cast<size_t>(site)].dn.re;
            default: return &v[static_cast<size_t>(site)].dn.im;
        }
    };
    auto norm_of = [&](const std::vector<preal>& R) {
        preal s = 0;
        for (preal r : R) s += r * r;
        return static_cast<double>(psqrt(s));
    };
    double bestNorm = norm_of(reach_defects(a, n));
    for (int pass = 0; pass < 6; ++pass) {
        std::vector<preal> R = reach_defects(a, n);
        double rn = norm_of(R);
        if (rn < 1e-28) break;
        Eigen::MatrixXd J(nr, np);
        Eigen::VectorXd Rd(nr);
        for (int i = 0; i < nr; ++i) Rd[i] = static_cast<double>(R[static_cast<size_t>(i)]);
        for (int p = 0; p < np; ++p) {
            std::vector<PAmp> ap = a;
            *slot_of(ap, p) += h;
            std::vector<preal> Rp = reach_defects(ap, n);
            for (int i = 0; i < nr; ++i)
                J(i, p) = static_cast<double>(
                    (Rp[static_cast<size_t>(i)] - R[static_cast<size_t>(i)]) / h);
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(
            J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-12);
        Eigen::VectorXd d = svd.solve(-Rd);
        if (!(d.norm() < 1e-6)) break;
        bool accepted = false;
        for (double tau = 1.0; tau > 1e-3 && !accepted; tau *= 0.5) {
            std::vector<PAmp> an = a;
            for (int p = 0; p < np; ++p)
                *slot_of(an, p) += static_cast<preal>(tau * d[p]);
            double newNorm = norm_of(reach_defects(an, n));
            if (std::getenv("QWALK_PROJ_DEBUG"))
                std::fprintf(stderr,
                             "proj pass=%d |R|=%.3e tau=%.3f -> %.3e |d|=%.3e\n",
                             pass, rn, tau, newNorm, d.norm());
            if (newNorm < bestNorm) {
                bestNorm = newNorm;
                a = std::move(an);
                accepted = true;
            }
        }
        if (!accepted) break;
    }
}

PeeledWalk peel_walk(const WalkerState& state, int n,
                     const std::vector<double>& alphas, double tol_peel) {
    int lo = std::min(state.origin(), 1);
    std::vector<PAmp> a(static_cast<size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        a[static_cast<size_t>(i)].up = state.up_at(lo + i);
        a[static_cast<size_t>(i)].dn = state.dn_at(lo + i);
    }
    if (std::getenv("QWALK_PROJECT")) project_to_reachable(a, n);
    preal scale = 0;
    for (const auto& s : a) scale += s.up.norm() + s.dn.norm();
    if (scale < 1) scale = 1;
    preal amp_tol = static_cast<preal>(tol_peel) * psqrt(scale);
    preal dead = static_cast<preal>(TOL_ZERO) * psqrt(scale);

    PeeledWalk out;
    out.coins.reserve(static_cast<size_t>(n));
    for (int k = n; k >= 2; --k) {
        pcplx v1u = a[0].up, v1d = a[1].dn;
        pcplx vnu = a[static_cast<size_t>(k - 1)].up,
              vnd = a[static_cast<size_t>(k)].dn;
        preal ortho = (v1u.conj() * vnu + v1d.conj() * vnd).abs();
        if (ortho > static_cast<preal>(tol_peel) * scale)
            throw not_reachable_error(
                "backsolve: step " + std::to_string(k) +
                    ": v_1 and v_n are not orthogonal (|v1.vn| = " +
                    std::to_string(static_cast<double>(ortho)) + ")",
                static_cast<double>(ortho));
        preal extremal = a[0].dn.abs();
        if (a[static_cast<size_t>(k)].up.abs() > extremal)
            extremal = a[static_cast<size_t>(k)].up.abs();
        if (extremal > amp_tol)
            throw not_reachable_error(
                "backsolve: step " + std::to_string(k) +
                    ": extremal amplitudes do not vanish",
                static_cast<double>(extremal));
        if (std::getenv("QWALK_PEEL_DEBUG"))
            std::fprintf(stderr,
                         "peel k=%d |v1|=%.3e |vn|=%.3e ortho=%.3e drop0=%.3e dropk=%.3e\n",
                         k, static_cast<double>(psqrt(v1u.norm() + v1d.norm())),
                         static_cast<double>(psqrt(vnu.norm() + vnd.norm())),
                         static_cast<double>(ortho),
                         static_cast<double>(a[0].dn.abs()),
                         static_cast<double>(a[static_cast<size_t>(k)].up.abs()));
        double alpha = alphas.empty() ? 0.0 : alphas[static_cast<size_t>(k - 2)];
        pcplx ph{std::cos(static_cast<long double>(alpha)),
                 std::sin(static_cast<long double>(alpha))};
        preal n1 = psqrt(v1u.norm() + v1d.norm());
        preal nn = psqrt(vnu.norm() + vnd.norm());
        pcplx m00, m01, m10, m11;
        bool useFirst = n1 >= nn;
        if (const char* fm = std::getenv("QWALK_PEEL_FLIP"))
            if (std::atoll(fm) & (1ll << (k - 2))) useFirst = !useFirst;
        if (useFirst && n1 > dead) {
            // First column from v_1, alpha-phased complement as second.
            pcplx cu = v1u / n1, cd = v1d / n1;
            m00 = cu;
            m10 = cd;
            m01 = -(ph * cd.conj());
            m11 = ph * cu.conj();
        } else if (nn > dead) {
            // Second column from v_n, complement as first.
            pcplx cu = vnu / nn, cd = vnd / nn;
            m00 = cd.conj();
            m10 = -cu.conj();
            m01 = ph * cu;
            m11 = ph * cd;
        } else {
            m00 = m11 = pcplx{1, 0};
            m01 = m10 = pcplx{0, 0};
        }
        // Inverse step: undo the shift, then apply the adjoint coin.
        std::vector<PAmp> b(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            pcplx up = a[static_cast<size_t>(i)].up;
            pcplx dn = a[static_cast<size_t>(i) + 1].dn;
            b[static_cast<size_t>(i)].up = m00.conj() * up + m10.conj() * dn;
            b[static_cast<size_t>(i)].dn = m01.conj() * up + m11.conj() * dn;
        }
        a = std::move(b);
        out.coins.push_back(CoinOperator(Mat2{m00.to_double(), m01.to_double(),
                                              m10.to_double(), m11.to_double()}));
        if (k >= 2) {
            Eigen::VectorXcd tab(2 * (k - 1));
            for (int i = 0; i < k - 1; ++i) {
                tab[i] = a[static_cast<size_t>(i)].up.to_double();
                tab[k - 1 + i] = a[static_cast<size_t>(i) + 1].dn.to_double();
            }
            out.tables.push_back(std::move(tab));
        }
    }
    std::reverse(out.tables.begin(), out.tables.end());
    out.layerUp = a[0].up.to_double();
    out.layerDn = a[1].dn.to_double();
    return out;
}

// i*I, i*sx, i*sy, i*sz: right-multiplied generators of u2_exp.
const Mat2 kGens[4] = {Mat2{cplx(0, 1), 0, 0, cplx(0, 1)},
                       Mat2{0, cplx(0, 1), cplx(0, 1), 0},
                       Mat2{0, 1, -1, 0},
                       Mat2{cplx(0, 1), 0, 0, cplx(0, -1)}};

// exp(i (e0 I + e1 sx + e2 sy + e3 sz)), exactly unitary.
Mat2 u2_exp(double e0, double e1, double e2, double e3) {
    double a = std::sqrt(e1 * e1 + e2 * e2 + e3 * e3);
    double c = std::cos(a), s = a > 0 ? std::sin(a) / a : 1.0;
    cplx i(0, 1);
    Mat2 m{c + i * s * e3, s * (i * e1 + e2), s * (i * e1 - e2), c - i * s * e3};
    return std::polar(1.0, e0) * m;
}

// Polish of a coin sequence against the target state. The constructive
// peel amplifies the rounding already present in the input amplitudes by
// the inverse edge v-vector norms, leaving coins off by up to ~1e-2 on
// ill-conditioned walks; no peel-side precision can undo noise the input
// itself carries. The replayed state stays on the unit sphere, so
// minimizing its component orthogonal to the target ray drives
// 1 - fidelity to the square of the residual norm.
//
// Two phases are needed. Gauss-Newton converges fast in the generic case
// but near thin layers (tiny v-vectors) the reachable manifold bends with
// curvature ~ 1/|v|, and projecting a point that sits past the center of
// curvature has spurious GN stationary points: the dropped curvature term
// <r, d2 psi> is O(1) there, and the true objective has a descent (often
// negative-curvature) direction GN cannot see. The rescue phase runs full
// Newton with analytic second derivatives (two-generator insertions into
// the walk) and escapes such saddles along the lowest Hessian eigenvector.
struct CoinPolisher {
    using Amp = std::array<cplx, 2>;

    int n = 0, ns = 0;
    std::array<cplx, 2> c0{};
    Eigen::VectorXcd tv;  // normalized target amplitudes
    std::vector<CoinOperator> coins;

    std::vector<Amp> stepm(const std::vector<Amp>& in, const Mat2& c) const {
        std::vector<Amp> out(static_cast<size_t>(ns), Amp{cplx{}, cplx{}});
        for (int i = 0; i < ns; ++i) {
            cplx up = in[static_cast<size_t>(i)][0];
            cplx dn = in[static_cast<size_t>(i)][1];
            out[static_cast<size_t>(i)][0] += c.a * up + c.b * dn;
            if (i + 1 < ns)
                out[static_cast<size_t>(i) + 1][1] += c.c * up + c.d * dn;
        }
        return out;
    }
    std::vector<std::vector<Amp>> prefixes(
        const std::vector<CoinOperator>& cs) const {
        std::vector<std::vector<Amp>> pre;
        pre.reserve(static_cast<size_t>(n) + 1);
        std::vector<Amp> s(static_cast<size_t>(ns), Amp{cplx{}, cplx{}});
        s[0] = {c0[0], c0[1]};
        pre.push_back(s);
        for (const auto& c : cs) {
            s = stepm(s, c.matrix());
            pre.push_back(s);
        }
        return pre;
    }
    Eigen::VectorXcd to_vec(const std::vector<Amp>& a) const {
        Eigen::VectorXcd v(2 * ns);
        for (int i = 0; i < ns; ++i) {
            v[2 * i] = a[static_cast<size_t>(i)][0];
            v[2 * i + 1] = a[static_cast<size_t>(i)][1];
        }
        return v;
    }
    // Component of the replay orthogonal to the target ray; this is linear
    // in the replayed vector, so all its derivatives are projected walk
    // derivatives.
    Eigen::VectorXcd ortho(const Eigen::VectorXcd& pv) const {
        return pv - tv.dot(pv) * tv;
    }
    Eigen::VectorXcd resid_of(const std::vector<CoinOperator>& cs) const {
        return ortho(to_vec(prefixes(cs).back()));
    }
    double rnorm() const { return resid_of(coins).norm(); }
    std::vector<CoinOperator> perturb(const std::vector<CoinOperator>& cs,
                                      const Eigen::VectorXd& e) const {
        std::vector<CoinOperator> out = cs;
        for (int k = 0; k < n; ++k)
            out[static_cast<size_t>(k)] = CoinOperator(
                cs[static_cast<size_t>(k)].matrix() *
                u2_exp(e[4 * k], e[4 * k + 1], e[4 * k + 2], e[4 * k + 3]));
        return out;
    }
    // Walk derivative: insert the generator at coin k, replay to the end.
    // Optionally record every level on the way for Hessian reuse.
    std::vector<Amp> dwalk(const std::vector<std::vector<Amp>>& pre, int k,
                           const Mat2& gen,
                           std::vector<std::vector<Amp>>* levels) const {
        std::vector<Amp> w = stepm(pre[static_cast<size_t>(k)],
                                   coins[static_cast<size_t>(k)].matrix() * gen);
        if (levels) levels->push_back(w);
        for (int l = k + 1; l < n; ++l) {
            w = stepm(w, coins[static_cast<size_t>(l)].matrix());
            if (levels) levels->push_back(w);
        }
        return w;
    }

    void gauss_newton(int maxIters, double stepCap = 0.05) {
        int np = 4 * n;
        auto pre = prefixes(coins);
        Eigen::VectorXcd rc = ortho(to_vec(pre.back()));
        for (int it = 0; it < maxIters && rc.norm() > 1e-12; ++it) {
            Eigen::MatrixXd J(4 * ns, np);
            for (int k = 0; k < n; ++k)
                for (int j = 0; j < 4; ++j) {
                    Eigen::VectorXcd dr =
                        ortho(to_vec(dwalk(pre, k, kGens[j], nullptr)));
                    for (int i = 0; i < 2 * ns; ++i) {
                        J(2 * i, 4 * k + j) = dr[i].real();
                        J(2 * i + 1, 4 * k + j) = dr[i].imag();
                    }
                }
            Eigen::VectorXd rr(4 * ns);
            for (int i = 0; i < 2 * ns; ++i) {
                rr[2 * i] = rc[i].real();
                rr[2 * i + 1] = rc[i].imag();
            }
            Eigen::BDCSVD<Eigen::MatrixXd> svd(
                J, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const Eigen::VectorXd& sig = svd.singularValues();
            Eigen::VectorXd utr = svd.matrixU().transpose() * rr;
            double mu = sig[0] * 1e-14;
            bool accepted = false;
            for (int tries = 0; tries < 24 && !accepted; ++tries) {
                Eigen::VectorXd coef(sig.size());
                for (int i = 0; i < sig.size(); ++i)
                    coef[i] = -sig[i] * utr[i] / (sig[i] * sig[i] + mu * mu);
                // Trust region: an almost undamped step can be huge along
                // near-null directions and hops to impostor basins (other
                // preimages that match the target to ~1e-5); keep steps small
                // enough that the iterate stays on the sheet the peel seeded.
                if (coef.norm() > stepCap) {
                    mu = std::max(mu * 30, sig[0] * 1e-12);
                    continue;
                }
                auto cand = perturb(coins, svd.matrixV() * coef);
                auto cpre = prefixes(cand);
                Eigen::VectorXcd crc = ortho(to_vec(cpre.back()));
                if (crc.norm() < rc.norm()) {
                    coins = std::move(cand);
                    pre = std::move(cpre);
                    rc = std::move(crc);
                    accepted = true;
                } else {
                    mu *= 30;
                }
            }
            if (std::getenv("QWALK_REFINE_DEBUG"))
                std::fprintf(stderr, "gn it=%d r=%.3e acc=%d\n", it,
                             rc.norm(), accepted ? 1 : 0);
            if (!accepted) break;
        }
    }

    // The exact preimages of a reachable target form an (n-1)-parameter
    // regauging family, so J always carries that many near-null (sloppy)
    // directions. A stalled residual whose left image sits over those
    // directions cannot be removed by any damped local step: the cure is a
    // finite excursion along the valley followed by a re-polish. Greedy
    // search over the sloppiest directions and a ladder of signed step
    // sizes; accepts only candidates that strictly shrink the residual.
    bool valley_hop(int rounds, int nDirs, double goal) {
        static const double kTaus[] = {0.25, -0.25, 0.5,  -0.5,
                                       1.0,  -1.0,  2.0,  -2.0};
        for (int round = 0; round < rounds; ++round) {
            double cur = rnorm();
            if (cur < goal) return true;
            int np = 4 * n;
            auto pre = prefixes(coins);
            Eigen::MatrixXd J(4 * ns, np);
            for (int k = 0; k < n; ++k)
                for (int j = 0; j < 4; ++j) {
                    Eigen::VectorXcd dr =
                        ortho(to_vec(dwalk(pre, k, kGens[j], nullptr)));
                    for (int i = 0; i < 2 * ns; ++i) {
                        J(2 * i, 4 * k + j) = dr[i].real();
                        J(2 * i + 1, 4 * k + j) = dr[i].imag();
                    }
                }
            Eigen::BDCSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
            int nv = static_cast<int>(svd.matrixV().cols());
            int m = std::min(nDirs, nv);
            std::vector<CoinOperator> bestCoins;
            double best = cur;
            for (int d = 0; d < m && best >= goal; ++d) {
                Eigen::VectorXd dir = svd.matrixV().col(nv - 1 - d);
                for (double tau : kTaus) {
                    CoinPolisher cand = *this;
                    cand.coins = perturb(coins, tau * dir);
                    cand.gauss_newton(40, 0.2);
                    double rn = cand.rnorm();
                    if (std::getenv("QWALK_REFINE_DEBUG"))
                        std::fprintf(stderr,
                                     "vhop rd=%d dir=%d tau=%+.2f r=%.3e\n",
                                     round, d, tau, rn);
                    if (rn < best) {
                        best = rn;
                        bestCoins = std::move(cand.coins);
                    }
                    if (best < goal) break;
                }
            }
            if (bestCoins.empty()) return false;
            coins = std::move(bestCoins);
        }
        return rnorm() < goal;
    }

    // Second-order version of the valley excursion: model the replay as a
    // quadratic in the coefficients t of the m sloppiest directions
    // (first/second directional derivatives by finite differences), solve
    // the small nonlinear least-squares for the t that cancels the stalled
    // residual through the curvature terms, then step and re-polish.
    bool quad_hop(int rounds, int m, double goal) {
        for (int round = 0; round < rounds; ++round) {
            double cur = rnorm();
            if (cur < goal) return true;
            int np = 4 * n;
            auto pre = prefixes(coins);
            Eigen::MatrixXd J(4 * ns, np);
            for (int k = 0; k < n; ++k)
                for (int j = 0; j < 4; ++j) {
                    Eigen::VectorXcd dr =
                        ortho(to_vec(dwalk(pre, k, kGens[j], nullptr)));
                    for (int i = 0; i < 2 * ns; ++i) {
                        J(2 * i, 4 * k + j) = dr[i].real();
                        J(2 * i + 1, 4 * k + j) = dr[i].imag();
                    }
                }
            Eigen::BDCSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
            int nv = static_cast<int>(svd.matrixV().cols());
            int md = std::min(m, nv);
            std::vector<Eigen::VectorXd> dirs;
            for (int d = 0; d < md; ++d)
                dirs.push_back(svd.matrixV().col(nv - 1 - d));
            const double h = 1e-3;
            auto replay = [&](const Eigen::VectorXd& e) {
                return to_vec(prefixes(perturb(coins, e)).back());
            };
            Eigen::VectorXcd psi0 = to_vec(prefixes(coins).back());
            std::vector<Eigen::VectorXcd> gp(static_cast<size_t>(md)),
                gm(static_cast<size_t>(md)), g(static_cast<size_t>(md));
            std::vector<std::vector<Eigen::VectorXcd>> S(
                static_cast<size_t>(md),
                std::vector<Eigen::VectorXcd>(static_cast<size_t>(md)));
            for (int i = 0; i < md; ++i) {
                gp[static_cast<size_t>(i)] = replay(h * dirs[static_cast<size_t>(i)]);
                gm[static_cast<size_t>(i)] = replay(-h * dirs[static_cast<size_t>(i)]);
                g[static_cast<size_t>(i)] =
                    (gp[static_cast<size_t>(i)] - gm[static_cast<size_t>(i)]) / (2 * h);
                S[static_cast<size_t>(i)][static_cast<size_t>(i)] =
                    (gp[static_cast<size_t>(i)] + gm[static_cast<size_t>(i)] - 2 * psi0) /
                    (h * h);
            }
            for (int i = 0; i < md; ++i)
                for (int j = i + 1; j < md; ++j) {
                    Eigen::VectorXcd pij = replay(
                        h * (dirs[static_cast<size_t>(i)] + dirs[static_cast<size_t>(j)]));
                    S[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                        S[static_cast<size_t>(j)][static_cast<size_t>(i)] =
                            (pij - gp[static_cast<size_t>(i)] -
                             gp[static_cast<size_t>(j)] + psi0) /
                            (h * h);
                }
            auto model_resid = [&](const Eigen::VectorXd& t) {
                Eigen::VectorXcd psi = psi0;
                for (int i = 0; i < md; ++i) {
                    psi += t[i] * g[static_cast<size_t>(i)];
                    for (int j = 0; j < md; ++j)
                        psi += 0.5 * t[i] * t[j] *
                               S[static_cast<size_t>(i)][static_cast<size_t>(j)];
                }
                return ortho(psi);
            };
            // The model shares the flat-valley geometry of the full problem,
            // so a single descent from t = 0 goes nowhere; run a multi-start
            // Levenberg solve over t from finite random seeds instead.
            auto solve_from = [&](Eigen::VectorXd t) {
                Eigen::VectorXcd mr = model_resid(t);
                double lambda = 1e-4;
                for (int inner = 0; inner < 80 && mr.norm() > 1e-12; ++inner) {
                    Eigen::MatrixXd Jt(4 * ns, md);
                    for (int d = 0; d < md; ++d) {
                        Eigen::VectorXcd col = g[static_cast<size_t>(d)];
                        for (int j = 0; j < md; ++j)
                            col += t[j] *
                                   S[static_cast<size_t>(d)][static_cast<size_t>(j)];
                        Eigen::VectorXcd oc = ortho(col);
                        for (int i = 0; i < 2 * ns; ++i) {
                            Jt(2 * i, d) = oc[i].real();
                            Jt(2 * i + 1, d) = oc[i].imag();
                        }
                    }
                    Eigen::VectorXd rr(4 * ns);
                    for (int i = 0; i < 2 * ns; ++i) {
                        rr[2 * i] = mr[i].real();
                        rr[2 * i + 1] = mr[i].imag();
                    }
                    Eigen::MatrixXd A = Jt.transpose() * Jt;
                    A.diagonal().array() += lambda;
                    Eigen::VectorXd dt = A.ldlt().solve(-Jt.transpose() * rr);
                    Eigen::VectorXcd mr2 = model_resid(t + dt);
                    if (mr2.norm() < mr.norm()) {
                        t += dt;
                        mr = std::move(mr2);
                        lambda = std::max(lambda / 3, 1e-10);
                    } else {
                        lambda *= 8;
                        if (lambda > 1e8) break;
                    }
                }
                return std::make_pair(std::move(t), mr.norm());
            };
            std::mt19937 prng(static_cast<unsigned>(12345 + round));
            std::normal_distribution<double> gauss;
            Eigen::VectorXd t = Eigen::VectorXd::Zero(md);
            double tres = model_resid(t).norm();
            static const double kSeedNorms[] = {0.25, 0.5, 1.0, 2.0, 4.0};
            for (int seed = 0; seed < 40 && tres > 1e-11; ++seed) {
                Eigen::VectorXd t0(md);
                for (int i = 0; i < md; ++i) t0[i] = gauss(prng);
                t0 *= kSeedNorms[seed % 5] / t0.norm();
                auto [tc, rc2] = solve_from(std::move(t0));
                if (rc2 < tres && tc.norm() < 6.0) {
                    t = std::move(tc);
                    tres = rc2;
                }
            }
            if (std::getenv("QWALK_REFINE_DEBUG"))
                std::fprintf(stderr, "qhop rd=%d cur=%.3e model=%.3e |t|=%.2f\n",
                             round, cur, tres, t.norm());
            // Apply the excursion at a few scales and keep the best repolish.
            double best = cur;
            std::vector<CoinOperator> bestCoins;
            for (double scale : {1.0, 0.5, 0.25}) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(np);
                for (int i = 0; i < md; ++i)
                    e += scale * t[i] * dirs[static_cast<size_t>(i)];
                CoinPolisher cand = *this;
                cand.coins = perturb(coins, e);
                cand.gauss_newton(50, 0.2);
                double rn = cand.rnorm();
                if (std::getenv("QWALK_REFINE_DEBUG"))
                    std::fprintf(stderr, "qhop rd=%d scale=%.2f r=%.3e\n", round,
                                 scale, rn);
                if (rn < best) {
                    best = rn;
                    bestCoins = std::move(cand.coins);
                }
                if (best < goal) break;
            }
            if (bestCoins.empty()) return false;
            coins = std::move(bestCoins);
        }
        return rnorm() < goal;
    }

    void newton_rescue(int maxIters) {
        int np = 4 * n;
        for (int it = 0; it < maxIters; ++it) {
            auto pre = prefixes(coins);
            Eigen::VectorXcd rc = ortho(to_vec(pre.back()));
            double f = 0.5 * rc.squaredNorm();
            if (rc.norm() < 1e-11) break;
            // First derivatives, with intermediate levels kept for the
            // mixed second derivatives.
            std::vector<std::vector<std::vector<Amp>>> lev(
                static_cast<size_t>(np));
            Eigen::MatrixXcd D(2 * ns, np);
            for (int k = 0; k < n; ++k)
                for (int j = 0; j < 4; ++j) {
                    int p = 4 * k + j;
                    lev[static_cast<size_t>(p)].reserve(
                        static_cast<size_t>(n - k));
                    dwalk(pre, k, kGens[j], &lev[static_cast<size_t>(p)]);
                    D.col(p) = to_vec(lev[static_cast<size_t>(p)].back());
                }
            Eigen::VectorXd g(np);
            Eigen::MatrixXd H(np, np);
            Eigen::MatrixXcd AD(2 * ns, np);
            for (int p = 0; p < np; ++p) {
                AD.col(p) = ortho(D.col(p));
                g[p] = rc.dot(D.col(p)).real();
            }
            for (int p = 0; p < np; ++p) {
                int kp = p / 4, jp = p % 4;
                for (int q = p; q < np; ++q) {
                    int kq = q / 4, jq = q % 4;
                    Eigen::VectorXcd d2;
                    if (kp == kq) {
                        Mat2 pqm = kGens[jp] * kGens[jq];
                        Mat2 qpm = kGens[jq] * kGens[jp];
                        Mat2 sym{0.5 * (pqm.a + qpm.a), 0.5 * (pqm.b + qpm.b),
                                 0.5 * (pqm.c + qpm.c), 0.5 * (pqm.d + qpm.d)};
                        d2 = to_vec(dwalk(pre, kp, sym, nullptr));
                    } else {
                        // kp < kq since p < q orders coins ascending.
                        const auto& base =
                            lev[static_cast<size_t>(p)][static_cast<size_t>(
                                kq - kp - 1)];
                        std::vector<Amp> w = stepm(
                            base,
                            coins[static_cast<size_t>(kq)].matrix() * kGens[jq]);
                        for (int l = kq + 1; l < n; ++l)
                            w = stepm(w, coins[static_cast<size_t>(l)].matrix());
                        d2 = to_vec(w);
                    }
                    double hpq = AD.col(p).dot(AD.col(q)).real() +
                                 rc.dot(d2).real();
                    H(p, q) = hpq;
                    H(q, p) = hpq;
                }
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
            double lamMin = es.eigenvalues()[0];
            auto f_of = [&](const std::vector<CoinOperator>& cs) {
                return 0.5 * resid_of(cs).squaredNorm();
            };
            bool moved = false;
            double shift = std::max(0.0, -lamMin) * 1.05 + 1e-12;
            for (int tries = 0; tries < 16 && !moved; ++tries) {
                Eigen::VectorXd coef =
                    es.eigenvectors().transpose() * g;
                for (int i = 0; i < np; ++i)
                    coef[i] = -coef[i] / (es.eigenvalues()[i] + shift);
                auto cand = perturb(coins, es.eigenvectors() * coef);
                if (f_of(cand) < f) {
                    coins = std::move(cand);
                    moved = true;
                } else {
                    shift = shift * 8 + 1e-12;
                }
            }
            if (!moved && lamMin < -1e-12) {
                // Pure saddle: gradient is numerically zero but the Hessian
                // has negative curvature; kick along its lowest eigenvector.
                Eigen::VectorXd v = es.eigenvectors().col(0);
                double tau = 0.5;
                for (int tries = 0; tries < 40 && !moved; ++tries) {
                    for (double sgn : {1.0, -1.0}) {
                        auto cand = perturb(coins, sgn * tau * v);
                        if (f_of(cand) < f) {
                            coins = std::move(cand);
                            moved = true;
                            break;
                        }
                    }
                    tau *= 0.6;
                }
            }
            if (std::getenv("QWALK_REFINE_DEBUG"))
                std::fprintf(stderr,
                             "newton it=%d f=%.3e lamMin=%.2e |g|=%.2e mv=%d\n",
                             it, f, lamMin, g.norm(), moved ? 1 : 0);
            if (!moved) break;
        }
    }
};

// Multiple-shooting consistency solve. Unknowns are all coins plus the free
// coordinates of every interior layer table; residuals are the per-step
// backward defects: pulling the k-step layer back through C_k must reproduce
// the (k-1)-step layer, and the two pullback entries that fall outside its
// support (dn at site 1, up past the edge) must vanish. Those structural
// rows are the v-vector alignment conditions and respond to the coin at
// first order, so every Jacobian block is conditioned like the layer it
// touches instead of like the full composite walk. The final state error of
// the replayed coins telescopes: ||psi - target|| <= sum_k ||R_k||.
//
// Warm-started from the peel's own coins and tables the residual is exactly
// the dropped extremal amplitudes, concentrated in a few well-conditioned
// blocks, which is what makes this solvable where single shooting stalls.
std::vector<CoinOperator> multishoot(const Eigen::VectorXcd& targetFree,
                                     const std::array<cplx, 2>& c0,
                                     std::vector<CoinOperator> coins,
                                     std::vector<Eigen::VectorXcd> tabs) {
    int n = static_cast<int>(coins.size());
    if (n < 2 || static_cast<int>(tabs.size()) != n - 1) return coins;
    // The top layer is a free unknown tied to the target by penalty rows;
    // with a fixed boundary the gauge freedom of the interior tables leaves
    // the square system rank-deficient and the warm-start defect keeps a
    // component in the left null space no step can remove.
    tabs.push_back(targetFree);
    auto co = [](int k) { return 4 * (k - 1); };
    auto to = [n](int k) { return 4 * n + 2 * k * (k - 1); };
    auto ro = [](int k) { return 2 * k * (k - 1); };
    int bo = 2 * n * (n + 1);  // boundary penalty rows
    int np = 4 * n + 2 * n * (n - 1) + 4 * n;
    int nr = 2 * n * (n + 1) + 4 * n;

    auto level = [&](int k) -> const Eigen::VectorXcd& {
        return tabs[static_cast<size_t>(k - 1)];
    };

    auto residual = [&](const std::vector<CoinOperator>& cs,
                        const std::vector<Eigen::VectorXcd>& ts) {
        Eigen::VectorXd R = Eigen::VectorXd::Zero(nr);
        auto lv = [&](int k) -> const Eigen::VectorXcd& {
            return ts[static_cast<size_t>(k - 1)];
        };
        for (int i = 0; i < 2 * n; ++i) {
            cplx z = ts[static_cast<size_t>(n - 1)][i] - targetFree[i];
            R[bo + 2 * i] = z.real();
            R[bo + 2 * i + 1] = z.imag();
        }
        for (int k = 1; k <= n; ++k) {
            const Eigen::VectorXcd& T = lv(k);
            const Mat2& m = cs[static_cast<size_t>(k - 1)].matrix();
            auto put = [&](int row, cplx z) {
                R[ro(k) + 2 * row] = z.real();
                R[ro(k) + 2 * row + 1] = z.imag();
            };
            for (int s = 1; s <= k; ++s) {
                cplx wu = T[s - 1], wd = T[k + s - 1];
                cplx pu = std::conj(m.a) * wu + std::conj(m.c) * wd;
                cplx pd = std::conj(m.b) * wu + std::conj(m.d) * wd;
                if (k == 1) {
                    put(0, pu - c0[0]);
                    put(1, pd - c0[1]);
                    continue;
                }
                const Eigen::VectorXcd& P = lv(k - 1);
                if (s <= k - 1) put(s - 1, pu - P[s - 1]);
                if (s >= 2) put(k - 1 + s - 2, pd - P[k - 1 + s - 2]);
                if (s == 1) put(2 * k - 2, pd);
                if (s == k) put(2 * k - 1, pu);
            }
        }
        return R;
    };

    Eigen::VectorXd R = residual(coins, tabs);
    if (std::getenv("QWALK_MS_DUMP")) {
        for (int k = 1; k <= n; ++k) {
            double match = R.segment(ro(k), 4 * k - 4).norm();
            double strc = R.segment(ro(k) + 4 * k - 4, 4).norm();
            std::fprintf(stderr, "ms0 block %d match=%.3e struct=%.3e\n", k,
                         match, strc);
        }
        std::fprintf(stderr, "ms0 bound=%.3e\n", R.segment(bo, 4 * n).norm());
    }
    for (int it = 0; it < 200 && R.norm() > 1e-13; ++it) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nr, np);
        auto put = [&](int k, int row, int col, cplx dz) {
            J(ro(k) + 2 * row, col) += dz.real();
            J(ro(k) + 2 * row + 1, col) += dz.imag();
        };
        for (int k = 1; k <= n; ++k) {
            const Eigen::VectorXcd& T = level(k);
            const Mat2& m = coins[static_cast<size_t>(k - 1)].matrix();
            for (int s = 1; s <= k; ++s) {
                cplx wu = T[s - 1], wd = T[k + s - 1];
                cplx pu = std::conj(m.a) * wu + std::conj(m.c) * wd;
                cplx pd = std::conj(m.b) * wu + std::conj(m.d) * wd;
                // Rows of block k that hold p_s components.
                int rowUp = -1, rowDn = -1;
                if (k == 1) {
                    rowUp = 0;
                    rowDn = 1;
                } else {
                    if (s <= k - 1) rowUp = s - 1;
                    if (s == k) rowUp = 2 * k - 1;
                    if (s >= 2) rowDn = k - 1 + s - 2;
                    if (s == 1) rowDn = 2 * k - 2;
                }
                // Coin params: d (C e^{eps G})^dag w = -G C^dag w = -G p.
                for (int j = 0; j < 4; ++j) {
                    const Mat2& g = kGens[j];
                    cplx du = -(g.a * pu + g.b * pd);
                    cplx dd = -(g.c * pu + g.d * pd);
                    if (rowUp >= 0) put(k, rowUp, co(k) + j, du);
                    if (rowDn >= 0) put(k, rowDn, co(k) + j, dd);
                }
                // Own-layer table coords: p = C^dag w is linear in w.
                {
                    int cu = to(k) + 2 * (s - 1);      // Re/Im of up coord
                    int cd = to(k) + 2 * (k + s - 1);  // Re/Im of dn coord
                    cplx dau = std::conj(m.a), dad = std::conj(m.b);
                    cplx dcu = std::conj(m.c), dcd = std::conj(m.d);
                    if (rowUp >= 0) {
                        put(k, rowUp, cu, dau);
                        put(k, rowUp, cu + 1, cplx(0, 1) * dau);
                        put(k, rowUp, cd, dcu);
                        put(k, rowUp, cd + 1, cplx(0, 1) * dcu);
                    }
                    if (rowDn >= 0) {
                        put(k, rowDn, cu, dad);
                        put(k, rowDn, cu + 1, cplx(0, 1) * dad);
                        put(k, rowDn, cd, dcd);
                        put(k, rowDn, cd + 1, cplx(0, 1) * dcd);
                    }
                }
            }
            // Previous-layer coords enter their match rows with -1.
            if (k >= 2) {
                for (int i = 0; i < 2 * (k - 1); ++i) {
                    int col = to(k - 1) + 2 * i;
                    put(k, i, col, cplx(-1, 0));
                    put(k, i, col + 1, cplx(0, -1));
                }
            }
        }
        if (it == 0 && std::getenv("QWALK_MS_FDCHECK")) {
            double h = 1e-7, worst = 0;
            int wp = -1;
            for (int pidx = 0; pidx < np; ++pidx) {
                Eigen::VectorXd d = Eigen::VectorXd::Zero(np);
                d[pidx] = h;
                std::vector<CoinOperator> cc = coins;
                for (int k = 1; k <= n; ++k)
                    cc[static_cast<size_t>(k - 1)] = CoinOperator(
                        coins[static_cast<size_t>(k - 1)].matrix() *
                        u2_exp(d[co(k)], d[co(k) + 1], d[co(k) + 2],
                               d[co(k) + 3]));
                std::vector<Eigen::VectorXcd> tt = tabs;
                for (int k = 1; k <= n; ++k)
                    for (int i = 0; i < 2 * k; ++i)
                        tt[static_cast<size_t>(k - 1)][i] +=
                            cplx(d[to(k) + 2 * i], d[to(k) + 2 * i + 1]);
                Eigen::VectorXd fd = (residual(cc, tt) - R) / h;
                double e = (fd - J.col(pidx)).norm();
                if (e > worst) {
                    worst = e;
                    wp = pidx;
                }
            }
            std::fprintf(stderr, "mshoot fdcheck worst=%.3e at param %d\n",
                         worst, wp);
        }
        for (int i = 0; i < 4 * n; ++i) J(bo + i, to(n) + i) = 1.0;
        Eigen::VectorXd g = J.transpose() * R;
        // The residual concentrates along directions whose singular values
        // are of order the thin v-vector norms; lambda-damped normal
        // equations suppress exactly those components and stall, so step
        // along the truncated pseudo-inverse direction with a line search.
        Eigen::BDCSVD<Eigen::MatrixXd> svd(
            J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sig = svd.singularValues();
        Eigen::VectorXd utr = svd.matrixU().transpose() * R;
        Eigen::VectorXd coef(sig.size());
        double cut = sig[0] * 1e-10;
        for (int i = 0; i < sig.size(); ++i)
            coef[i] = sig[i] > cut ? -utr[i] / sig[i] : 0.0;
        Eigen::VectorXd dfull = svd.matrixV() * coef;
        bool accepted = false;
        double tau = 1.0;
        for (int tries = 0; tries < 40 && !accepted; ++tries) {
            Eigen::VectorXd d = tau * dfull;
            std::vector<CoinOperator> cc = coins;
            for (int k = 1; k <= n; ++k)
                cc[static_cast<size_t>(k - 1)] = CoinOperator(
                    coins[static_cast<size_t>(k - 1)].matrix() *
                    u2_exp(d[co(k)], d[co(k) + 1], d[co(k) + 2], d[co(k) + 3]));
            std::vector<Eigen::VectorXcd> tt = tabs;
            for (int k = 1; k <= n; ++k)
                for (int i = 0; i < 2 * k; ++i)
                    tt[static_cast<size_t>(k - 1)][i] +=
                        cplx(d[to(k) + 2 * i], d[to(k) + 2 * i + 1]);
            Eigen::VectorXd Rc = residual(cc, tt);
            if (Rc.norm() < R.norm()) {
                coins = std::move(cc);
                tabs = std::move(tt);
                R = std::move(Rc);
                accepted = true;
            } else {
                tau *= 0.5;
            }
        }
        if (std::getenv("QWALK_REFINE_DEBUG")) {
            std::string blocks;
            if (std::getenv("QWALK_MS_FDCHECK")) {
                Eigen::BDCSVD<Eigen::MatrixXd> svd(J);
                for (int k = 1; k <= n; ++k) {
                    double bn = R.segment(ro(k), 4 * k).norm();
                    if (bn > 1e-8)
                        blocks += " b" + std::to_string(k) + "=" +
                                  std::to_string(bn);
                }
                std::fprintf(stderr, "   smin=%.2e smax=%.2e%s\n",
                             svd.singularValues().tail(1)[0],
                             svd.singularValues()[0], blocks.c_str());
            }
            std::fprintf(stderr, "mshoot it=%d |R|=%.3e |g|=%.2e tau=%.1e acc=%d\n",
                         it, R.norm(), g.norm(), tau, accepted ? 1 : 0);
        }
        if (!accepted) break;
    }
    return coins;
}

std::vector<CoinOperator> refine_coins(const WalkerState& target,
                                       const std::array<cplx, 2>& initialCoin,
                                       std::vector<CoinOperator> coins,
                                       const std::vector<Eigen::VectorXcd>* peelTables) {
    int n = static_cast<int>(coins.size());
    if (n == 0) return coins;
    double tn = std::sqrt(target.squared_norm());
    if (tn <= 0) return coins;
    CoinPolisher p;
    p.n = n;
    p.ns = n + 1;
    p.c0 = initialCoin;
    p.tv = Eigen::VectorXcd(2 * p.ns);
    for (int i = 0; i < p.ns; ++i) {
        p.tv[2 * i] = target.up_at(1 + i) / tn;
        p.tv[2 * i + 1] = target.dn_at(1 + i) / tn;
    }
    p.coins = std::move(coins);
    // On ill-conditioned walks the peel's accumulated defect is too large
    // for direct polishing against the end state; restore consistency level
    // by level first.
    if (!std::getenv("QWALK_PLAIN_GN") &&
        peelTables && static_cast<int>(peelTables->size()) == n - 1 &&
        n >= 2 && p.rnorm() > 1e-6) {
        Eigen::VectorXcd targetFree(2 * n);
        for (int i = 0; i < n; ++i) {
            targetFree[i] = target.up_at(1 + i) / tn;
            targetFree[n + i] = target.dn_at(2 + i) / tn;
        }
        std::vector<Eigen::VectorXcd> tabs = *peelTables;
        for (auto& t : tabs) t /= tn;
        p.coins = multishoot(targetFree, initialCoin, std::move(p.coins),
                             std::move(tabs));
    }
    p.gauss_newton(60);
    if (std::getenv("QWALK_QHOP")) {
        if (p.rnorm() > 1e-6) p.quad_hop(30, n + 2, 1e-7);
    } else if (std::getenv("QWALK_VHOP")) {
        if (p.rnorm() > 1e-6) p.valley_hop(8, 12, 1e-7);
    } else if (!std::getenv("QWALK_PLAIN_GN") && p.rnorm() > 3e-6) {
        p.newton_rescue(150);
        p.gauss_newton(30);
    }
    return std::move(p.coins);
}

}  // namespace

std::vector<CoinOperator> backsolve(const WalkerState& state,
                                    const std::array<cplx, 2>& initialCoin,
                                    const std::vector<double>& alphas,
                                    double tol) {
    int n = state.last_label() - std::min(state.origin(), 1);
    if (n < 1)
        throw std::invalid_argument("backsolve: single-site state has no coins");
    if (!alphas.empty() && static_cast<int>(alphas.size()) != n - 1)
        throw std::invalid_argument("backsolve: need n-1 alphas");
    // Reachability is certified once on the pristine input; the interior
    // back-steps then run with a loose tolerance, since the peeled tables
    // carry the (bounded, extended-precision) accumulated rounding.
    double rmax = 0.0;
    for (const auto& r : reachability_residuals(state, n))
        rmax = std::max(rmax, std::abs(r));
    if (rmax > tol * std::max(state.squared_norm(), 1.0))
        throw not_reachable_error(
            "backsolve: state fails the " + std::to_string(n) +
                "-step reachability residuals (max = " + std::to_string(rmax) + ")",
            rmax);
    PeeledWalk peel = peel_walk(state, n, alphas, std::max(tol, 1e-2));
    std::vector<CoinOperator> coins = std::move(peel.coins);
    // The peel drops sub-tolerance extremal amplitudes, so the layer can be
    // short of the walk norm by a whisker; only its direction matters.
    double lnorm = std::sqrt(std::norm(peel.layerUp) + std::norm(peel.layerDn));
    if (lnorm > 0) {
        peel.layerUp /= lnorm;
        peel.layerDn /= lnorm;
    }
    WalkerState layer(1, {SiteAmp{peel.layerUp, 0.0}, SiteAmp{0.0, peel.layerDn}});
    coins.push_back(solve_first_coin(layer, initialCoin));
    std::reverse(coins.begin(), coins.end());
    coins = refine_coins(state, initialCoin, std::move(coins), &peel.tables);
    return coins;
}

BacksolveResult backsolve_auto(const WalkerState& state,
                               const std::vector<double>& alphas, double tol) {
    WalkerState norm_state = state;
    norm_state.normalize();
    int n = norm_state.last_label() - std::min(norm_state.origin(), 1);
    if (n < 1)
        throw std::invalid_argument("backsolve_auto: single-site state");
    double rmax = 0.0;
    for (const auto& r : reachability_residuals(norm_state, n))
        rmax = std::max(rmax, std::abs(r));
    if (rmax > tol)
        throw not_reachable_error(
            "backsolve_auto: state fails the " + std::to_string(n) +
                "-step reachability residuals (max = " + std::to_string(rmax) + ")",
            rmax);
    PeeledWalk peel = peel_walk(norm_state, n, alphas, std::max(tol, 1e-2));
    std::vector<CoinOperator> coins = std::move(peel.coins);
    double wn = std::sqrt(std::norm(peel.layerUp) + std::norm(peel.layerDn));
    std::array<cplx, 2> init{peel.layerUp / wn, peel.layerDn / wn};
    // The peel drops sub-tolerance extremal amplitudes, so the layer can be
    // short of the walk norm by a whisker; only its direction matters.
    double lnorm = std::sqrt(std::norm(peel.layerUp) + std::norm(peel.layerDn));
    if (lnorm > 0) {
        peel.layerUp /= lnorm;
        peel.layerDn /= lnorm;
    }
    WalkerState layer(1, {SiteAmp{peel.layerUp, 0.0}, SiteAmp{0.0, peel.layerDn}});
    coins.push_back(solve_first_coin(layer, init));
    std::reverse(coins.begin(), coins.end());
    coins = refine_coins(norm_state, init, std::move(coins), &peel.tables);
    return BacksolveResult{std::move(coins), init};
}

}  // namespace qwalk
