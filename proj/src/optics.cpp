#include "qwalk/optics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

namespace qwalk {

namespace {

Mat2 rotation(double t) {
    return {std::cos(t), -std::sin(t), std::sin(t), std::cos(t)};
}

// Basis change rows (<L|, <R|) over (H, V).
const Mat2 kToCircular{cplx(1, 0) / std::sqrt(2.0), cplx(0, 1) / std::sqrt(2.0),
                       cplx(1, 0) / std::sqrt(2.0), cplx(0, -1) / std::sqrt(2.0)};

Mat2 sigma_x_conjugate(const Mat2& m) {
    // sx * m * sx swaps both indices.
    return {m.d, m.c, m.b, m.a};
}

}  // namespace

Mat2 jones_matrix(PlateKind kind, double angle) {
    double delta = kind == PlateKind::QWP ? M_PI / 2 : M_PI;
    Mat2 retarder{std::polar(1.0, -delta / 2), 0.0, 0.0, std::polar(1.0, delta / 2)};
    Mat2 lin = rotation(angle) * retarder * rotation(-angle);
    return kToCircular * lin * kToCircular.adjoint();
}

Mat2 waveplates_to_jones(double qwp1, double hwp, double qwp2) {
    return jones_matrix(PlateKind::QWP, qwp2) * jones_matrix(PlateKind::HWP, hwp) *
           jones_matrix(PlateKind::QWP, qwp1);
}

namespace {

double phase_aligned_residual(const Mat2& j, const Mat2& c, double& phase) {
    cplx tr = std::conj(c.a) * j.a + std::conj(c.b) * j.b +
              std::conj(c.c) * j.c + std::conj(c.d) * j.d;
    phase = std::arg(tr);
    cplx ph = std::polar(1.0, phase);
    double r = 0.0;
    r = std::max(r, std::abs(j.a - ph * c.a));
    r = std::max(r, std::abs(j.b - ph * c.b));
    r = std::max(r, std::abs(j.c - ph * c.c));
    r = std::max(r, std::abs(j.d - ph * c.d));
    return r;
}

Eigen::VectorXd residual_vec(const Mat2& c, const Eigen::Vector3d& t) {
    Mat2 j = waveplates_to_jones(t[0], t[1], t[2]);
    double phase;
    phase_aligned_residual(j, c, phase);
    cplx ph = std::polar(1.0, phase);
    Eigen::VectorXd r(8);
    cplx e0 = j.a - ph * c.a, e1 = j.b - ph * c.b;
    cplx e2 = j.c - ph * c.c, e3 = j.d - ph * c.d;
    r << e0.real(), e0.imag(), e1.real(), e1.imag(), e2.real(), e2.imag(),
        e3.real(), e3.imag();
    return r;
}

double wrap_plate_angle(double a) {
    a = std::fmod(a, M_PI);
    if (a < 0) a += M_PI;
    return a;
}

}  // namespace

WaveplateDecomposition coin_to_waveplates(const CoinOperator& coin) {
    const Mat2& c = coin.matrix();
    // Deterministic grid of starts, best few refined by Gauss-Newton.
    std::vector<std::pair<double, Eigen::Vector3d>> starts;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) {
                Eigen::Vector3d t(i * M_PI / 4, j * M_PI / 4, k * M_PI / 4);
                starts.emplace_back(residual_vec(c, t).norm(), t);
            }
    std::sort(starts.begin(), starts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    WaveplateDecomposition best;
    best.residual = 1e9;
    for (size_t s = 0; s < std::min<size_t>(starts.size(), 8); ++s) {
        Eigen::Vector3d t = starts[s].second;
        Eigen::VectorXd r = residual_vec(c, t);
        double lambda = 1e-8;
        for (int it = 0; it < 80 && r.norm() > 1e-13; ++it) {
            const double h = 1e-7;
            Eigen::MatrixXd J(8, 3);
            for (int p = 0; p < 3; ++p) {
                Eigen::Vector3d tp = t, tm = t;
                tp[p] += h;
                tm[p] -= h;
                J.col(p) = (residual_vec(c, tp) - residual_vec(c, tm)) / (2 * h);
            }
            Eigen::Matrix3d A = J.transpose() * J;
            A.diagonal().array() += lambda;
            Eigen::Vector3d dt = A.ldlt().solve(-J.transpose() * r);
            Eigen::VectorXd rn = residual_vec(c, t + dt);
            if (rn.norm() < r.norm()) {
                t += dt;
                r = rn;
                lambda = std::max(lambda * 0.3, 1e-12);
            } else {
                lambda *= 10;
                if (lambda > 1e6) break;
            }
        }
        Mat2 j = waveplates_to_jones(t[0], t[1], t[2]);
        double phase;
        double res = phase_aligned_residual(j, c, phase);
        if (res < best.residual) {
            best.qwp1 = wrap_plate_angle(t[0]);
            best.hwp = wrap_plate_angle(t[1]);
            best.qwp2 = wrap_plate_angle(t[2]);
            best.globalPhase = phase;
            best.residual = res;
        }
        if (best.residual < 1e-10) break;
    }
    if (best.residual > 1e-8)
        throw numerical_error(
            "coin_to_waveplates: decomposition residual " +
            std::to_string(best.residual) + " exceeds budget");
    return best;
}

std::pair<int, Pol> qplate_action(int m, Pol pol, double q) {
    double twoq = 2 * q;
    int shift = static_cast<int>(std::lround(twoq));
    if (std::abs(twoq - shift) > 1e-9)
        throw std::invalid_argument("qplate_action: q must be half-integer");
    if (pol == Pol::R) return {m - shift, Pol::L};
    return {m + shift, Pol::R};
}

ExperimentPlan compile_experiment(const EngineeringSolution& solution) {
    ExperimentPlan plan;
    plan.initialCoin = solution.initialCoin;
    plan.inputSpan = 1;
    int n = static_cast<int>(solution.coins.size());
    plan.steps.reserve(static_cast<size_t>(n));
    for (int t = 1; t <= n; ++t) {
        // The q-plate flips handedness every step, so the (up, dn) <-> (L, R)
        // correspondence alternates; odd steps see the coin directly, even
        // steps see it conjugated by the swap.
        Mat2 target = solution.coins[static_cast<size_t>(t - 1)].matrix();
        if (t % 2 == 0) target = sigma_x_conjugate(target);
        WaveplateDecomposition wp = coin_to_waveplates(CoinOperator(target));
        // The charge sign alternates with the handedness parity: a fixed-sign
        // plate shifts the m-ladder the wrong way on every other step, which
        // scrambles the site encoding instead of standing the up branch still.
        double q = t % 2 == 1 ? 0.5 : -0.5;
        plan.steps.push_back(ExperimentStep{wp.qwp1, wp.hwp, wp.qwp2, q});
    }
    // Projection bra in the final (L, R) basis; realizable with one HWP+PBS
    // only for balanced moduli.
    cplx bu = solution.projection[0], bd = solution.projection[1];
    cplx bL = n % 2 == 0 ? bu : bd;
    cplx bR = n % 2 == 0 ? bd : bu;
    if (std::abs(std::abs(bL) - std::abs(bR)) > 1e-9)
        throw std::invalid_argument(
            "compile_experiment: projection bra is not balanced; a single "
            "HWP+PBS stage cannot realize it");
    // The PBS H-port after an HWP measures a balanced circular bra whose
    // relative phase is 4x the plate angle; pick the exact branch.
    double argdiff = std::arg(bL) - std::arg(bR);
    double bestScore = -1.0, bestAngle = 0.0;
    double bnorm = std::sqrt(std::norm(bL) + std::norm(bR));
    for (double sign : {1.0, -1.0})
        for (int k = 0; k < 8; ++k) {
            double t = wrap_plate_angle(sign * argdiff / 4 + k * M_PI / 4);
            Mat2 hw = jones_matrix(PlateKind::HWP, t);
            cplx rowL = (hw.a + hw.c) / std::sqrt(2.0);
            cplx rowR = (hw.b + hw.d) / std::sqrt(2.0);
            double score = std::abs(rowL * bL + rowR * bR) / bnorm;
            if (score > bestScore) {
                bestScore = score;
                bestAngle = t;
            }
        }
    if (bestScore < 1.0 - 1e-12)
        throw numerical_error("compile_experiment: projection stage alignment failed");
    plan.projectionHwpAngle = bestAngle;
    return plan;
}

PlanSimulation simulate_plan(const ExperimentPlan& plan) {
    // Photon state over OAM x polarization, amplitudes indexed by m.
    std::map<int, std::array<cplx, 2>> psi;  // [0] = L, [1] = R
    psi[0] = {plan.initialCoin[0], plan.initialCoin[1]};
    for (const auto& step : plan.steps) {
        Mat2 j = waveplates_to_jones(step.qwp1Angle, step.hwpAngle, step.qwp2Angle);
        std::map<int, std::array<cplx, 2>> next;
        for (const auto& [m, amp] : psi) {
            auto v = j.apply(amp[0], amp[1]);
            auto [mL, pL] = qplate_action(m, Pol::L, step.qplateCharge);
            auto [mR, pR] = qplate_action(m, Pol::R, step.qplateCharge);
            next[mL][pL == Pol::L ? 0 : 1] += v[0];
            next[mR][pR == Pol::L ? 0 : 1] += v[1];
        }
        psi = std::move(next);
    }
    int n = static_cast<int>(plan.steps.size());
    PlanSimulation out;
    // Decode: site i <-> m = n - 2(i-1); up-polarization is L at even n.
    std::vector<SiteAmp> amps(static_cast<size_t>(n) + 1);
    for (int i = 1; i <= n + 1; ++i) {
        int m = n - 2 * (i - 1);
        auto it = psi.find(m);
        if (it == psi.end()) continue;
        cplx up = n % 2 == 0 ? it->second[0] : it->second[1];
        cplx dn = n % 2 == 0 ? it->second[1] : it->second[0];
        amps[static_cast<size_t>(i - 1)] = SiteAmp{up, dn};
    }
    out.walkerState = WalkerState(1, std::move(amps));
    out.walkerState.trim();
    // Projection stage: HWP then the PBS H-port.
    Mat2 hw = jones_matrix(PlateKind::HWP, plan.projectionHwpAngle);
    cplx rowL = (hw.a + hw.c) / std::sqrt(2.0);
    cplx rowR = (hw.b + hw.d) / std::sqrt(2.0);
    for (int i = 1; i <= n + 1; ++i) {
        int m = n - 2 * (i - 1);
        auto it = psi.find(m);
        cplx a = it == psi.end()
                     ? cplx{}
                     : rowL * it->second[0] + rowR * it->second[1];
        out.siteAmps.push_back(a);
        out.probability += std::norm(a);
    }
    return out;
}

}  // namespace qwalk
