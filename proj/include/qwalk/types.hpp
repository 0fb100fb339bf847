#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qwalk {

using cplx = std::complex<double>;

// Numerical tolerances shared across the library.
inline constexpr double TOL_NORM = 1e-10;
inline constexpr double TOL_UNITARY = 1e-10;
inline constexpr double TOL_ZERO = 1e-12;
inline constexpr double REACH_TOL = 1e-9;

// Thrown when a state fails a reachability precondition.
class not_reachable_error : public std::runtime_error {
public:
    not_reachable_error(std::string msg, double residual)
        : std::runtime_error(std::move(msg)), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Thrown when a numerical routine exhausts its budget without converging.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// 2x2 complex matrix, row major.
struct Mat2 {
    cplx a{}, b{}, c{}, d{};

    friend Mat2 operator*(const Mat2& l, const Mat2& r) {
        return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d,
                l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d};
    }
    friend Mat2 operator*(cplx s, const Mat2& m) {
        return {s * m.a, s * m.b, s * m.c, s * m.d};
    }
    std::array<cplx, 2> apply(cplx x, cplx y) const {
        return {a * x + b * y, c * x + d * y};
    }
    Mat2 adjoint() const {
        return {std::conj(a), std::conj(c), std::conj(b), std::conj(d)};
    }
    cplx det() const { return a * d - b * c; }
    cplx trace() const { return a + d; }
    double unitarity_residual() const {
        Mat2 p = adjoint() * *this;
        double r = 0.0;
        r = std::max(r, std::abs(p.a - 1.0));
        r = std::max(r, std::abs(p.b));
        r = std::max(r, std::abs(p.c));
        r = std::max(r, std::abs(p.d - 1.0));
        return r;
    }
};

/// A 2x2 unitary coin. Construct via coin_from_params (Eq.-form SU(2)
/// parametrization) or coin_from_first_column (column form with explicit
/// column-phase freedom).
class CoinOperator {
public:
    explicit CoinOperator(const Mat2& m) : m_(m) {
        if (m_.unitarity_residual() > 1e-8)
            throw std::invalid_argument("CoinOperator: matrix is not unitary");
    }
    static CoinOperator identity() { return CoinOperator{Mat2{1, 0, 0, 1}}; }

    const Mat2& matrix() const { return m_; }

    /// SU(2) representative: the matrix divided by a square root of its
    /// determinant, so det == 1.
    Mat2 su2() const {
        cplx ph = std::exp(cplx(0, -0.5 * std::arg(m_.det())));
        return ph * m_;
    }

    double theta() const;
    double xi() const;
    double zeta() const;

private:
    void extract_params(double& th, double& xi, double& ze) const;
    Mat2 m_;
};

/// Builds the coin matrix
///   [ e^{i xi} cos th   e^{i zeta} sin th ]
///   [ -e^{-i zeta} sin th  e^{-i xi} cos th ]
/// with th in [0, pi/2].
CoinOperator coin_from_params(double theta, double xi, double zeta);

/// Unitary whose first column is col normalized (positive real scale) and
/// whose second column is the alpha-phased orthogonal complement
/// (-e^{i alpha} col2*, e^{i alpha} col1*)/|col|.
CoinOperator coin_from_first_column(cplx up, cplx dn, double alpha);

// Amplitude pair (u_{i,up}, u_{i,dn}) at one site.
struct SiteAmp {
    cplx up{};
    cplx dn{};
};

// Amplitude pair (u_{i,up}, u_{i+1,dn}) straddling adjacent sites.
struct VVector {
    cplx up{};
    cplx dn{};

    cplx dot(const VVector& o) const {
        return std::conj(up) * o.up + std::conj(dn) * o.dn;
    }
    double norm() const { return std::sqrt(std::norm(up) + std::norm(dn)); }
};

/// Dense amplitude table of a walker+coin state over a contiguous range of
/// sites. Sites are stored 0-based with `origin` holding the 1-based label
/// of the first stored site; all user-facing labels are 1-based.
class WalkerState {
public:
    WalkerState() = default;
    WalkerState(int origin, std::vector<SiteAmp> amps)
        : origin_(origin), amps_(std::move(amps)) {}

    /// Localized state |site> (x) (up, dn).
    static WalkerState localized(int site, cplx up, cplx dn) {
        return WalkerState(site, {SiteAmp{up, dn}});
    }

    int origin() const { return origin_; }
    int site_count() const { return static_cast<int>(amps_.size()); }
    /// 1-based label of stored site index i.
    int label(int i) const { return origin_ + i; }
    int last_label() const { return origin_ + site_count() - 1; }

    /// Amplitudes by 1-based paper label; zero outside the stored range.
    cplx up_at(int label) const {
        int i = label - origin_;
        return (i >= 0 && i < site_count()) ? amps_[static_cast<size_t>(i)].up : cplx{};
    }
    cplx dn_at(int label) const {
        int i = label - origin_;
        return (i >= 0 && i < site_count()) ? amps_[static_cast<size_t>(i)].dn : cplx{};
    }

    const SiteAmp& at(int i) const { return amps_[static_cast<size_t>(i)]; }
    SiteAmp& at(int i) { return amps_[static_cast<size_t>(i)]; }
    cplx up(int i) const { return amps_[static_cast<size_t>(i)].up; }
    cplx dn(int i) const { return amps_[static_cast<size_t>(i)].dn; }
    const std::vector<SiteAmp>& amps() const { return amps_; }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& a : amps_) s += std::norm(a.up) + std::norm(a.dn);
        return s;
    }
    double norm() const { return std::sqrt(squared_norm()); }

    WalkerState& normalize() {
        double n = norm();
        if (n < TOL_ZERO)
            throw std::invalid_argument("WalkerState::normalize: zero state");
        for (auto& a : amps_) {
            a.up /= n;
            a.dn /= n;
        }
        return *this;
    }

    /// Drops leading/trailing sites whose amplitudes are all below tol.
    WalkerState& trim(double tol = TOL_ZERO) {
        auto dead = [tol](const SiteAmp& a) {
            return std::abs(a.up) <= tol && std::abs(a.dn) <= tol;
        };
        size_t lo = 0;
        while (lo + 1 < amps_.size() && dead(amps_[lo])) ++lo;
        size_t hi = amps_.size();
        while (hi > lo + 1 && dead(amps_[hi - 1])) --hi;
        amps_ = std::vector<SiteAmp>(amps_.begin() + static_cast<long>(lo),
                                     amps_.begin() + static_cast<long>(hi));
        origin_ += static_cast<int>(lo);
        return *this;
    }

private:
    int origin_ = 1;
    std::vector<SiteAmp> amps_;
};

/// Normalized complex vector over n+1 walker sites (coin traced out).
class TargetSuperposition {
public:
    explicit TargetSuperposition(std::vector<cplx> amps) : amps_(std::move(amps)) {
        if (amps_.size() < 2)
            throw std::invalid_argument("TargetSuperposition: need at least 2 sites");
        double n = 0.0;
        for (const auto& a : amps_) n += std::norm(a);
        n = std::sqrt(n);
        if (n < TOL_ZERO)
            throw std::invalid_argument("TargetSuperposition: zero vector");
        for (auto& a : amps_) a /= n;
    }

    int size() const { return static_cast<int>(amps_.size()); }
    cplx operator[](int i) const { return amps_[static_cast<size_t>(i)]; }
    const std::vector<cplx>& amps() const { return amps_; }

    /// |<this|other>|^2 with both vectors unit norm; shorter vector padded
    /// with zeros.
    double fidelity(const std::vector<cplx>& other) const {
        cplx ov = 0.0;
        size_t n = std::min(amps_.size(), other.size());
        for (size_t i = 0; i < n; ++i) ov += std::conj(amps_[i]) * other[i];
        return std::norm(ov);
    }

private:
    std::vector<cplx> amps_;
};

/// Complete output of the engineering pipeline for one d-branch.
struct EngineeringSolution {
    std::vector<cplx> d;                    // d_2..d_n
    WalkerState fullState;                  // pre-projection walker+coin state
    std::vector<CoinOperator> coins;        // C_1..C_n
    std::array<cplx, 2> initialCoin{};      // (u0_up, u0_dn)
    std::array<cplx, 2> projection{};       // coin bra (a, b)
    double probability = 0.0;
    double fidelity = 0.0;
};

inline std::array<cplx, 2> plus_bra() {
    return {cplx(1 / std::sqrt(2.0), 0), cplx(1 / std::sqrt(2.0), 0)};
}

}  // namespace qwalk
