#include "qwalk/types.hpp"

#include <cmath>

namespace qwalk {

CoinOperator coin_from_params(double theta, double xi, double zeta) {
    if (theta < -TOL_ZERO || theta > M_PI / 2 + TOL_ZERO)
        throw std::invalid_argument("coin_from_params: theta outside [0, pi/2]");
    double ct = std::cos(theta), st = std::sin(theta);
    Mat2 m{std::polar(ct, xi), std::polar(st, zeta),
           -std::polar(st, -zeta), std::polar(ct, -xi)};
    return CoinOperator(m);
}

CoinOperator coin_from_first_column(cplx up, cplx dn, double alpha) {
    double n = std::sqrt(std::norm(up) + std::norm(dn));
    if (n < TOL_ZERO)
        throw std::invalid_argument("coin_from_first_column: zero column");
    cplx ph = std::exp(cplx(0, alpha));
    Mat2 m{up / n, -ph * std::conj(dn) / n,
           dn / n, ph * std::conj(up) / n};
    return CoinOperator(m);
}

void CoinOperator::extract_params(double& th, double& xi, double& ze) const {
    Mat2 s = su2();
    th = std::atan2(std::abs(s.c), std::abs(s.a));
    // At th = 0 (resp. pi/2) the off-diagonal (resp. diagonal) phase is
    // undefined; it is pinned to 0.
    xi = std::abs(s.a) > TOL_ZERO ? std::arg(s.a) : 0.0;
    ze = std::abs(s.b) > TOL_ZERO ? std::arg(s.b) : 0.0;
}

double CoinOperator::theta() const {
    double th, xi, ze;
    extract_params(th, xi, ze);
    return th;
}

double CoinOperator::xi() const {
    double th, xi, ze;
    extract_params(th, xi, ze);
    return xi;
}

double CoinOperator::zeta() const {
    double th, xi, ze;
    extract_params(th, xi, ze);
    return ze;
}

}  // namespace qwalk
