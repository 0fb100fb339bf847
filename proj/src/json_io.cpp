#include "qwalk/json_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace qwalk {

namespace {

// Phase factor making the first amplitude above TOL_ZERO real-positive.
cplx canonical_phase(const std::vector<SiteAmp>& amps) {
    for (const auto& a : amps) {
        if (std::abs(a.up) > TOL_ZERO) return std::polar(1.0, -std::arg(a.up));
        if (std::abs(a.dn) > TOL_ZERO) return std::polar(1.0, -std::arg(a.dn));
    }
    return 1.0;
}

}  // namespace

json state_to_json(const WalkerState& s) {
    cplx ph = canonical_phase(s.amps());
    json amps = json::array();
    for (const auto& a : s.amps()) {
        cplx up = ph * a.up, dn = ph * a.dn;
        amps.push_back({up.real(), up.imag(), dn.real(), dn.imag()});
    }
    return {{"origin", s.origin()}, {"amps", amps}};
}

WalkerState state_from_json(const json& j) {
    std::vector<SiteAmp> amps;
    for (const auto& row : j.at("amps")) {
        if (row.size() != 4)
            throw std::invalid_argument("state amps rows must have 4 entries");
        amps.push_back(SiteAmp{cplx(row[0].get<double>(), row[1].get<double>()),
                               cplx(row[2].get<double>(), row[3].get<double>())});
    }
    return WalkerState(j.value("origin", 1), std::move(amps));
}

json coin_to_json(const CoinOperator& c) {
    return {{"theta", c.theta()}, {"xi", c.xi()}, {"zeta", c.zeta()}};
}

CoinOperator coin_from_json(const json& j) {
    return coin_from_params(j.at("theta").get<double>(), j.at("xi").get<double>(),
                            j.at("zeta").get<double>());
}

json target_to_json(const TargetSuperposition& t) {
    json amps = json::array();
    for (const auto& a : t.amps()) amps.push_back({a.real(), a.imag()});
    return {{"amps", amps}};
}

TargetSuperposition target_from_json(const json& j) {
    std::vector<cplx> amps;
    const json& arr = j.is_array() ? j : j.at("amps");
    for (const auto& row : arr) {
        if (row.is_number())
            amps.emplace_back(row.get<double>(), 0.0);
        else
            amps.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
    }
    return TargetSuperposition(std::move(amps));
}

json complex_pair_to_json(const std::array<cplx, 2>& v) {
    return {{v[0].real(), v[0].imag()}, {v[1].real(), v[1].imag()}};
}

std::array<cplx, 2> complex_pair_from_json(const json& j) {
    return {cplx(j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>()),
            cplx(j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>())};
}

json solution_to_json(const EngineeringSolution& s) {
    json d = json::array();
    for (const auto& v : s.d) d.push_back({v.real(), v.imag()});
    json coins = json::array();
    for (const auto& c : s.coins) coins.push_back(coin_to_json(c));
    return {{"d", d},
            {"coins", coins},
            {"initialCoin", complex_pair_to_json(s.initialCoin)},
            {"projection", complex_pair_to_json(s.projection)},
            {"probability", s.probability},
            {"fidelity", s.fidelity},
            {"fullState", state_to_json(s.fullState)}};
}

EngineeringSolution solution_from_json(const json& j) {
    EngineeringSolution s;
    for (const auto& row : j.at("d"))
        s.d.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
    for (const auto& c : j.at("coins")) s.coins.push_back(coin_from_json(c));
    s.initialCoin = complex_pair_from_json(j.at("initialCoin"));
    s.projection = complex_pair_from_json(j.at("projection"));
    s.probability = j.at("probability").get<double>();
    s.fidelity = j.at("fidelity").get<double>();
    if (j.contains("fullState")) s.fullState = state_from_json(j.at("fullState"));
    return s;
}

json plan_to_json(const ExperimentPlan& p) {
    json steps = json::array();
    for (const auto& s : p.steps)
        steps.push_back({{"qwp1Angle", s.qwp1Angle},
                         {"hwpAngle", s.hwpAngle},
                         {"qwp2Angle", s.qwp2Angle},
                         {"qplateCharge", s.qplateCharge}});
    return {{"steps", steps},
            {"projectionStage", {{"hwpAngle", p.projectionHwpAngle}}},
            {"inputSpan", p.inputSpan},
            {"initialCoin", complex_pair_to_json(p.initialCoin)}};
}

ExperimentPlan plan_from_json(const json& j) {
    ExperimentPlan p;
    for (const auto& s : j.at("steps"))
        p.steps.push_back(ExperimentStep{s.at("qwp1Angle").get<double>(),
                                         s.at("hwpAngle").get<double>(),
                                         s.at("qwp2Angle").get<double>(),
                                         s.at("qplateCharge").get<double>()});
    p.projectionHwpAngle = j.at("projectionStage").at("hwpAngle").get<double>();
    p.inputSpan = j.value("inputSpan", 1);
    if (j.contains("initialCoin"))
        p.initialCoin = complex_pair_from_json(j.at("initialCoin"));
    return p;
}

cplx parse_complex(const std::string& s) {
    std::string t;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    if (t.empty()) throw std::invalid_argument("parse_complex: empty string");
    // Split at the last +/- that is not an exponent sign or leading sign.
    size_t split = std::string::npos;
    for (size_t i = t.size(); i-- > 1;) {
        if ((t[i] == '+' || t[i] == '-') && t[i - 1] != 'e' && t[i - 1] != 'E') {
            split = i;
            break;
        }
    }
    auto parse_part = [](std::string p) -> double {
        bool imag = !p.empty() && (p.back() == 'i' || p.back() == 'I');
        if (imag) p.pop_back();
        if (p.empty() || p == "+") return 1.0;
        if (p == "-") return -1.0;
        return std::stod(p);
    };
    bool tail_imag = t.back() == 'i' || t.back() == 'I';
    if (split == std::string::npos) {
        double v = parse_part(t);
        return tail_imag ? cplx(0, v) : cplx(v, 0);
    }
    std::string head = t.substr(0, split), tail = t.substr(split);
    if (!tail_imag) {
        // e.g. "1i+2": imaginary first
        if (head.back() == 'i' || head.back() == 'I')
            return cplx(parse_part(tail), parse_part(head));
        throw std::invalid_argument("parse_complex: cannot parse '" + s + "'");
    }
    return cplx(parse_part(head), parse_part(tail));
}

}  // namespace qwalk
