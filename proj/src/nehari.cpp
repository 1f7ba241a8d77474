#include "fbground/nehari.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/tools/roots.hpp>

namespace fbground {

namespace {

void require_critical(const Nonlinearity& nl, const char* what) {
    if (nl.kind() != NonlinearityKind::critical)
        throw std::invalid_argument(std::string(what) + " is defined for the critical nonlinearity only");
}

} // namespace

SplitField split(const Field& u) {
    SplitField s{Field(u.grid), Field(u.grid)};
    for (std::size_t i = 0; i < u.size(); ++i) {
        s.plus[i] = std::max(u[i] - 1.0, 0.0);
        s.minus[i] = std::min(u[i], 1.0);
    }
    return s;
}

SplitIntegrals split_integrals(const Field& u) {
    const SplitField sf = split(u);
    const Grid& g = u.grid;
    const double q = 2.0 * g.dim / (g.dim - 2.0);
    SplitIntegrals si;
    si.dminus = dirichlet_form(sf.minus, sf.minus);
    si.dplus = dirichlet_form(sf.plus, sf.plus);
    si.coupling = dirichlet_form(sf.minus, sf.plus);
    for (std::size_t i = 0; i < g.size; ++i) {
        const double p = sf.plus[i];
        if (p <= 0.0) continue;
        const double w = trapezoid_weight(g, i);
        si.volume += w;
        si.plus_sq += w * p * p;
        si.plus_crit += w * std::pow(p, q);
    }
    return si;
}

Field zeta(const Field& u, double s) {
    if (s < -1.0) throw std::invalid_argument("zeta: s must be >= -1");
    Field out(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double minus = std::min(u[i], 1.0);
        const double plus = std::max(u[i] - 1.0, 0.0);
        out[i] = s <= 0.0 ? (1.0 + s) * minus : minus + s * plus;
    }
    return out;
}

namespace {

double s_star_from(const SplitIntegrals& si, const Nonlinearity& nl) {
    const double kq = nl.kappa() * si.plus_crit;
    if (!(kq > 0.0)) throw std::domain_error("u+ vanishes");
    const double P = si.dplus - nl.lambda() * si.plus_sq;
    const double X = si.coupling;
    if (!(P + X > 0.0)) throw std::domain_error("fiber has no interior maximum");
    const double q = nl.critical_exponent();
    // Stationarity of the fiber: X + s P - kappa Q s^{2*-1} = 0.
    if (X == 0.0) return std::pow(P / kq, 1.0 / (q - 2.0));
    auto psi = [&](double s) { return X / s + P - kq * std::pow(s, q - 2.0); };
    double lo = 1.0, hi = 1.0;
    while (psi(lo) <= 0.0) lo *= 0.5;
    while (psi(hi) >= 0.0) hi *= 2.0;
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(psi, lo, hi, boost::math::tools::eps_tolerance<double>(53), iters);
    return 0.5 * (r.first + r.second);
}

} // namespace

double s_star(const Field& u, const Nonlinearity& nl) {
    require_critical(nl, "s_star");
    return s_star_from(split_integrals(u), nl);
}

double nehari_residual(const Field& u, const Nonlinearity& nl) {
    require_critical(nl, "nehari_residual");
    const SplitIntegrals si = split_integrals(u);
    const double kq = nl.kappa() * si.plus_crit;
    if (!(kq > 0.0)) return std::numeric_limits<double>::infinity();
    return std::abs(si.numerator(nl.lambda()) - kq) / std::max(1.0, kq);
}

NehariPoint project(const Field& u, const Nonlinearity& nl) {
    const double s = s_star(u, nl);
    NehariPoint p;
    p.field = zeta(u, s);
    p.residual = nehari_residual(p.field, nl);
    p.energy = energy_J(p.field, nl).total;
    return p;
}

double fiber_value(const SplitIntegrals& si, double s, const Nonlinearity& nl) {
    require_critical(nl, "fiber_value");
    if (s < -1.0) throw std::invalid_argument("fiber: s must be >= -1");
    if (s <= 0.0) return 0.5 * (1.0 + s) * (1.0 + s) * si.dminus;
    const double q = nl.critical_exponent();
    return 0.5 * si.dminus + s * si.coupling + 0.5 * s * s * (si.dplus - nl.lambda() * si.plus_sq) -
           nl.kappa() / q * std::pow(s, q) * si.plus_crit + si.volume;
}

std::vector<std::pair<double, double>> fiber_profile(const Field& u, const Nonlinearity& nl,
                                                     const std::vector<double>& s_grid) {
    const SplitIntegrals si = split_integrals(u);
    std::vector<std::pair<double, double>> out;
    out.reserve(s_grid.size());
    for (double s : s_grid) out.emplace_back(s, fiber_value(si, s, nl));
    return out;
}

double projected_energy_identity(const Field& u, const Nonlinearity& nl) {
    require_critical(nl, "projected_energy_identity");
    const SplitIntegrals si = split_integrals(u);
    const double s = s_star_from(si, nl);
    const double N = u.grid.dim;
    const double q = nl.critical_exponent();
    return 0.5 * si.dminus + (1.0 - 1.0 / q) * s * si.coupling +
           s * s / N * (si.dplus - nl.lambda() * si.plus_sq) + si.volume;
}

double manifold_energy_identity(const Field& u, const Nonlinearity& nl) {
    const SplitIntegrals si = split_integrals(u);
    const double N = u.grid.dim;
    return 0.5 * (si.dminus + si.coupling) + si.numerator(nl.lambda()) / N + si.volume;
}

Path mountain_path(const NehariPoint& p, const Nonlinearity& nl, int samples) {
    require_critical(nl, "mountain_path");
    if (samples < 2) throw std::invalid_argument("mountain_path: need at least 2 samples");
    const SplitIntegrals si = split_integrals(p.field);
    double s0 = 2.0;
    int doublings = 0;
    while (fiber_value(si, s0, nl) >= 0.0) {
        if (++doublings > 60) throw std::runtime_error("mountain_path: no negative fiber level within 60 doublings");
        s0 *= 2.0;
    }
    std::vector<double> ts;
    for (int k = 0; k <= samples; ++k) ts.push_back(static_cast<double>(k) / samples);
    ts.push_back(2.0 / (s0 + 1.0));
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    Path path;
    for (double t : ts) {
        const double s = (s0 + 1.0) * t - 1.0;
        path.t.push_back(t);
        path.samples.push_back(std::abs(s - 1.0) < 1e-15 ? p.field : zeta(p.field, std::max(s, -1.0)));
        path.levels.push_back(energy_J(path.samples.back(), nl).total);
    }
    return path;
}

} // namespace fbground
