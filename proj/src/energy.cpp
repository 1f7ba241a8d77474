#include "fbground/energy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fbground {

double beta_eval(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double s = t * (1.0 - t);
    return 30.0 * s * s;
}

double bigB_eval(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double beta_prime(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
}

std::string to_string(NonlinearityKind k) {
    switch (k) {
    case NonlinearityKind::critical: return "critical";
    case NonlinearityKind::subcritical: return "subcritical";
    case NonlinearityKind::custom: return "custom";
    }
    return "unknown";
}

Nonlinearity Nonlinearity::critical(int dim, double lambda, double kappa) {
    if (dim < 3) throw std::invalid_argument("nonlinearity: dim must be >= 3");
    if (!(lambda > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("critical nonlinearity needs lambda, kappa > 0");
    Nonlinearity n;
    n.kind_ = NonlinearityKind::critical;
    n.dim_ = dim;
    n.lambda_ = lambda;
    n.kappa_ = kappa;
    n.p_ = n.critical_exponent();
    n.C_ = std::max(lambda, kappa) + lambda;
    n.validate();
    return n;
}

Nonlinearity Nonlinearity::subcritical(int dim, double lambda, double kappa, double p) {
    if (dim < 3) throw std::invalid_argument("nonlinearity: dim must be >= 3");
    Nonlinearity n;
    n.kind_ = NonlinearityKind::subcritical;
    n.dim_ = dim;
    if (!(p > 2.0) || !(p < n.critical_exponent()))
        throw std::invalid_argument("subcritical nonlinearity needs 2 < p < 2*");
    if (lambda < 0.0 || kappa < 0.0) throw std::invalid_argument("subcritical nonlinearity needs lambda, kappa >= 0");
    n.lambda_ = lambda;
    n.kappa_ = kappa;
    n.p_ = p;
    n.C_ = std::max(lambda, kappa) + lambda;
    n.validate();
    return n;
}

Nonlinearity Nonlinearity::custom(int dim, Fn f, Fn F, Fn fprime, double C) {
    if (dim < 3) throw std::invalid_argument("nonlinearity: dim must be >= 3");
    if (!f || !F || !fprime) throw std::invalid_argument("custom nonlinearity needs f, F and f'");
    Nonlinearity n;
    n.kind_ = NonlinearityKind::custom;
    n.dim_ = dim;
    n.C_ = C;
    n.f_ = std::move(f);
    n.F_ = std::move(F);
    n.fp_ = std::move(fprime);
    n.validate();
    return n;
}

void Nonlinearity::validate() const {
    for (int i = 0; i <= 200; ++i) {
        const double t = -10.0 * i / 200.0;
        if (f(t) != 0.0) throw std::invalid_argument("nonlinearity violates f(t) = 0 for t <= 0");
    }
    const double q = critical_exponent() - 1.0;
    for (int i = 1; i <= 2000; ++i) {
        // log-spaced in (0, 1e3]
        const double t = std::pow(10.0, -6.0 + 9.0 * i / 2000.0);
        const double ratio = std::abs(f(t)) / (std::pow(t, q) + 1.0);
        if (!std::isfinite(ratio) || ratio > C_ * (1.0 + 1e-12))
            throw std::invalid_argument("nonlinearity violates the growth bound with the stored constant");
    }
}

double Nonlinearity::f(double t) const {
    if (kind_ == NonlinearityKind::custom) return f_(t);
    if (t <= 0.0) return 0.0;
    return lambda_ * t + kappa_ * std::pow(t, p_ - 1.0);
}

double Nonlinearity::F(double t) const {
    if (kind_ == NonlinearityKind::custom) return F_(t);
    if (t <= 0.0) return 0.0;
    return 0.5 * lambda_ * t * t + kappa_ / p_ * std::pow(t, p_);
}

double Nonlinearity::fprime(double t) const {
    if (kind_ == NonlinearityKind::custom) return fp_(t);
    if (t <= 0.0) return 0.0;
    return lambda_ + kappa_ * (p_ - 1.0) * std::pow(t, p_ - 2.0);
}

EnergyReport energy_J(const Field& u, const Nonlinearity& nl) {
    const Grid& g = u.grid;
    EnergyReport r;
    r.dirichlet = 0.5 * dirichlet_form(u, u);
    for (std::size_t i = 0; i < g.size; ++i) {
        const double t = u[i] - 1.0;
        if (t <= 0.0) continue;
        const double w = trapezoid_weight(g, i);
        r.phase += w;
        r.potential += w * nl.F(t);
    }
    r.total = r.dirichlet + r.phase - r.potential;
    return r;
}

EnergyReport energy_Jeps(const Field& u, double eps, const Nonlinearity& nl) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    const Grid& g = u.grid;
    EnergyReport r;
    r.dirichlet = 0.5 * dirichlet_form(u, u);
    for (std::size_t i = 0; i < g.size; ++i) {
        const double t = u[i] - 1.0;
        if (t <= 0.0) continue;
        const double w = trapezoid_weight(g, i);
        r.phase += w * bigB_eval(t / eps);
        r.potential += w * nl.F(t);
    }
    r.total = r.dirichlet + r.phase - r.potential;
    return r;
}

Field grad_Jeps(const Field& u, double eps, const Nonlinearity& nl) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    Field g = laplacian(u);
    const Grid& grid = u.grid;
    for (std::size_t i = 0; i < grid.size; ++i) {
        if (grid.is_boundary(i)) continue;
        const double t = u[i] - 1.0;
        double v = -g[i];
        if (t > 0.0) v += beta_eval(t / eps) / eps - nl.f(t);
        g[i] = v;
    }
    return g;
}

double plus_energy_gap(const Field& u, double eps, const Nonlinearity& nl) {
    if (nl.kind() != NonlinearityKind::critical)
        throw std::invalid_argument("plus_energy_gap is defined for the critical nonlinearity only");
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    const Grid& g = u.grid;
    Field plus(g);
    for (std::size_t i = 0; i < g.size; ++i) plus[i] = std::max(u[i] - 1.0, 0.0);
    const Field grad = grad_Jeps(u, eps, nl);
    const double jeps = energy_Jeps(u, eps, nl).total;
    const double pairing = inner(grad, plus);
    const double q = nl.critical_exponent();
    double crit = 0.0;
    for (std::size_t i = 0; i < g.size; ++i)
        if (plus[i] > 0.0) crit += trapezoid_weight(g, i) * std::pow(plus[i], q);
    return jeps - 0.5 * pairing + g.volume() - nl.kappa() / g.dim * crit;
}

} // namespace fbground
