#include "fbground/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fbground/poisson.hpp"

namespace fbground {

EigenPair principal_eigen(const Grid& g, double tol, int max_iter) {
    PoissonSolver poisson(g);
    Field x(g);
    for (std::size_t i = 0; i < g.size; ++i)
        if (!g.is_boundary(i)) x[i] = 1.0;
    EigenPair ep;
    for (int it = 1; it <= max_iter; ++it) {
        Field y = poisson.solve(x);
        const double nrm = std::sqrt(inner(y, y));
        for (double& v : y.values) v /= nrm;
        const double lam = dirichlet_form(y, y);
        Field r = laplacian(y);
        for (std::size_t i = 0; i < g.size; ++i) r[i] = -r[i] - lam * y[i];
        const double res = std::sqrt(inner(r, r));
        x = std::move(y);
        ep.lambda1 = lam;
        ep.iterations = it;
        ep.residual = res;
        if (res <= tol) break;
    }
    if (ep.residual > tol)
        throw std::runtime_error("principal_eigen: iteration cap exceeded (residual " + std::to_string(ep.residual) + ")");
    for (std::size_t i = 0; i < g.size; ++i)
        if (!g.is_boundary(i) && !(x[i] > 0.0)) throw std::runtime_error("principal_eigen: eigenvector not positive");
    ep.phi1 = std::move(x);
    return ep;
}

double sobolev_constant(int N) {
    if (N < 3) throw std::invalid_argument("sobolev_constant: N must be >= 3");
    using boost::math::quadrature::gauss_kronrod;
    const double n = N;
    auto grad = [n](double r) { return (n - 2) * (n - 2) * std::pow(r, n + 1) * std::pow(1 + r * r, -n); };
    auto mass = [n](double r) { return std::pow(r, n - 1) * std::pow(1 + r * r, -n); };
    const double inf = std::numeric_limits<double>::infinity();
    const double a = gauss_kronrod<double, 61>::integrate(grad, 0.0, inf, 20, 1e-13);
    const double b = gauss_kronrod<double, 61>::integrate(mass, 0.0, inf, 20, 1e-13);
    const double omega = 2.0 * std::pow(std::numbers::pi, n / 2) / std::tgamma(n / 2);
    return std::pow(omega, 2.0 / n) * a / std::pow(b, (n - 2) / n);
}

double sobolev_quotient(const Field& u) {
    const Grid& g = u.grid;
    const double q = 2.0 * g.dim / (g.dim - 2.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size; ++i) acc += trapezoid_weight(g, i) * std::pow(std::abs(u[i]), q);
    return dirichlet_form(u, u) / std::pow(acc, 2.0 / q);
}

KappaThresholds kappa_thresholds(double M, double volume, int N, double S) {
    if (!(M > 0.0) || !(volume > 0.0) || !(S > 0.0) || N < 3)
        throw std::invalid_argument("kappa_thresholds: inputs must be positive and N >= 3");
    const double n = N;
    KappaThresholds k;
    k.upper = std::pow(std::pow(S, n / 2) / (n * (M + volume)), 2.0 / (n - 2));
    k.lower = std::pow(1.0 - 4.0 / (n * n), n / (n - 2)) * k.upper;
    return k;
}

Rho rho_radius(int N, double lambda, double kappa, double S) {
    if (N < 3 || !(lambda > 0.0) || !(kappa > 0.0) || !(S > 0.0))
        throw std::invalid_argument("rho_radius: inputs must be positive and N >= 3");
    const double n = N;
    const double q = 2 * n / (n - 2);
    Rho r;
    r.rho = std::pow(std::pow(S, n / (n - 2)) / (6.0 * (lambda / 2 + kappa / q)), (n - 2) / 4);
    r.floor = r.rho * r.rho / 3.0;
    return r;
}

double mpass_integrand(double t, double lambda, double lambda1, const Field& phi1) {
    const Grid& g = phi1.grid;
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size; ++i) {
        const double p = phi1[i];
        const double e = std::max(t * p - 1.0, 0.0);
        acc += trapezoid_weight(g, i) * (0.5 * lambda1 * t * t * p * p + 1.0 - 0.5 * lambda * e * e);
    }
    return acc;
}

MpassBound mpass_upper_bound(double lambda, double lambda1, const Field& phi1) {
    MpassBound b;
    if (!(lambda > lambda1)) {
        b.value = std::numeric_limits<double>::infinity();
        b.finite = false;
        return b;
    }
    auto m = [&](double t) { return mpass_integrand(t, lambda, lambda1, phi1); };
    double pmax = 0.0;
    for (double v : phi1.values) pmax = std::max(pmax, v);
    if (!(pmax > 0.0)) throw std::invalid_argument("mpass_upper_bound: phi1 must be positive somewhere");
    // Below 1/max(phi1) the integrand grows like t^2; bracket the first descent past it.
    double prev2 = 0.0, prev = 1.0 / pmax;
    double mprev = m(prev);
    double t = 2.0 * prev;
    int doublings = 0;
    while (true) {
        const double mt = m(t);
        if (mt < mprev) break;
        if (++doublings > 200) throw std::runtime_error("mpass_upper_bound: bracketing failed");
        prev2 = prev;
        prev = t;
        mprev = mt;
        t *= 2.0;
    }
    double lo = prev2, hi = t;
    // Coarse scan guards against a non-unimodal bracket, then golden section.
    const int scan = 64;
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= scan; ++k) {
        const double v = m(lo + (hi - lo) * k / scan);
        if (v > best_v) {
            best_v = v;
            best = k;
        }
    }
    const double step = (hi - lo) / scan;
    double a = lo + step * std::max(best - 1, 0);
    double c = lo + step * std::min(best + 1, scan);
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = c - r * (c - a), x2 = a + r * (c - a);
    double f1 = m(x1), f2 = m(x2);
    for (int it = 0; it < 200 && (c - a) > 1e-12 * std::max(1.0, c); ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (c - a);
            f2 = m(x2);
        } else {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - r * (c - a);
            f1 = m(x1);
        }
    }
    b.t_max = 0.5 * (a + c);
    b.value = std::max({m(b.t_max), f1, f2, best_v});
    b.finite = true;
    return b;
}

SpectralData compute_spectral(const Grid& g, const SpectralInputs& in, bool require_finite_M) {
    SpectralData sd;
    EigenPair ep = principal_eigen(g);
    sd.lambda1 = ep.lambda1;
    sd.phi1 = std::move(ep.phi1);
    sd.eigen_iterations = ep.iterations;
    sd.eigen_residual = ep.residual;
    sd.S = sobolev_constant(g.dim);

    if (in.lambda.has_value() == in.lambda_over_lambda1.has_value())
        throw std::invalid_argument("give exactly one of lambda, lambda_over_lambda1");
    sd.lambda = in.lambda ? *in.lambda : *in.lambda_over_lambda1 * sd.lambda1;
    if (in.lambda_star && in.lambda_star_over_lambda1)
        throw std::invalid_argument("give at most one of lambda_star, lambda_star_over_lambda1");
    sd.lambda_star = in.lambda_star ? *in.lambda_star
                     : in.lambda_star_over_lambda1 ? *in.lambda_star_over_lambda1 * sd.lambda1
                                                   : sd.lambda;
    if (!(sd.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");

    sd.M_lambda = mpass_upper_bound(sd.lambda, sd.lambda1, sd.phi1);
    sd.M_lambda_star = mpass_upper_bound(sd.lambda_star, sd.lambda1, sd.phi1);
    if (in.M_override) {
        sd.M = *in.M_override;
        sd.M_overridden = true;
    } else {
        if (!sd.M_lambda_star.finite) {
            if (require_finite_M)
                throw std::invalid_argument("lambda* <= lambda1: the mountain-pass bound is infinite; supply an M override");
            // Thresholds vanish in the limit M -> inf; kappa is only defined when given absolutely.
            sd.M = sd.M_lambda_star.value;
            sd.kappa = in.kappa.value_or(0.0);
            if (sd.kappa > 0.0) {
                const Rho r = rho_radius(g.dim, sd.lambda, sd.kappa, sd.S);
                sd.rho = r.rho;
                sd.rho_floor = r.floor;
            }
            return sd;
        }
        sd.M = sd.M_lambda_star.value;
    }
    const KappaThresholds kt = kappa_thresholds(sd.M, g.volume(), g.dim, sd.S);
    sd.kappa_star_upper = kt.upper;
    sd.kappa_star_lower = kt.lower;

    if (in.kappa.has_value() == in.kappa_fraction.has_value())
        throw std::invalid_argument("give exactly one of kappa, kappa_fraction");
    sd.kappa = in.kappa ? *in.kappa : *in.kappa_fraction * sd.kappa_star_lower;
    if (!(sd.kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    const Rho r = rho_radius(g.dim, sd.lambda, sd.kappa, sd.S);
    sd.rho = r.rho;
    sd.rho_floor = r.floor;
    return sd;
}

} // namespace fbground
