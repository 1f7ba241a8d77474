#include "fbground/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>

#include "fbground/poisson.hpp"

namespace fbground {

void SolveConfig::validate() const {
    if (!(tolerance > 0.0) || max_newton <= 0 || !(backtrack > 0.0 && backtrack < 1.0) || max_sweeps <= 0 ||
        !(minres_rtol > 0.0) || minres_max_iter <= 0 || !(mpa_tolerance > 0.0))
        throw std::invalid_argument("solver configuration: all settings must be positive (backtrack in (0,1))");
    if (path_samples < 8) throw std::invalid_argument("solver configuration: path_samples must be >= 8");
}

double l2_norm(const Field& u) { return std::sqrt(inner(u, u)); }

Field el_residual(const Field& u, double eps, const Nonlinearity& nl) { return grad_Jeps(u, eps, nl); }

namespace {

std::vector<double> jacobian_diagonal(const Field& u, double eps, const Nonlinearity& nl) {
    const Grid& g = u.grid;
    std::vector<double> d(g.size, 0.0);
    for (std::size_t i = 0; i < g.size; ++i) {
        if (g.is_boundary(i)) continue;
        const double t = u[i] - 1.0;
        if (t > 0.0) d[i] = beta_prime(t / eps) / (eps * eps) - nl.fprime(t);
    }
    return d;
}

void apply_jacobian(const Grid& g, const std::vector<double>& diag, const std::vector<double>& v,
                    std::vector<double>& out) {
    Field vf(g, v);
    Field lap = laplacian(vf);
    out.resize(g.size);
    for (std::size_t i = 0; i < g.size; ++i) out[i] = g.is_boundary(i) ? 0.0 : -lap[i] + diag[i] * v[i];
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

Field el_jacobian_apply(const Field& u, double eps, const Nonlinearity& nl, const Field& v) {
    const auto diag = jacobian_diagonal(u, eps, nl);
    Field out(u.grid);
    apply_jacobian(u.grid, diag, v.values, out.values);
    return out;
}

MinresResult minres(const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply_A,
                    const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply_Minv,
                    const std::vector<double>& b, std::vector<double>& x, double rtol, int max_iter) {
    const std::size_t n = b.size();
    MinresResult res;
    x.assign(n, 0.0);
    std::vector<double> r1 = b, r2 = b, y, v(n), w(n, 0.0), w1(n), w2(n, 0.0);
    apply_Minv(r1, y);
    const double beta1_sq = dot(r1, y);
    if (beta1_sq < 0.0) throw std::runtime_error("minres: preconditioner is not positive definite");
    const double beta1 = std::sqrt(beta1_sq);
    if (beta1 == 0.0) {
        res.converged = true;
        return res;
    }
    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
    double cs = -1.0, sn = 0.0;
    const double tiny = std::numeric_limits<double>::epsilon();
    std::vector<double> Av;
    for (int itn = 1; itn <= max_iter; ++itn) {
        const double s = 1.0 / beta;
        for (std::size_t i = 0; i < n; ++i) v[i] = s * y[i];
        apply_A(v, Av);
        y = Av;
        if (itn >= 2)
            for (std::size_t i = 0; i < n; ++i) y[i] -= (beta / oldb) * r1[i];
        const double alfa = dot(v, y);
        for (std::size_t i = 0; i < n; ++i) y[i] -= (alfa / beta) * r2[i];
        r1.swap(r2);
        r2 = y;
        apply_Minv(r2, y);
        oldb = beta;
        const double bsq = dot(r2, y);
        if (bsq < 0.0) throw std::runtime_error("minres: preconditioner is not positive definite");
        beta = std::sqrt(bsq);

        const double oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        double gamma = std::max(std::hypot(gbar, beta), tiny);
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;

        const double denom = 1.0 / gamma;
        w1.swap(w2);
        w2.swap(w);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        res.iterations = itn;
        res.relative_residual = phibar / beta1;
        if (res.relative_residual <= rtol || beta == 0.0) {
            res.converged = true;
            break;
        }
    }
    return res;
}

CriticalPoint solve_critical_point(const Field& init, double eps, const Nonlinearity& nl, const SolveConfig& cfg) {
    cfg.validate();
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (!init.has_zero_trace()) throw std::invalid_argument("initial field must vanish on the boundary");
    if (!init.all_finite()) throw std::invalid_argument("initial field has non-finite values");
    const Grid& g = init.grid;
    PoissonSolver poisson(g);

    CriticalPoint cp;
    cp.eps = eps;
    Field u = init;
    Field res = el_residual(u, eps, nl);
    double rn = l2_norm(res);
    cp.history.push_back({0, energy_Jeps(u, eps, nl).total, rn});

    int it = 0;
    while (rn > cfg.tolerance) {
        if (it >= cfg.max_newton)
            throw SolverError("newton: no convergence within " + std::to_string(cfg.max_newton) + " iterations", u,
                              cp.history);
        ++it;
        const auto diag = jacobian_diagonal(u, eps, nl);
        std::vector<double> rhs(g.size), du;
        for (std::size_t i = 0; i < g.size; ++i) rhs[i] = -res[i];
        auto A = [&](const std::vector<double>& v, std::vector<double>& out) { apply_jacobian(g, diag, v, out); };
        auto Minv = [&](const std::vector<double>& v, std::vector<double>& out) { poisson.solve(v, out); };
        const MinresResult mr = minres(A, Minv, rhs, du, cfg.minres_rtol, cfg.minres_max_iter);
        cp.linear_iterations += mr.iterations;

        // Backtracking on the residual norm; a saddle-seeking step may raise J_eps.
        double alpha = 1.0;
        Field trial(g);
        Field tres;
        double tn = 0.0;
        while (true) {
            for (std::size_t i = 0; i < g.size; ++i) trial[i] = u[i] + alpha * du[i];
            tres = el_residual(trial, eps, nl);
            tn = l2_norm(tres);
            if (std::isfinite(tn) && tn <= (1.0 - 1e-4 * alpha) * rn) break;
            alpha *= cfg.backtrack;
            if (alpha < 1e-10) throw SolverError("newton: line search failed", u, cp.history);
        }
        u = std::move(trial);
        res = std::move(tres);
        rn = tn;
        cp.history.push_back({it, energy_Jeps(u, eps, nl).total, rn});
    }
    double umin = 0.0;
    for (double v : u.values) umin = std::min(umin, v);
    if (umin < -1e-12)
        throw SolverError("maximum principle violated: min u = " + std::to_string(umin), u, cp.history);
    cp.field = std::move(u);
    cp.level = energy_Jeps(cp.field, eps, nl).total;
    cp.residual_norm = rn;
    cp.iterations = it;
    return cp;
}

namespace {

// J_eps along the ray t -> t w, with |grad w| = 1 in the edge form.
class Ray {
public:
    Ray(const Field& w, double eps, const Nonlinearity& nl) : w_(w), eps_(eps), nl_(nl) {
        dw_ = dirichlet_form(w, w);
        cell_ = w.grid.cell_volume();
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i] > 0.0 && !w.grid.is_boundary(i)) pos_.push_back(w[i]);
        std::sort(pos_.begin(), pos_.end(), std::greater<>());
    }

    double energy(double t) const {
        double acc = 0.0;
        for (double wi : pos_) {
            const double s = t * wi - 1.0;
            if (s <= 0.0) break;
            acc += bigB_eval(s / eps_) - nl_.F(s);
        }
        return 0.5 * t * t * dw_ + cell_ * acc;
    }

    const Field& direction() const { return w_; }

private:
    Field w_;
    double eps_;
    const Nonlinearity& nl_;
    double dw_ = 0.0, cell_ = 0.0;
    std::vector<double> pos_;
};

struct RayMax {
    double T = 0.0;      // endpoint with negative energy
    double t_star = 0.0; // maximiser
    double level = 0.0;
};

RayMax maximise_ray(const Ray& ray, int K) {
    RayMax rm;
    double T = 1.0;
    int doublings = 0;
    while (ray.energy(T) >= 0.0) {
        if (++doublings > 60) throw std::runtime_error("lambda too small: the ray never reaches negative energy");
        T *= 2.0;
    }
    rm.T = T;
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= K; ++k) {
        const double v = ray.energy(T * k / K);
        if (v > best_v) {
            best_v = v;
            best = k;
        }
    }
    double a = T * std::max(best - 1, 0) / K, c = T * std::min(best + 1, K) / K;
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = c - r * (c - a), x2 = a + r * (c - a);
    double f1 = ray.energy(x1), f2 = ray.energy(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (c - a);
            f2 = ray.energy(x2);
        } else {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - r * (c - a);
            f1 = ray.energy(x1);
        }
    }
    rm.t_star = f1 > f2 ? x1 : x2;
    rm.level = std::max(f1, f2);
    if (best_v > rm.level) {
        rm.t_star = T * best / K;
        rm.level = best_v;
    }
    return rm;
}

Field normalized(const Field& v) {
    Field w = v;
    const double n = std::sqrt(dirichlet_form(v, v));
    if (!(n > 0.0)) throw std::runtime_error("mountain pass: degenerate direction");
    for (double& x : w.values) x /= n;
    return w;
}

Field scaled(const Field& w, double t) {
    Field v = w;
    for (double& x : v.values) x *= t;
    return v;
}

} // namespace

MountainPassResult estimate_c_eps(const Nonlinearity& nl, double eps, const SolveConfig& cfg, const Field& phi1) {
    cfg.validate();
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    const Grid& g = phi1.grid;
    PoissonSolver poisson(g);
    const int K = cfg.path_samples;

    MountainPassResult out;
    auto ray = std::make_unique<Ray>(normalized(phi1), eps, nl);
    RayMax rm = maximise_ray(*ray, K);
    out.sweep_levels.push_back(rm.level);

    double tau = 1.0;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        const Field v = scaled(ray->direction(), rm.t_star);
        const Field grad = el_residual(v, eps, nl);
        const Field sob = poisson.solve(grad);
        const double gs = inner(grad, sob);
        if (std::sqrt(std::max(gs, 0.0)) < cfg.mpa_tolerance) break;
        bool accepted = false;
        while (tau > 1e-10) {
            Field trial = v;
            for (std::size_t i = 0; i < g.size; ++i) trial[i] -= tau * sob[i];
            auto tray = std::make_unique<Ray>(normalized(trial), eps, nl);
            const RayMax trm = maximise_ray(*tray, K);
            if (trm.level <= rm.level - 1e-4 * tau * gs) {
                const double drop = rm.level - trm.level;
                ray = std::move(tray);
                rm = trm;
                out.sweep_levels.push_back(rm.level);
                tau = std::min(1.5 * tau, 1.0);
                accepted = true;
                if (drop < 1e-8) tau = 0.0;
                break;
            }
            tau *= 0.5;
        }
        ++out.sweeps;
        if (!accepted || tau == 0.0) break;
    }

    // Path: the final ray sampled at K+1 points plus its maximiser.
    std::vector<double> ts;
    for (int k = 0; k <= K; ++k) ts.push_back(static_cast<double>(k) / K);
    ts.push_back(rm.t_star / rm.T);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    out.path_max = -std::numeric_limits<double>::infinity();
    out.path_max_J = -std::numeric_limits<double>::infinity();
    for (double t : ts) {
        Field s = scaled(ray->direction(), t * rm.T);
        const double lev = energy_Jeps(s, eps, nl).total;
        out.path_max = std::max(out.path_max, lev);
        out.path_max_J = std::max(out.path_max_J, energy_J(s, nl).total);
        out.path.t.push_back(t);
        out.path.levels.push_back(lev);
        out.path.samples.push_back(std::move(s));
    }
    out.candidate = solve_critical_point(scaled(ray->direction(), rm.t_star), eps, nl, cfg);
    out.level = out.candidate.level;
    out.gap_indicator = out.path_max - out.level;
    return out;
}

PsReport ps_diagnostic(const std::vector<HistoryEntry>& history, double kappa, double kappa_star_upper, int window) {
    PsReport rep;
    const std::size_t w = static_cast<std::size_t>(std::max(window, 2));
    bool bounded = true;
    for (const auto& h : history)
        if (!std::isfinite(h.level)) bounded = false;
    if (bounded && history.size() >= w) {
        for (std::size_t s = 0; s + w <= history.size() && !rep.stalled; ++s) {
            const double start = history[s].residual_norm;
            double lo = start;
            for (std::size_t k = s; k < s + w; ++k) lo = std::min(lo, history[k].residual_norm);
            if (start > 0.0 && lo > 0.9 * start) rep.stalled = true;
        }
    }
    rep.message = rep.stalled ? "stagnating residual at bounded level (numerical Palais-Smale failure indicator)"
                              : "no PS obstruction observed";
    if (rep.stalled) rep.warnings.push_back(rep.message);
    rep.kappa_above_threshold = kappa >= kappa_star_upper;
    if (rep.kappa_above_threshold) rep.warnings.push_back("compactness threshold exceeded");
    return rep;
}

void write_residual_csv(std::ostream& os, const std::vector<HistoryEntry>& history) {
    os << "iteration,level,residual_norm\n" << std::setprecision(17);
    for (const auto& h : history) os << h.iteration << ',' << h.level << ',' << h.residual_norm << '\n';
}

} // namespace fbground
