#include "fbground/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbground/poisson.hpp"

namespace fbground {

Grid resolved_grid(const Grid& g, double eps, int multiple, int max_nodes_per_axis) {
    if (eps >= 2.0 * g.max_spacing() * (1.0 - 1e-12)) return g;
    std::vector<int> nodes(g.dim);
    for (int a = 0; a < g.dim; ++a) {
        const double need = 2.0 * g.extents[a] / eps;
        int intervals = multiple * static_cast<int>(std::ceil(need / multiple - 1e-9));
        intervals = std::max(intervals, g.nodes[a] - 1);
        if (intervals + 1 > max_nodes_per_axis)
            throw std::invalid_argument("grid too coarse for eps = " + std::to_string(eps) +
                                        " and refinement would exceed the node cap");
        nodes[a] = intervals + 1;
    }
    return build_grid(g.dim, g.extents, nodes);
}

std::vector<double> geometric_schedule(double eps0, double ratio, int steps) {
    if (steps <= 0) throw std::invalid_argument("empty schedule");
    if (!(eps0 > 0.0) || !(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("schedule needs eps0 > 0 and ratio in (0,1)");
    std::vector<double> s;
    for (int j = 0; j < steps; ++j) s.push_back(eps0 * std::pow(ratio, j));
    return s;
}

ContinuationTrace run_continuation(const std::vector<double>& schedule, const Nonlinearity& nl, const Field& phi1,
                                   const ContinuationConfig& cfg) {
    if (schedule.empty()) throw std::invalid_argument("empty schedule");
    for (std::size_t j = 0; j < schedule.size(); ++j) {
        if (!(schedule[j] > 0.0)) throw std::invalid_argument("schedule entries must be positive");
        if (j > 0 && !(schedule[j] < schedule[j - 1])) throw std::invalid_argument("schedule must be strictly decreasing");
    }
    ContinuationTrace tr;
    Grid grid = phi1.grid;
    for (std::size_t j = 0; j < schedule.size(); ++j) {
        const double eps = schedule[j];
        Grid next = grid;
        if (eps < 2.0 * grid.max_spacing() * (1.0 - 1e-12)) {
            if (cfg.cap_policy == CapPolicy::reject)
                throw ContinuationError("eps = " + std::to_string(eps) + " is below 2h on the working grid", tr);
            try {
                next = resolved_grid(grid, eps, cfg.refine_multiple, cfg.max_nodes_per_axis);
            } catch (const std::invalid_argument& e) {
                throw ContinuationError(e.what(), tr);
            }
        }
        const bool refined = !(next == grid);
        grid = next;
        CriticalPoint cp;
        try {
            if (j == 0) {
                const Field dir = refined ? prolongate(phi1, grid) : phi1;
                MountainPassResult mp = estimate_c_eps(nl, eps, cfg.solve, dir);
                tr.sweep_levels = mp.sweep_levels;
                tr.path_max = mp.path_max;
                tr.path_max_J = mp.path_max_J;
                tr.gap_indicator = mp.gap_indicator;
                cp = std::move(mp.candidate);
            } else {
                const Field& prev = tr.points.back().field;
                const Field init = refined ? prolongate(prev, grid) : prev;
                cp = solve_critical_point(init, eps, nl, cfg.solve);
            }
        } catch (const std::exception& e) {
            throw ContinuationError("step " + std::to_string(j) + " (eps = " + std::to_string(eps) + "): " + e.what(),
                                    tr);
        }
        if (!(cp.level > cfg.level_floor))
            throw ContinuationError("step " + std::to_string(j) + " collapsed to level " + std::to_string(cp.level) +
                                        " (trivial solution)",
                                    tr);
        if (j > 0) {
            const Field& prev = tr.points.back().field;
            const Field p = (prev.grid == grid) ? prev : prolongate(prev, grid);
            Field diff(grid);
            double sup = 0.0;
            for (std::size_t i = 0; i < grid.size; ++i) {
                diff[i] = cp.field[i] - p[i];
                sup = std::max(sup, std::abs(diff[i]));
            }
            tr.uniform_dist.push_back(sup);
            tr.h1_dist.push_back(std::sqrt(dirichlet_form(diff, diff)));
        }
        tr.schedule.push_back(eps);
        tr.levels.push_back(cp.level);
        tr.refined.push_back(refined);
        tr.points.push_back(std::move(cp));
        tr.limit = tr.points.back().field;
    }
    return tr;
}

ConvergenceReport convergence_report(const ContinuationTrace& trace, const Nonlinearity& nl, double sandwich_rel_tol) {
    if (trace.points.size() < 2) throw std::invalid_argument("convergence_report needs at least 2 steps");
    ConvergenceReport r;
    r.uniform_dist = trace.uniform_dist;
    r.h1_dist = trace.h1_dist;
    r.levels = trace.levels;
    const Field& u = trace.limit;
    r.J_limit = energy_J(u, nl).total;
    for (std::size_t i = 0; i < u.size(); ++i)
        if (std::abs(u[i] - 1.0) <= 1e-12) r.measure_level_one += trapezoid_weight(u.grid, i);
    r.tolerance = sandwich_rel_tol * std::abs(r.levels.back());
    const std::size_t n = r.levels.size();
    const std::size_t from = n >= 3 ? n - 3 : 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t j = from; j < n; ++j) {
        lo = std::min(lo, r.levels[j]);
        hi = std::max(hi, r.levels[j]);
    }
    r.sandwich_lower = r.J_limit - r.tolerance <= lo;
    r.sandwich_upper = hi <= r.J_limit + r.measure_level_one + r.tolerance;

    r.uniform_decreasing = true;
    for (std::size_t j = 1; j < r.uniform_dist.size(); ++j)
        if (r.uniform_dist[j] > r.uniform_dist[j - 1]) r.uniform_decreasing = false;
    r.oscillating = !r.uniform_decreasing;

    const double scale = std::sqrt(dirichlet_form(u, u));
    r.h1_proxy = r.h1_dist.back() < 10.0 * r.uniform_dist.back() * scale;
    r.h1_trend_monotone = true;
    const std::size_t m = r.h1_dist.size();
    for (std::size_t j = (m >= 3 ? m - 2 : 1); j < m; ++j)
        if (r.h1_dist[j] > r.h1_dist[j - 1]) r.h1_trend_monotone = false;
    return r;
}

double interior_max_gradient(const Field& u, double r) {
    const Grid& g = u.grid;
    const VectorField grad = gradient(u);
    std::vector<double> x;
    double best = 0.0;
    for (std::size_t i = 0; i < g.size; ++i) {
        g.coords(i, x);
        bool inside = true;
        for (int a = 0; a < g.dim; ++a)
            if (std::min(x[a], g.extents[a] - x[a]) < 0.5 * r - 1e-12) inside = false;
        if (!inside) continue;
        double s = 0.0;
        const double* d = grad.at(i);
        for (int a = 0; a < g.dim; ++a) s += d[a] * d[a];
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

std::vector<double> lipschitz_diagnostic(const std::vector<CriticalPoint>& points, double r) {
    std::vector<double> out;
    for (const auto& p : points) out.push_back(interior_max_gradient(p.field, r));
    return out;
}

BarrierReport barrier_check(const Field& u, const Nonlinearity& nl, double tol) {
    BarrierReport rep;
    const Grid& g = u.grid;
    for (std::size_t i = 0; i < g.size; ++i) rep.A0 = std::max(rep.A0, std::abs(nl.f(u[i] - 1.0)));
    Field rhs(g);
    for (std::size_t i = 0; i < g.size; ++i)
        if (!g.is_boundary(i)) rhs[i] = rep.A0;
    Field phi0(g);
    if (rep.A0 > 0.0) {
        PoissonSolver poisson(g);
        phi0 = poisson.solve(rhs);
        if (!phi0.all_finite()) throw std::runtime_error("barrier_check: Poisson solve failed");
    }
    for (std::size_t i = 0; i < g.size; ++i) {
        rep.phi0_max = std::max(rep.phi0_max, phi0[i]);
        rep.lower_violation = std::max(rep.lower_violation, -u[i]);
        rep.upper_violation = std::max(rep.upper_violation, u[i] - phi0[i]);
    }
    rep.ok = rep.lower_violation <= tol && rep.upper_violation <= tol;
    return rep;
}

bool BoundsReport::all_ok() const {
    if (!barrier_ok || !linf_uniform) return false;
    for (std::size_t j = 0; j < crit_ok.size(); ++j)
        if (crit_checked[j] && !crit_ok[j]) return false;
    return true;
}

BoundsReport linf_bound_check(const ContinuationTrace& trace, double M, const Nonlinearity& nl, double kappa_lower,
                              double lipschitz_r) {
    if (nl.kind() != NonlinearityKind::critical)
        throw std::invalid_argument("linf_bound_check is defined for the critical nonlinearity only");
    BoundsReport rep;
    rep.M = M;
    rep.applicable = nl.kappa() < kappa_lower;
    if (trace.points.empty()) return rep;
    const Grid& g0 = trace.points.front().field.grid;
    rep.crit_bound = g0.dim * (M + g0.volume()) / nl.kappa();
    const double q = nl.critical_exponent();
    double lmin = std::numeric_limits<double>::infinity(), lmax = 0.0;
    rep.barrier_ok = true;
    for (const auto& p : trace.points) {
        const Field& u = p.field;
        double crit = 0.0, linf = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            linf = std::max(linf, std::abs(u[i]));
            const double t = u[i] - 1.0;
            if (t > 0.0) crit += trapezoid_weight(u.grid, i) * std::pow(t, q);
        }
        rep.crit_integrals.push_back(crit);
        const bool checked = p.level <= M;
        rep.crit_checked.push_back(checked);
        rep.crit_ok.push_back(crit <= rep.crit_bound * (1.0 + 1e-8));
        lmin = std::min(lmin, linf);
        lmax = std::max(lmax, linf);
        rep.lipschitz = std::max(rep.lipschitz, interior_max_gradient(u, lipschitz_r));
        if (!barrier_check(u, nl).ok) rep.barrier_ok = false;
    }
    rep.linf = lmax;
    rep.linf_ratio = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    rep.linf_uniform = lmax == 0.0 || rep.linf_ratio <= 10.0;
    return rep;
}

} // namespace fbground
