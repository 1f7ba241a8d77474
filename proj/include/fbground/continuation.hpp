#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbground/energy.hpp"
#include "fbground/grid.hpp"
#include "fbground/solver.hpp"

namespace fbground {

enum class CapPolicy { refine, reject };

struct ContinuationConfig {
    SolveConfig solve;
    CapPolicy cap_policy = CapPolicy::refine;
    int refine_multiple = 32;     // refined interval counts are multiples of this
    int max_nodes_per_axis = 513;
    double level_floor = 0.0;     // a step at or below this level is treated as collapse
};

struct ContinuationTrace {
    std::vector<double> schedule;
    std::vector<CriticalPoint> points;
    Field limit;
    std::vector<double> levels;
    std::vector<double> uniform_dist; // |u_j - u_{j-1}|_inf, previous iterate interpolated
    std::vector<double> h1_dist;
    std::vector<bool> refined;        // grid refined before step j
    // First step's mountain-pass data.
    std::vector<double> sweep_levels;
    double path_max = 0.0;
    double path_max_J = 0.0;
    double gap_indicator = 0.0;
};

class ContinuationError : public std::runtime_error {
public:
    ContinuationError(const std::string& what, ContinuationTrace partial)
        : std::runtime_error(what), trace(std::move(partial)) {}
    ContinuationTrace trace;
};

// Grid on which eps is resolved (eps >= 2 max h); the input grid if it already is.
Grid resolved_grid(const Grid& g, double eps, int multiple, int max_nodes_per_axis);

std::vector<double> geometric_schedule(double eps0, double ratio, int steps);

ContinuationTrace run_continuation(const std::vector<double>& schedule, const Nonlinearity& nl, const Field& phi1,
                                   const ContinuationConfig& cfg);

struct ConvergenceReport {
    std::vector<double> uniform_dist;
    std::vector<double> h1_dist;
    std::vector<double> levels;
    double J_limit = 0.0;
    double measure_level_one = 0.0; // |{|u - 1| <= 1e-12}|
    double tolerance = 0.0;
    bool sandwich_lower = false;    // J(u) - tol <= min of the last 3 levels
    bool sandwich_upper = false;    // max of the last 3 levels <= J(u) + |{u=1}| + tol
    bool uniform_decreasing = false;
    bool oscillating = false;
    bool h1_proxy = false;
    bool h1_trend_monotone = false;
    bool sandwich() const { return sandwich_lower && sandwich_upper; }
};

ConvergenceReport convergence_report(const ContinuationTrace& trace, const Nonlinearity& nl,
                                     double sandwich_rel_tol = 5e-3);

// max |grad u| over nodes at distance >= r/2 from the boundary.
double interior_max_gradient(const Field& u, double r);
std::vector<double> lipschitz_diagnostic(const std::vector<CriticalPoint>& points, double r);

struct BarrierReport {
    double A0 = 0.0;
    double phi0_max = 0.0;
    double lower_violation = 0.0; // max(0, -u)
    double upper_violation = 0.0; // max(0, u - phi0)
    bool ok = false;
};
BarrierReport barrier_check(const Field& u, const Nonlinearity& nl, double tol = 1e-10);

struct BoundsReport {
    double linf = 0.0;
    double lipschitz = 0.0;
    bool barrier_ok = false;
    std::optional<double> linf_bound_predicted; // the constant is not explicit; left empty
    double M = 0.0;
    double crit_bound = 0.0;                  // N (M + |Omega|) / kappa
    std::vector<double> crit_integrals;       // int (u^+)^{2*} per step
    std::vector<bool> crit_checked;           // level <= M
    std::vector<bool> crit_ok;
    double linf_ratio = 0.0;                  // max/min of |u_j|_inf
    bool linf_uniform = false;
    bool applicable = false;                  // kappa < lower threshold
    bool all_ok() const;
};
BoundsReport linf_bound_check(const ContinuationTrace& trace, double M, const Nonlinearity& nl, double kappa_lower,
                              double lipschitz_r = 0.25);

} // namespace fbground
