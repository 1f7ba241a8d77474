#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbground/energy.hpp"
#include "fbground/grid.hpp"
#include "fbground/nehari.hpp"

namespace fbground {

class PoissonSolver;

struct SolveConfig {
    double tolerance = 1e-9;      // L2 norm of the Euler-Lagrange residual
    int max_newton = 60;
    double backtrack = 0.5;
    int max_sweeps = 200;         // mountain-pass deformation sweeps
    int path_samples = 16;
    double minres_rtol = 1e-10;
    int minres_max_iter = 1000;
    double mpa_tolerance = 1e-3;  // dual norm of the gradient at the path maximum

    void validate() const;
};

struct HistoryEntry {
    int iteration = 0;
    double level = 0.0;
    double residual_norm = 0.0;
};

struct CriticalPoint {
    Field field;
    double eps = 0.0;
    double level = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
    int linear_iterations = 0;
    std::vector<HistoryEntry> history;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, Field last, std::vector<HistoryEntry> history)
        : std::runtime_error(what), last_iterate(std::move(last)), history(std::move(history)) {}
    Field last_iterate;
    std::vector<HistoryEntry> history;
};

// L2 norm with trapezoid weights.
double l2_norm(const Field& u);

Field el_residual(const Field& u, double eps, const Nonlinearity& nl);

// Jacobian of el_residual applied to v.
Field el_jacobian_apply(const Field& u, double eps, const Nonlinearity& nl, const Field& v);

struct MinresResult {
    int iterations = 0;
    double relative_residual = 0.0; // in the preconditioned norm
    bool converged = false;
};

// Preconditioned MINRES for symmetric A and symmetric positive definite M^{-1}.
MinresResult minres(const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply_A,
                    const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply_Minv,
                    const std::vector<double>& b, std::vector<double>& x, double rtol, int max_iter);

CriticalPoint solve_critical_point(const Field& init, double eps, const Nonlinearity& nl, const SolveConfig& cfg);

struct MountainPassResult {
    Path path;                        // ray samples, including the refined maximiser
    double level = 0.0;               // refined critical level
    double path_max = 0.0;            // max of J_eps over the samples
    double path_max_J = 0.0;          // max of J over the same samples
    double gap_indicator = 0.0;       // path_max - level
    std::vector<double> sweep_levels; // ray maximum after each accepted sweep
    int sweeps = 0;
    CriticalPoint candidate;
};

// Minimax over rays through 0, starting from the ray of phi1.
MountainPassResult estimate_c_eps(const Nonlinearity& nl, double eps, const SolveConfig& cfg, const Field& phi1);

struct PsReport {
    bool stalled = false;
    bool kappa_above_threshold = false;
    std::string message;
    std::vector<std::string> warnings;
};

PsReport ps_diagnostic(const std::vector<HistoryEntry>& history, double kappa, double kappa_star_upper,
                       int window = 20);

void write_residual_csv(std::ostream& os, const std::vector<HistoryEntry>& history);

} // namespace fbground
