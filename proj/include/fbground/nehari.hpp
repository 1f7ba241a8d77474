#pragma once

#include <utility>
#include <vector>

#include "fbground/energy.hpp"
#include "fbground/grid.hpp"

namespace fbground {

// u = plus + minus with plus = (u-1)_+ and minus = min(u, 1).
struct SplitField {
    Field plus;
    Field minus;
};

SplitField split(const Field& u);

// Integrals of the split used by the fiber formulas. On a grid the edge form
// couples the two parts through edges that straddle u = 1:
//   coupling = <grad u^-, grad u^+> >= 0, O(h) as the mesh is refined.
// The sets {u>1} and {u<1} are resolved edge-wise, so
//   int_{u>1} |grad u|^2 := <grad u, grad u^+> = dplus + coupling,
//   int_{u<1} |grad u|^2 := <grad u, grad u^-> = dminus + coupling.
struct SplitIntegrals {
    double dminus = 0.0;    // |grad u^-|^2
    double dplus = 0.0;     // |grad u^+|^2
    double coupling = 0.0;  // <grad u^-, grad u^+>
    double plus_sq = 0.0;   // int (u^+)^2
    double plus_crit = 0.0; // int (u^+)^{2*}
    double volume = 0.0;    // |{u > 1}|

    // int_{u>1}[|grad u|^2 - lambda (u-1)^2]
    double numerator(double lambda) const { return dplus + coupling - lambda * plus_sq; }
};

SplitIntegrals split_integrals(const Field& u);

struct NehariPoint {
    Field field;
    double residual = 0.0;
    double energy = 0.0;
};

struct Path {
    std::vector<double> t;
    std::vector<Field> samples;
    std::vector<double> levels;
};

// (1+s) u^- for s in [-1, 0], u^- + s u^+ for s > 0.
Field zeta(const Field& u, double s);

// Positive maximiser of s -> J(zeta(u, s)) for the critical kind.
double s_star(const Field& u, const Nonlinearity& nl);

NehariPoint project(const Field& u, const Nonlinearity& nl);

// J(zeta(u, s)) from the split integrals.
double fiber_value(const SplitIntegrals& si, double s, const Nonlinearity& nl);
std::vector<std::pair<double, double>> fiber_profile(const Field& u, const Nonlinearity& nl,
                                                     const std::vector<double>& s_grid);

// Closed forms of J at the projection and on the manifold.
double projected_energy_identity(const Field& u, const Nonlinearity& nl);
double manifold_energy_identity(const Field& u, const Nonlinearity& nl);

// gamma(t) = zeta(u, (s0 + 1) t - 1), with t of the point u itself included.
Path mountain_path(const NehariPoint& p, const Nonlinearity& nl, int samples = 16);

// |numerator - kappa int (u^+)^{2*}| / max(1, kappa int (u^+)^{2*}); +inf when u^+ = 0.
double nehari_residual(const Field& u, const Nonlinearity& nl);

} // namespace fbground
