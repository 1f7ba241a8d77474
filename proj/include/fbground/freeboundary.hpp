#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbground/grid.hpp"

namespace fbground {

enum class Side { plus, minus };

using Vec3 = std::array<double, 3>;

struct Facet {
    std::array<Vec3, 3> vertices;
    Vec3 centroid;
    Vec3 normal;   // unit, outward from the band between the two level sets
    Vec3 gradient; // grad u interpolated to the centroid
    double area = 0.0;
};

struct LevelSetSurface {
    double level = 0.0;
    Side side = Side::plus;
    std::vector<Facet> facets;

    double total_area() const;
};

// Piecewise-linear level surface from a tetrahedral split of every cell
// (three-dimensional grids). Normals follow grad u on the plus side and
// -grad u on the minus side.
LevelSetSurface level_set(const Field& u, double level, Side side = Side::plus);

LevelSetSurface flip_side(const LevelSetSurface& s);

struct FluxReport {
    double delta_plus = 0.0;
    double delta_minus = 0.0;
    double plus_integral = 0.0;  // int_{u=1+d+} (|grad u|^2 - 2) phi.n+ dS, n+ outward from {u > 1+d+}
    double minus_integral = 0.0; // int_{u=1-d-} |grad u|^2 phi.n- dS,       n- outward from {u > 1-d-}
    double defect = 0.0;         // plus_integral - minus_integral
    double band_fraction = 0.0;  // |{|u-1| <= max d} on supp phi| / |supp phi|
    std::vector<std::string> warnings;
};

FluxReport generalized_fbc(const Field& u, const VectorField& phi, double delta_plus, double delta_minus);

struct FbcSweep {
    std::vector<FluxReport> reports;
    double plus0 = 0.0;   // linear extrapolation to delta -> 0
    double minus0 = 0.0;
    double defect0 = 0.0;
    double relative_defect = 0.0; // |defect0| / max(|plus0|, |minus0|)
};

// prod_a sin^2(pi x_a / L_a) (x - centre): smooth, vanishing on the boundary.
VectorField radial_test_field(const Grid& g);

FbcSweep fbc_sweep(const Field& u, const VectorField& phi, const std::vector<double>& deltas);

struct JumpEstimate {
    double delta = 0.0;
    double mean = 0.0;            // |grad u|^2 at the paired facets themselves
    double spread = 0.0;
    double one_sided_mean = 0.0;  // each side extrapolated quadratically along n to the crossing
    double one_sided_spread = 0.0;
    std::size_t pairs = 0;
    double unmatched_fraction = 0.0;
    bool warning = false;    // more than 20% of facets unmatched
};

struct FluxJumpReport {
    std::vector<JumpEstimate> estimates;
    double extrapolated_mean = 0.0;           // linear fit of mean in delta, evaluated at 0
    double extrapolated_one_sided_mean = 0.0;
    bool empty() const { return estimates.empty(); }
};

FluxJumpReport flux_jump(const Field& u, const std::vector<double>& deltas);

// Smallest delta whose level sets lie two cells off the free boundary:
// 2 max(h) times the median |grad u| over {u = 1}; 0 when {u = 1} is empty.
double resolved_delta(const Field& u);

struct NondegeneracySample {
    Vec3 point;
    double r = 0.0;
    double alpha = 0.0;
};

struct NondegeneracyReport {
    double min_alpha = 0.0;
    std::vector<NondegeneracySample> samples;
    double near_mean_alpha = 0.0; // samples with r <= r0/4
    double far_mean_alpha = 0.0;  // samples with r >= r0/2
    bool empty() const { return samples.empty(); }
};

// r is the distance to the piecewise-linear surface {u = 1}.
NondegeneracyReport nondegeneracy_scan(const Field& u, double r0);

void write_surface_csv(std::ostream& os, const LevelSetSurface& s);

} // namespace fbground
