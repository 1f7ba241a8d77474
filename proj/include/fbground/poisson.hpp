#pragma once

#include <memory>
#include <vector>

#include "fbground/grid.hpp"

namespace fbground {

// Exact inverse of the (2*dim+1)-point Dirichlet Laplacian on a box, by the
// type-I discrete sine transform. One instance owns its work buffers and must
// not be shared between threads; separate instances are independent.
class PoissonSolver {
public:
    explicit PoissonSolver(const Grid& g);
    ~PoissonSolver();
    PoissonSolver(const PoissonSolver&) = delete;
    PoissonSolver& operator=(const PoissonSolver&) = delete;

    const Grid& grid() const { return grid_; }

    // Returns u with zero trace and -lap_h u = rhs at interior nodes.
    Field solve(const Field& rhs);
    // Same, on full-size node arrays (boundary entries ignored / set to zero).
    void solve(const std::vector<double>& rhs, std::vector<double>& out);

    // Eigenvalue of -lap_h for the lowest mode (1,...,1).
    double lowest_eigenvalue() const;

private:
    struct Impl;
    Grid grid_;
    std::unique_ptr<Impl> impl_;
};

} // namespace fbground
