#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace fbground {

// Node-centred uniform grid on the box [0, extents[0]] x ... x [0, extents[dim-1]].
// Nodes are stored row-major: the last axis varies fastest.
struct Grid {
    int dim = 0;
    std::vector<double> extents;
    std::vector<int> nodes;
    std::vector<double> spacing;
    std::vector<std::size_t> strides;
    std::size_t size = 0;

    bool is_boundary(std::size_t idx) const;
    void index_to_multi(std::size_t idx, std::vector<int>& mi) const;
    std::size_t multi_to_index(std::span<const int> mi) const;
    void coords(std::size_t idx, std::vector<double>& x) const;

    double cell_volume() const;   // product of spacings
    double volume() const;        // |Omega|
    double max_spacing() const;
    std::size_t interior_count() const;
    std::vector<std::size_t> boundary_nodes() const;

    bool operator==(const Grid& other) const;
};

Grid build_grid(int dim, std::vector<double> extents, std::vector<int> nodes);

// Node data on a grid. Solution fields carry a zero trace; diagnostic fields
// (test profiles, level-set inputs) may not, see has_zero_trace().
struct Field {
    Grid grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(g.size, fill) {}
    Field(const Grid& g, std::vector<double> v);

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::size_t size() const { return values.size(); }

    bool has_zero_trace() const;
    bool all_finite() const;
};

// dim components per node, node-major.
struct VectorField {
    Grid grid;
    std::vector<double> values;

    VectorField() = default;
    explicit VectorField(const Grid& g) : grid(g), values(g.size * g.dim, 0.0) {}

    double* at(std::size_t node) { return values.data() + node * grid.dim; }
    const double* at(std::size_t node) const { return values.data() + node * grid.dim; }
};

Field sample(const Grid& g, const std::function<double(std::span<const double>)>& fn);
VectorField sample_vector(const Grid& g,
                          const std::function<void(std::span<const double>, std::span<double>)>& fn);

VectorField gradient(const Field& u);
Field laplacian(const Field& u);

// Composite trapezoid weight of a node.
double trapezoid_weight(const Grid& g, std::size_t idx);
std::vector<double> trapezoid_weights(const Grid& g);

using NodePredicate = std::function<bool(std::size_t)>;
double integrate(std::span<const double> samples, const Grid& g, const NodePredicate& region = {});

// Edge-sum form sum_a sum_edges (du)(dv)/h_a^2 * cell volume. For zero-trace
// fields this equals <-lap u, v> summed with interior weights.
double dirichlet_form(const Field& u, const Field& v);

// L2 product with trapezoid weights.
double inner(const Field& u, const Field& v);

struct Norms {
    double h1_seminorm = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
};
Norms norms(const Field& u);

// Multilinear interpolation of u onto another grid covering the same box;
// boundary nodes of the target stay zero (solution fields carry a zero trace).
Field prolongate(const Field& u, const Grid& target);

// Multilinear interpolation of a node array at a physical point.
double interpolate(const Grid& g, std::span<const double> values, std::span<const double> x,
                   int components = 1, int component = 0);

void write_field(std::ostream& os, const Field& u);
Field read_field(std::istream& is);

} // namespace fbground
