#include "fbground/grid.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fbground {

namespace {

// Advances a row-major multi-index; returns false after the last node.
bool advance(std::vector<int>& mi, const std::vector<int>& nodes) {
    for (int a = static_cast<int>(mi.size()) - 1; a >= 0; --a) {
        if (++mi[a] < nodes[a]) return true;
        mi[a] = 0;
    }
    return false;
}

bool on_boundary(const std::vector<int>& mi, const std::vector<int>& nodes) {
    for (std::size_t a = 0; a < mi.size(); ++a)
        if (mi[a] == 0 || mi[a] == nodes[a] - 1) return true;
    return false;
}

} // namespace

bool Grid::is_boundary(std::size_t idx) const {
    for (int a = dim - 1; a >= 0; --a) {
        int i = static_cast<int>(idx % nodes[a]);
        if (i == 0 || i == nodes[a] - 1) return true;
        idx /= nodes[a];
    }
    return false;
}

void Grid::index_to_multi(std::size_t idx, std::vector<int>& mi) const {
    mi.resize(dim);
    for (int a = dim - 1; a >= 0; --a) {
        mi[a] = static_cast<int>(idx % nodes[a]);
        idx /= nodes[a];
    }
}

std::size_t Grid::multi_to_index(std::span<const int> mi) const {
    std::size_t idx = 0;
    for (int a = 0; a < dim; ++a) idx += static_cast<std::size_t>(mi[a]) * strides[a];
    return idx;
}

void Grid::coords(std::size_t idx, std::vector<double>& x) const {
    x.resize(dim);
    for (int a = dim - 1; a >= 0; --a) {
        x[a] = static_cast<double>(idx % nodes[a]) * spacing[a];
        idx /= nodes[a];
    }
}

double Grid::cell_volume() const {
    double v = 1.0;
    for (double h : spacing) v *= h;
    return v;
}

double Grid::volume() const {
    double v = 1.0;
    for (double e : extents) v *= e;
    return v;
}

double Grid::max_spacing() const { return *std::max_element(spacing.begin(), spacing.end()); }

std::size_t Grid::interior_count() const {
    std::size_t c = 1;
    for (int n : nodes) c *= static_cast<std::size_t>(n - 2);
    return c;
}

std::vector<std::size_t> Grid::boundary_nodes() const {
    std::vector<std::size_t> out;
    std::vector<int> mi(dim, 0);
    std::size_t idx = 0;
    do {
        if (on_boundary(mi, nodes)) out.push_back(idx);
        ++idx;
    } while (advance(mi, nodes));
    return out;
}

bool Grid::operator==(const Grid& o) const {
    return dim == o.dim && nodes == o.nodes && extents == o.extents;
}

Grid build_grid(int dim, std::vector<double> extents, std::vector<int> nodes) {
    if (dim < 3) throw std::invalid_argument("unsupported dimension " + std::to_string(dim) + " (need dim >= 3)");
    if (static_cast<int>(extents.size()) != dim || static_cast<int>(nodes.size()) != dim)
        throw std::invalid_argument("extents and nodes must have dim entries");
    Grid g;
    g.dim = dim;
    g.size = 1;
    for (int a = 0; a < dim; ++a) {
        if (nodes[a] < 3) throw std::invalid_argument("axis " + std::to_string(a) + " has fewer than 3 nodes: no interior");
        if (!(extents[a] > 0.0) || !std::isfinite(extents[a]))
            throw std::invalid_argument("extents must be positive and finite");
        g.size *= static_cast<std::size_t>(nodes[a]);
    }
    g.extents = std::move(extents);
    g.nodes = std::move(nodes);
    g.spacing.resize(dim);
    g.strides.assign(dim, 1);
    for (int a = 0; a < dim; ++a) g.spacing[a] = g.extents[a] / (g.nodes[a] - 1);
    for (int a = dim - 2; a >= 0; --a) g.strides[a] = g.strides[a + 1] * g.nodes[a + 1];
    return g;
}

Field::Field(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != g.size) throw std::invalid_argument("field size does not match grid");
}

bool Field::has_zero_trace() const {
    for (std::size_t i : grid.boundary_nodes())
        if (values[i] != 0.0) return false;
    return true;
}

bool Field::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Field sample(const Grid& g, const std::function<double(std::span<const double>)>& fn) {
    Field u(g);
    std::vector<double> x;
    for (std::size_t i = 0; i < g.size; ++i) {
        g.coords(i, x);
        u[i] = fn(x);
    }
    return u;
}

VectorField sample_vector(const Grid& g,
                          const std::function<void(std::span<const double>, std::span<double>)>& fn) {
    VectorField v(g);
    std::vector<double> x;
    for (std::size_t i = 0; i < g.size; ++i) {
        g.coords(i, x);
        fn(x, std::span<double>(v.at(i), g.dim));
    }
    return v;
}

VectorField gradient(const Field& u) {
    const Grid& g = u.grid;
    VectorField out(g);
    std::vector<int> mi(g.dim, 0);
    std::size_t idx = 0;
    const double* v = u.values.data();
    do {
        double* d = out.at(idx);
        for (int a = 0; a < g.dim; ++a) {
            const std::size_t s = g.strides[a];
            const double h = g.spacing[a];
            if (mi[a] == 0)
                d[a] = (-3.0 * v[idx] + 4.0 * v[idx + s] - v[idx + 2 * s]) / (2.0 * h);
            else if (mi[a] == g.nodes[a] - 1)
                d[a] = (3.0 * v[idx] - 4.0 * v[idx - s] + v[idx - 2 * s]) / (2.0 * h);
            else
                d[a] = (v[idx + s] - v[idx - s]) / (2.0 * h);
        }
        ++idx;
    } while (advance(mi, g.nodes));
    return out;
}

Field laplacian(const Field& u) {
    const Grid& g = u.grid;
    Field out(g);
    std::vector<int> mi(g.dim, 0);
    std::vector<double> inv_h2(g.dim);
    for (int a = 0; a < g.dim; ++a) inv_h2[a] = 1.0 / (g.spacing[a] * g.spacing[a]);
    const double* v = u.values.data();
    std::size_t idx = 0;
    do {
        if (!on_boundary(mi, g.nodes)) {
            double acc = 0.0;
            for (int a = 0; a < g.dim; ++a) {
                const std::size_t s = g.strides[a];
                acc += (v[idx + s] - 2.0 * v[idx] + v[idx - s]) * inv_h2[a];
            }
            out[idx] = acc;
        }
        ++idx;
    } while (advance(mi, g.nodes));
    return out;
}

double trapezoid_weight(const Grid& g, std::size_t idx) {
    double w = g.cell_volume();
    for (int a = g.dim - 1; a >= 0; --a) {
        int i = static_cast<int>(idx % g.nodes[a]);
        if (i == 0 || i == g.nodes[a] - 1) w *= 0.5;
        idx /= g.nodes[a];
    }
    return w;
}

std::vector<double> trapezoid_weights(const Grid& g) {
    std::vector<double> w(g.size);
    for (std::size_t i = 0; i < g.size; ++i) w[i] = trapezoid_weight(g, i);
    return w;
}

double integrate(std::span<const double> samples, const Grid& g, const NodePredicate& region) {
    if (samples.size() != g.size) throw std::invalid_argument("integrate: sample count does not match grid");
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size; ++i) {
        if (region && !region(i)) continue;
        acc += trapezoid_weight(g, i) * samples[i];
    }
    return acc;
}

double dirichlet_form(const Field& u, const Field& v) {
    const Grid& g = u.grid;
    if (!(g == v.grid)) throw std::invalid_argument("dirichlet_form: grid mismatch");
    std::vector<double> inv_h2(g.dim);
    for (int a = 0; a < g.dim; ++a) inv_h2[a] = 1.0 / (g.spacing[a] * g.spacing[a]);
    std::vector<int> mi(g.dim, 0);
    const double* x = u.values.data();
    const double* y = v.values.data();
    double acc = 0.0;
    std::size_t idx = 0;
    do {
        for (int a = 0; a < g.dim; ++a) {
            if (mi[a] == g.nodes[a] - 1) continue;
            const std::size_t j = idx + g.strides[a];
            acc += (x[j] - x[idx]) * (y[j] - y[idx]) * inv_h2[a];
        }
        ++idx;
    } while (advance(mi, g.nodes));
    return acc * g.cell_volume();
}

double inner(const Field& u, const Field& v) {
    if (!(u.grid == v.grid)) throw std::invalid_argument("inner: grid mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += trapezoid_weight(u.grid, i) * u[i] * v[i];
    return acc;
}

Norms norms(const Field& u) {
    Norms n;
    n.h1_seminorm = std::sqrt(std::max(0.0, dirichlet_form(u, u)));
    n.l2 = std::sqrt(inner(u, u));
    for (double v : u.values) n.linf = std::max(n.linf, std::abs(v));
    return n;
}

double interpolate(const Grid& g, std::span<const double> values, std::span<const double> x,
                   int components, int component) {
    const int d = g.dim;
    int base[16];
    double t[16];
    for (int a = 0; a < d; ++a) {
        double s = x[a] / g.spacing[a];
        int i = static_cast<int>(std::floor(s));
        i = std::clamp(i, 0, g.nodes[a] - 2);
        base[a] = i;
        t[a] = std::clamp(s - i, 0.0, 1.0);
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        double w = 1.0;
        std::size_t idx = 0;
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> (d - 1 - a)) & 1;
            w *= bit ? t[a] : 1.0 - t[a];
            idx += static_cast<std::size_t>(base[a] + bit) * g.strides[a];
        }
        if (w != 0.0) acc += w * values[idx * components + component];
    }
    return acc;
}

Field prolongate(const Field& u, const Grid& target) {
    if (target.dim != u.grid.dim || target.extents != u.grid.extents)
        throw std::invalid_argument("prolongate: grids must cover the same box");
    Field out(target);
    std::vector<double> x;
    for (std::size_t i = 0; i < target.size; ++i) {
        if (target.is_boundary(i)) continue;
        target.coords(i, x);
        out[i] = interpolate(u.grid, u.values, x);
    }
    return out;
}

void write_field(std::ostream& os, const Field& u) {
    const Grid& g = u.grid;
    os << g.dim;
    os << std::setprecision(17);
    for (double e : g.extents) os << ' ' << e;
    for (int n : g.nodes) os << ' ' << n;
    os << '\n';
    for (double v : u.values) os << v << '\n';
}

Field read_field(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("field file: missing header");
    std::istringstream hs(header);
    int dim = 0;
    if (!(hs >> dim) || dim < 1 || dim > 16) throw std::runtime_error("field file: bad dimension in header");
    std::vector<double> extents(dim);
    std::vector<int> nodes(dim);
    for (auto& e : extents)
        if (!(hs >> e)) throw std::runtime_error("field file: header truncated (extents)");
    for (auto& n : nodes)
        if (!(hs >> n)) throw std::runtime_error("field file: header truncated (nodes)");
    Grid g = build_grid(dim, extents, nodes);
    Field u(g);
    for (std::size_t i = 0; i < g.size; ++i) {
        if (!(is >> u.values[i]))
            throw std::runtime_error("field file truncated: expected " + std::to_string(g.size) + " values, read " +
                                     std::to_string(i));
    }
    if (!u.all_finite()) throw std::runtime_error("field file: non-finite value");
    return u;
}

} // namespace fbground
