#pragma once

#include <cmath>
#include <random>

#include "fbground/grid.hpp"

namespace fbtest {

inline fbground::Grid cube(int n, double L = 1.0) { return fbground::build_grid(3, {L, L, L}, {n, n, n}); }

// Zero-trace field with interior values uniform in [lo, hi].
inline fbground::Field random_field(const fbground::Grid& g, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    fbground::Field u(g);
    for (std::size_t i = 0; i < g.size; ++i)
        if (!g.is_boundary(i)) u[i] = d(rng);
    return u;
}

inline fbground::Field sine_product(const fbground::Grid& g, double amp = 1.0) {
    return fbground::sample(g, [&](std::span<const double> x) {
        double v = amp;
        for (int a = 0; a < g.dim; ++a) v *= std::sin(M_PI * x[a] / g.extents[a]);
        return v;
    });
}

inline double max_abs_diff(const fbground::Field& a, const fbground::Field& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace fbtest
