#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "fbground/nehari.hpp"
#include "support.hpp"

using namespace fbground;

namespace {

// Narrow zero-trace bump reaching 1 + height at the centre.
Field bump(const Grid& g, double height, double width = 0.15) {
    return sample(g, [&](std::span<const double> x) {
        double r2 = 0.0, w = 1.0;
        for (int a = 0; a < 3; ++a) {
            r2 += (x[a] - 0.5) * (x[a] - 0.5);
            w *= std::sin(M_PI * x[a]);
        }
        return (1.0 + height) * w * std::exp(-r2 / (width * width));
    });
}

double direct_fiber(const Field& u, double s, const Nonlinearity& nl) { return energy_J(zeta(u, s), nl).total; }

// Golden-section maximiser of s -> J(zeta_u(s)) on [a, b], evaluated directly.
double golden_max(const Field& u, const Nonlinearity& nl, double a, double b, double tol) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = direct_fiber(u, c, nl), fd = direct_fiber(u, d, nl);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = direct_fiber(u, c, nl);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = direct_fiber(u, d, nl);
        }
    }
    return 0.5 * (a + b);
}

const Nonlinearity nl = Nonlinearity::critical(3, 10.0, 0.01);

} // namespace

TEST_CASE("split") {
    const Grid g = fbtest::cube(5);
    const SplitField z = split(Field(g));
    for (std::size_t i = 0; i < g.size; ++i) {
        CHECK(z.plus[i] == 0.0);
        CHECK(z.minus[i] == 0.0);
    }
    Field u(g);
    u[62] = 1.7;
    u[63] = 0.3;
    const SplitField s = split(u);
    CHECK(s.plus[62] == doctest::Approx(0.7));
    CHECK(s.minus[62] == 1.0);
    CHECK(s.plus[63] == 0.0);
    CHECK(s.minus[63] == 0.3);

    std::mt19937_64 rng(1);
    const Field r = fbtest::random_field(fbtest::cube(9), rng, 0.0, 3.0);
    const SplitField rs = split(r);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(rs.plus[i] + rs.minus[i] == r[i]);
        CHECK(rs.plus[i] >= 0.0);
        CHECK(rs.minus[i] <= 1.0);
        CHECK(rs.plus[i] * (rs.minus[i] - 1.0) == 0.0);
    }
}

TEST_CASE("zeta endpoints and the jump at 0") {
    const Grid g = fbtest::cube(9);
    std::mt19937_64 rng(2);
    const Field u = fbtest::random_field(g, rng, 0.0, 2.0);
    CHECK(zeta(u, 1.0).values == u.values);
    for (double v : zeta(u, -1.0).values) CHECK(v == 0.0);
    CHECK_THROWS_AS(zeta(u, -1.5), std::invalid_argument);

    double measure = 0.0;
    for (std::size_t i = 0; i < g.size; ++i)
        if (u[i] > 1.0) measure += trapezoid_weight(g, i);
    const double jump = direct_fiber(u, 1e-9, nl) - direct_fiber(u, 0.0, nl);
    CHECK(jump == doctest::Approx(measure).epsilon(1e-6));
}

TEST_CASE("fiber formula matches direct evaluation") {
    const Grid g = fbtest::cube(9);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> sd(-1.0, 3.0);
    for (int k = 0; k < 50; ++k) {
        const Field u = fbtest::random_field(g, rng, 0.0, 2.5);
        const double s = sd(rng);
        const double direct = direct_fiber(u, s, nl);
        CHECK(fiber_value(split_integrals(u), s, nl) == doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("s_star: golden-section oracle, homogeneity, membership") {
    const Grid g = fbtest::cube(17);
    const Field u = bump(g, 1.0);
    const double s = s_star(u, nl);
    double hi = 2.0;
    while (direct_fiber(u, hi, nl) > 0.0) hi *= 2.0;
    const double oracle = golden_max(u, nl, 1e-3, hi, 1e-10);
    CHECK(std::abs(s - oracle) <= 1e-6);

    const SplitField sp = split(u);
    for (double t : {0.5, 2.0, 10.0}) {
        Field v(g);
        for (std::size_t i = 0; i < g.size; ++i) v[i] = sp.minus[i] + t * sp.plus[i];
        CHECK(s_star(v, nl) * t == doctest::Approx(s).epsilon(1e-10));
    }

    const NehariPoint p = project(u, nl);
    CHECK(p.residual <= 1e-10);
    CHECK(s_star(p.field, nl) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("projection: idempotence, energy, level identities") {
    const Grid g = fbtest::cube(17);
    for (double height : {0.5, 1.0, 3.0}) {
        const Field u = bump(g, height);
        const NehariPoint p = project(u, nl);
        const NehariPoint q = project(p.field, nl);
        CHECK(fbtest::max_abs_diff(p.field, q.field) < 1e-10);
        CHECK(p.energy == doctest::Approx(energy_J(zeta(u, s_star(u, nl)), nl).total).epsilon(1e-10));
        CHECK(nehari_residual(p.field, nl) <= 1e-8);
        CHECK(manifold_energy_identity(p.field, nl) == doctest::Approx(energy_J(p.field, nl).total).epsilon(1e-6));
        CHECK(projected_energy_identity(u, nl) == doctest::Approx(p.energy).epsilon(1e-10));
    }
}

TEST_CASE("projection is undefined without an interior fiber maximum") {
    const Grid g = fbtest::cube(9);
    CHECK_THROWS_WITH(project(Field(g), nl), doctest::Contains("u+ vanishes"));
    // A broad, shallow plus part with a huge lambda makes the fiber numerator negative.
    const Nonlinearity heavy = Nonlinearity::critical(3, 1e4, 0.01);
    Field u = fbtest::sine_product(g, 1.2);
    CHECK_THROWS_WITH(project(u, heavy), doctest::Contains("no interior maximum"));
}

TEST_CASE("fiber profile") {
    const Grid g = fbtest::cube(17);
    const Field u = bump(g, 1.0);
    const SplitIntegrals si = split_integrals(u);
    std::vector<double> neg;
    for (int i = 0; i <= 20; ++i) neg.push_back(-1.0 + i / 20.0);
    const auto prof = fiber_profile(u, nl, neg);
    double prev = -1.0;
    for (const auto& [s, v] : prof) {
        CHECK(v == doctest::Approx(0.5 * (1 + s) * (1 + s) * si.dminus).epsilon(1e-14));
        CHECK(v > prev);
        prev = v;
    }

    const double s_u = s_star(u, nl);
    double hi = 1.0;
    while (fiber_profile(u, nl, {hi}).front().second > 0.0) hi *= 2.0;
    std::vector<double> dense;
    const double ds = hi / 20000;
    for (int i = 1; i <= 20000; ++i) dense.push_back(i * ds);
    const auto dp = fiber_profile(u, nl, dense);
    std::size_t best = 0;
    for (std::size_t i = 1; i < dp.size(); ++i)
        if (dp[i].second > dp[best].second) best = i;
    CHECK(std::abs(dp[best].first - s_u) <= ds);
    CHECK(dp.back().second < 0.0);
}

TEST_CASE("mountain path through a point of the manifold") {
    const Grid g = fbtest::cube(17);
    const NehariPoint p = project(bump(g, 1.0), nl);
    const Path path = mountain_path(p, nl);
    for (double v : path.samples.front().values) CHECK(v == 0.0);
    CHECK(path.t.front() == 0.0);
    CHECK(path.t.back() == 1.0);
    CHECK(path.levels.back() < 0.0);
    double top = -1e300;
    for (double l : path.levels) top = std::max(top, l);
    CHECK(top == doctest::Approx(energy_J(p.field, nl).total).epsilon(1e-8));
}

TEST_CASE("nehari residual") {
    const Grid g = fbtest::cube(9);
    std::mt19937_64 rng(5);
    const Field low = fbtest::random_field(g, rng, 0.0, 1.0);
    CHECK(nehari_residual(low, nl) == std::numeric_limits<double>::infinity());
    const Field u = fbtest::random_field(g, rng, 0.0, 2.0);
    CHECK(nehari_residual(project(u, nl).field, nl) <= 1e-8);
    const Nonlinearity sub = Nonlinearity::subcritical(3, 1.0, 1.0, 4.0);
    CHECK_THROWS_AS(nehari_residual(u, sub), std::invalid_argument);
}
