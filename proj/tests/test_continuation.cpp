#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fbground/continuation.hpp"
#include "fbground/spectral.hpp"
#include "support.hpp"

using namespace fbground;

namespace {

struct Run {
    SpectralData sd;
    Nonlinearity nl;
    ContinuationTrace trace;
};

SpectralData spectral(double kappa_fraction) {
    SpectralInputs in;
    in.lambda_over_lambda1 = 1.5;
    in.lambda_star_over_lambda1 = 1.25;
    in.kappa_fraction = kappa_fraction;
    return compute_spectral(fbtest::cube(33), in);
}

const Run& run() {
    static const Run r = [] {
        SpectralData sd = spectral(0.5);
        Nonlinearity nl = Nonlinearity::critical(3, sd.lambda, sd.kappa);
        ContinuationTrace tr = run_continuation(geometric_schedule(0.4, 0.5, 3), nl, sd.phi1, ContinuationConfig{});
        return Run{std::move(sd), std::move(nl), std::move(tr)};
    }();
    return r;
}

// Trace built from one field repeated.
ContinuationTrace constant_trace(const Field& u, double level, int steps) {
    ContinuationTrace tr;
    for (int j = 0; j < steps; ++j) {
        CriticalPoint cp;
        cp.field = u;
        cp.eps = 0.4 / (1 << j);
        cp.level = level;
        tr.schedule.push_back(cp.eps);
        tr.levels.push_back(level);
        tr.refined.push_back(false);
        tr.points.push_back(cp);
        if (j > 0) {
            tr.uniform_dist.push_back(0.0);
            tr.h1_dist.push_back(0.0);
        }
    }
    tr.limit = u;
    return tr;
}

} // namespace

TEST_CASE("schedules and grid refinement") {
    const auto s = geometric_schedule(0.4, 0.5, 5);
    REQUIRE(s.size() == 5);
    CHECK(s.back() == doctest::Approx(0.025).epsilon(1e-15));
    CHECK_THROWS_WITH(geometric_schedule(0.4, 0.5, 0), "empty schedule");
    CHECK_THROWS_AS(geometric_schedule(0.4, 1.5, 3), std::invalid_argument);

    const Grid g = fbtest::cube(65);
    CHECK(resolved_grid(g, 0.05, 32, 513) == g);
    CHECK(resolved_grid(g, 0.025, 32, 513).nodes == std::vector<int>{97, 97, 97});
    CHECK_THROWS_AS(resolved_grid(g, 0.001, 32, 513), std::invalid_argument);

    const SpectralData sd = spectral(0.5);
    const Nonlinearity nl = Nonlinearity::critical(3, sd.lambda, sd.kappa);
    CHECK_THROWS_WITH(run_continuation({}, nl, sd.phi1, ContinuationConfig{}), "empty schedule");
    CHECK_THROWS_AS(run_continuation({0.1, 0.2}, nl, sd.phi1, ContinuationConfig{}), std::invalid_argument);
    ContinuationConfig reject;
    reject.cap_policy = CapPolicy::reject;
    CHECK_THROWS_AS(run_continuation({0.01}, nl, sd.phi1, reject), ContinuationError);
}

TEST_CASE("one-step schedule") {
    const SpectralData sd = spectral(0.5);
    const Nonlinearity nl = Nonlinearity::critical(3, sd.lambda, sd.kappa);
    const ContinuationTrace tr = run_continuation({0.4}, nl, sd.phi1, ContinuationConfig{});
    CHECK(tr.points.size() == 1);
    CHECK(tr.uniform_dist.empty());
    CHECK(tr.h1_dist.empty());
    CHECK(tr.levels.front() >= sd.rho_floor);
}

TEST_CASE("collapse to the trivial level is rejected") {
    const SpectralData sd = spectral(0.5);
    const Nonlinearity nl = Nonlinearity::critical(3, sd.lambda, sd.kappa);
    ContinuationConfig cfg;
    cfg.level_floor = 1e9; // every level counts as collapsed
    try {
        run_continuation({0.4, 0.2}, nl, sd.phi1, cfg);
        FAIL("expected a collapse error");
    } catch (const ContinuationError& e) {
        CHECK(std::string(e.what()).find("trivial") != std::string::npos);
        CHECK(e.trace.points.empty());
    }
}

TEST_CASE("three-step trace on 33^3") {
    const Run& r = run();
    const ContinuationTrace& tr = r.trace;
    REQUIRE(tr.points.size() == 3);
    CHECK(tr.uniform_dist.size() == 2);
    CHECK(tr.h1_dist.size() == 2);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(tr.points[j].eps == tr.schedule[j]);
        CHECK(tr.levels[j] >= r.sd.rho_floor);
        CHECK(tr.levels[j] <= r.sd.M);
    }
    // Level changes shrink as eps halves on a fixed grid.
    CHECK(std::abs(tr.levels[2] - tr.levels[1]) < std::abs(tr.levels[1] - tr.levels[0]));
    // Warm starts cost no more than the mountain-pass step.
    const int first = static_cast<int>(tr.sweep_levels.size()) + tr.points[0].iterations;
    for (std::size_t j = 1; j < 3; ++j) CHECK(tr.points[j].iterations <= first);

    const ConvergenceReport cr = convergence_report(tr, r.nl);
    CHECK(cr.sandwich());
    CHECK(cr.measure_level_one == 0.0);
    CHECK(cr.h1_proxy);
    CHECK(cr.oscillating == !cr.uniform_decreasing);

    const auto lip = lipschitz_diagnostic(tr.points, 0.25);
    double lo = 1e300, hi = 0.0;
    for (double v : lip) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi < 2.0 * lo);

    // Central and one-sided differences are bounded by 4 |w|_inf / h per component.
    const Field& a = tr.points[1].field;
    const Field& b = tr.points[2].field;
    Field w(a.grid);
    for (std::size_t i = 0; i < a.size(); ++i) w[i] = b[i] - a[i];
    const double bound = std::sqrt(3.0) * 4.0 * tr.uniform_dist[1] / a.grid.max_spacing();
    CHECK(interior_max_gradient(w, 0.25) <= bound);
}

TEST_CASE("bounds on the trace") {
    const Run& r = run();
    const BoundsReport br = linf_bound_check(r.trace, r.sd.M, r.nl, r.sd.kappa_star_lower);
    CHECK(br.applicable);
    CHECK(br.barrier_ok);
    CHECK(br.linf_uniform);
    CHECK(br.all_ok());
    CHECK(br.crit_integrals.size() == 3);
    CHECK_FALSE(br.linf_bound_predicted.has_value());
    for (const auto& p : r.trace.points) CHECK(barrier_check(p.field, r.nl).ok);

    // Above the compactness threshold the integral check still runs; the bound is not asserted.
    const Nonlinearity strong = Nonlinearity::critical(3, r.sd.lambda, 2.0 * r.sd.kappa_star_upper);
    const BoundsReport hb = linf_bound_check(r.trace, r.sd.M, strong, r.sd.kappa_star_lower);
    CHECK_FALSE(hb.applicable);
    CHECK(hb.crit_integrals.size() == 3);
}

TEST_CASE("barrier check") {
    const Grid g = fbtest::cube(17);
    const Nonlinearity nl = Nonlinearity::critical(3, 40.0, 0.001);
    const BarrierReport z = barrier_check(Field(g), nl);
    CHECK(z.A0 == 0.0);
    CHECK(z.phi0_max == 0.0);
    CHECK(z.ok);

    Field neg = run().trace.limit;
    for (double& v : neg.values) v = -v;
    CHECK_FALSE(barrier_check(neg, nl).ok);
}

TEST_CASE("trivial and constant traces") {
    const Run& r = run();
    const ContinuationTrace zero = constant_trace(Field(r.sd.phi1.grid), 0.0, 3);
    const BoundsReport br = linf_bound_check(zero, r.sd.M, r.nl, r.sd.kappa_star_lower);
    for (double c : br.crit_integrals) CHECK(c == 0.0);
    CHECK(br.barrier_ok);

    const Field& u = r.trace.limit;
    const double J = energy_J(u, r.nl).total;
    const ContinuationTrace same = constant_trace(u, J, 3);
    const ConvergenceReport cr = convergence_report(same, r.nl);
    for (double d : cr.uniform_dist) CHECK(d == 0.0);
    CHECK(cr.sandwich());
    CHECK(cr.uniform_decreasing);

    // A field independent of j gives a constant Lipschitz sequence.
    const auto lip = lipschitz_diagnostic(same.points, 0.25);
    for (double v : lip) CHECK(v == lip.front());
}
