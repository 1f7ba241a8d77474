#include "fbground/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "fbground/freeboundary.hpp"
#include "fbground/nehari.hpp"

namespace fbground {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"grid", {"dim", "extents", "nodes"}},
        {"nonlinearity",
         {"kind", "lambda", "lambda_over_lambda1", "lambda_star", "lambda_star_over_lambda1", "kappa", "kappa_fraction",
          "p", "M_override"}},
        {"schedule", {"eps0", "ratio", "steps", "cap_policy", "refine_multiple", "max_nodes_per_axis"}},
        {"solver",
         {"tolerance", "max_newton", "backtrack", "max_sweeps", "path_samples", "minres_rtol", "minres_max_iter",
          "mpa_tolerance"}},
        {"verify", {"fbc", "nondegeneracy", "bounds", "sandwich", "lipschitz_r", "nondegeneracy_r0", "sandwich_rel_tol"}},
        {"output", {"dir"}},
        {"sweep", {"lambda_over_lambda1", "kappa_fraction"}},
    };
    return keys;
}

template <class T>
T parse_scalar(const std::string& where, const std::string& text) {
    std::istringstream is(text);
    T v{};
    std::string rest;
    if (!(is >> v) || (is >> rest)) throw ConfigError(where + ": cannot parse '" + text + "'");
    return v;
}

bool parse_bool(const std::string& where, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(where + ": expected a boolean, got '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& where, std::string text) {
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream is(text);
    std::vector<T> out;
    std::string tok;
    while (is >> tok) out.push_back(parse_scalar<T>(where, tok));
    if (out.empty()) throw ConfigError(where + ": empty list");
    return out;
}

// Non-finite numbers become null; the caller records a flag next to them.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json grid_json(const Grid& g) { return json{{"dim", g.dim}, {"extents", g.extents}, {"nodes", g.nodes}}; }

Grid config_grid(const RunConfig& c) {
    try {
        return build_grid(c.dim, c.extents, c.nodes);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[grid] ") + e.what());
    }
}

fs::path output_dir(const RunConfig& c, const CliOptions& opt) { return opt.out_dir ? fs::path(*opt.out_dir) : fs::path(c.out_dir); }

void ensure_dir(const fs::path& d) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec || !fs::is_directory(d)) throw ConfigError("output directory '" + d.string() + "' is not writable");
    const fs::path probe = d / ".fbground_probe";
    {
        std::ofstream os(probe);
        if (!os) throw ConfigError("output directory '" + d.string() + "' is not writable");
    }
    fs::remove(probe, ec);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

SpectralData spectral_for(const RunConfig& c, const Grid& g, bool require_finite_M) {
    try {
        return compute_spectral(g, c.spectral, require_finite_M);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[nonlinearity] ") + e.what());
    }
}

// kappa must stay below the L^inf threshold unless explicitly allowed.
void check_kappa(const RunConfig& c, const SpectralData& sd, bool allow) {
    if (c.spectral.kappa_fraction && !(*c.spectral.kappa_fraction > 0.0))
        throw ConfigError("[nonlinearity] kappa_fraction must be positive");
    if (allow) return;
    if (c.spectral.kappa_fraction && !(*c.spectral.kappa_fraction < 1.0)) {
        std::ostringstream os;
        os << "[nonlinearity] kappa_fraction = " << *c.spectral.kappa_fraction
           << " puts kappa at or above kappa_*; pass --allow-supercritical-kappa to run anyway";
        throw ConfigError(os.str());
    }
    if (c.spectral.kappa && !(sd.kappa < sd.kappa_star_lower)) {
        std::ostringstream os;
        os << "[nonlinearity] kappa = " << sd.kappa << " is at or above kappa_* = " << sd.kappa_star_lower
           << "; pass --allow-supercritical-kappa to run anyway";
        throw ConfigError(os.str());
    }
}

Nonlinearity make_nonlinearity(const RunConfig& c, const SpectralData& sd) {
    try {
        if (c.kind == NonlinearityKind::subcritical) return Nonlinearity::subcritical(c.dim, sd.lambda, sd.kappa, c.p);
        return Nonlinearity::critical(c.dim, sd.lambda, sd.kappa);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[nonlinearity] ") + e.what());
    }
}

json bound_json(const MpassBound& b) {
    return json{{"value", num(b.value)}, {"finite", b.finite}, {"t_max", num(b.t_max)}};
}

json spectral_json(const SpectralData& sd) {
    double pmax = 0.0;
    for (double v : sd.phi1.values) pmax = std::max(pmax, v);
    json j;
    j["lambda1"] = sd.lambda1;
    j["eigen_iterations"] = sd.eigen_iterations;
    j["eigen_residual"] = sd.eigen_residual;
    j["phi1_max"] = pmax;
    j["S"] = sd.S;
    j["lambda"] = sd.lambda;
    j["lambda_star"] = sd.lambda_star;
    j["kappa"] = sd.kappa;
    j["M"] = num(sd.M);
    j["M_finite"] = std::isfinite(sd.M);
    j["M_overridden"] = sd.M_overridden;
    j["M_lambda"] = bound_json(sd.M_lambda);
    j["M_lambda_star"] = bound_json(sd.M_lambda_star);
    j["kappa_star_upper"] = sd.kappa_star_upper;
    j["kappa_star_lower"] = sd.kappa_star_lower;
    j["rho"] = sd.rho;
    j["rho_floor"] = sd.rho_floor;
    json sentinels = json::array();
    if (!sd.M_lambda.finite) sentinels.push_back("M_lambda: lambda <= lambda1, mountain-pass upper bound is infinite");
    if (!sd.M_lambda_star.finite)
        sentinels.push_back("M_lambda_star: lambda_star <= lambda1, mountain-pass upper bound is infinite");
    if (!std::isfinite(sd.M)) sentinels.push_back("kappa thresholds undefined without a finite M; reported as 0");
    j["sentinels"] = sentinels;
    j["notes"] = json{
        {"lambda1", "inverse power iteration with the fast sine-transform Dirichlet solver, unit L2 eigenfunction"},
        {"S", "best Sobolev constant of R^N from the bubble quotient, Gauss-Kronrod quadrature"},
        {"M", sd.M_overridden ? "override from the configuration"
                              : "max over t >= 0 of the one-dimensional phi1 path bound at lambda_star"},
        {"kappa_star_upper", "compactness threshold from M, |Omega|, N and S"},
        {"kappa_star_lower", "threshold for the uniform L-infinity bound, a fixed fraction of kappa_star_upper"},
        {"rho", "radius of the small-energy sphere at the working lambda and kappa; rho_floor = rho^2/3"},
    };
    return j;
}

json history_json(const std::vector<HistoryEntry>& h) {
    json a = json::array();
    for (const auto& e : h) a.push_back(json{{"iteration", e.iteration}, {"level", e.level}, {"residual_norm", e.residual_norm}});
    return a;
}

struct FreeBoundaryChecks {
    json fbc;
    json flux_jump;
    json nondegeneracy;
    bool fbc_pass = true;
    bool nondegeneracy_pass = true;
    double min_alpha = std::numeric_limits<double>::quiet_NaN();
    double flux_jump_mean = std::numeric_limits<double>::quiet_NaN();
};

FreeBoundaryChecks free_boundary_checks(const Field& u, double r0_cfg, const fs::path* surface_dir) {
    FreeBoundaryChecks out;
    const Grid& g = u.grid;
    if (g.dim != 3) {
        out.fbc = json{{"skipped", "level-set checks need a three-dimensional grid"}};
        out.flux_jump = out.fbc;
        out.nondegeneracy = out.fbc;
        return out;
    }
    const double h = g.max_spacing();
    const FbcSweep sw = fbc_sweep(u, radial_test_field(g), {4.0 * h, 8.0 * h, 16.0 * h});
    json reports = json::array();
    json warnings = json::array();
    for (const auto& r : sw.reports) {
        reports.push_back(json{{"delta", r.delta_plus},
                               {"plus_integral", r.plus_integral},
                               {"minus_integral", r.minus_integral},
                               {"defect", r.defect},
                               {"band_fraction", r.band_fraction}});
        for (const auto& w : r.warnings) warnings.push_back(w);
    }
    out.fbc_pass = sw.relative_defect <= 0.1;
    out.fbc = json{{"test_field", "prod sin^2(pi x_a / L_a) (x - centre)"},
                   {"reports", reports},
                   {"plus_extrapolated", sw.plus0},
                   {"minus_extrapolated", sw.minus0},
                   {"defect_extrapolated", sw.defect0},
                   {"relative_defect", sw.relative_defect},
                   {"tolerance", 0.1},
                   {"warnings", warnings},
                   {"pass", out.fbc_pass}};

    const double d0 = resolved_delta(u);
    if (d0 > 0.0) {
        const FluxJumpReport fj = flux_jump(u, {d0, 2.0 * d0});
        json est = json::array();
        for (const auto& e : fj.estimates)
            est.push_back(json{{"delta", e.delta},
                               {"mean", e.mean},
                               {"spread", e.spread},
                               {"one_sided_mean", e.one_sided_mean},
                               {"one_sided_spread", e.one_sided_spread},
                               {"pairs", e.pairs},
                               {"unmatched_fraction", e.unmatched_fraction},
                               {"warning", e.warning}});
        if (!fj.empty()) out.flux_jump_mean = fj.estimates.front().mean;
        out.flux_jump = json{{"finest_delta", d0},
                             {"estimates", est},
                             {"mean_at_finest", num(out.flux_jump_mean)},
                             {"extrapolated_mean", fj.empty() ? json(nullptr) : num(fj.extrapolated_mean)},
                             {"extrapolated_one_sided_mean",
                              fj.empty() ? json(nullptr) : num(fj.extrapolated_one_sided_mean)},
                             {"target", 2.0}};
    } else {
        out.flux_jump = json{{"empty", true}, {"estimates", json::array()}};
    }

    const double r0 = r0_cfg > 0.0 ? r0_cfg : 4.0 * h;
    const NondegeneracyReport nd = nondegeneracy_scan(u, std::max(r0, 2.0 * h * (1.0 + 1e-9)));
    if (nd.empty()) {
        out.nondegeneracy = json{{"r0", r0}, {"empty", true}, {"samples", 0}, {"min_alpha", nullptr}, {"pass", true}};
    } else {
        out.min_alpha = nd.min_alpha;
        out.nondegeneracy_pass = nd.min_alpha > 0.0;
        out.nondegeneracy = json{{"r0", r0},
                                 {"empty", false},
                                 {"samples", nd.samples.size()},
                                 {"min_alpha", nd.min_alpha},
                                 {"near_mean_alpha", nd.near_mean_alpha},
                                 {"far_mean_alpha", nd.far_mean_alpha},
                                 {"pass", out.nondegeneracy_pass}};
    }
    if (surface_dir) {
        std::ofstream os(*surface_dir / "surface.csv");
        write_surface_csv(os, level_set(u, 1.0, Side::plus));
    }
    return out;
}

double finite_or_nan(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

std::string csv_num(double v) {
    if (!std::isfinite(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Everything a solve produces, shared by cmd_solve and the sweep cells.
struct PipelineResult {
    json doc;
    bool pass = false;
    bool solver_failed = false;
    std::string error;
    double level = std::numeric_limits<double>::quiet_NaN();
    double J_limit = std::numeric_limits<double>::quiet_NaN();
    double nehari = std::numeric_limits<double>::quiet_NaN();
    double min_alpha = std::numeric_limits<double>::quiet_NaN();
    double flux_jump_mean = std::numeric_limits<double>::quiet_NaN();
    bool sandwich = false;
    bool bounds = false;
    bool ps_warning = false;
};

void write_step_artifacts(const fs::path& dir, const ContinuationTrace& tr) {
    for (std::size_t j = 0; j < tr.points.size(); ++j) {
        {
            std::ofstream os(dir / ("field_" + std::to_string(j) + ".txt"));
            write_field(os, tr.points[j].field);
        }
        std::ofstream os(dir / ("residual_" + std::to_string(j) + ".csv"));
        write_residual_csv(os, tr.points[j].history);
    }
}

json steps_json(const ContinuationTrace& tr, const Nonlinearity& nl, const SpectralData& sd, double lipschitz_r,
                bool& ps_warning) {
    json steps = json::array();
    for (std::size_t j = 0; j < tr.points.size(); ++j) {
        const CriticalPoint& p = tr.points[j];
        const PsReport ps = ps_diagnostic(p.history, nl.kappa(), sd.kappa_star_upper);
        if (ps.kappa_above_threshold || ps.stalled) ps_warning = true;
        json s;
        s["eps"] = p.eps;
        s["nodes"] = p.field.grid.nodes;
        s["refined"] = static_cast<bool>(tr.refined[j]);
        s["level"] = p.level;
        s["residual_norm"] = p.residual_norm;
        s["newton_iterations"] = p.iterations;
        s["linear_iterations"] = p.linear_iterations;
        if (nl.kind() == NonlinearityKind::critical) {
            const double nr = nehari_residual(p.field, nl);
            s["nehari_residual"] = num(nr);
            s["nehari_sentinel"] = !std::isfinite(nr);
        }
        s["J"] = energy_J(p.field, nl).total;
        s["lipschitz"] = interior_max_gradient(p.field, lipschitz_r);
        s["uniform_dist"] = j > 0 ? json(tr.uniform_dist[j - 1]) : json(nullptr);
        s["h1_dist"] = j > 0 ? json(tr.h1_dist[j - 1]) : json(nullptr);
        s["field"] = "field_" + std::to_string(j) + ".txt";
        s["residual_csv"] = "residual_" + std::to_string(j) + ".csv";
        s["ps"] = json{{"stalled", ps.stalled},
                       {"kappa_above_threshold", ps.kappa_above_threshold},
                       {"message", ps.message},
                       {"warnings", ps.warnings}};
        s["history"] = history_json(p.history);
        steps.push_back(s);
    }
    return steps;
}

PipelineResult run_pipeline(const RunConfig& c, const SpectralData& sd, const fs::path* dir, bool with_free_boundary) {
    PipelineResult res;
    const Nonlinearity nl = make_nonlinearity(c, sd);
    const std::vector<double> schedule = c.schedule();
    json& doc = res.doc;
    doc["grid"] = grid_json(sd.phi1.grid);
    doc["kind"] = to_string(c.kind);
    doc["spectral"] = spectral_json(sd);
    doc["schedule"] = schedule;

    ContinuationTrace tr;
    try {
        tr = run_continuation(schedule, nl, sd.phi1, c.continuation);
    } catch (const ContinuationError& e) {
        res.solver_failed = true;
        res.error = e.what();
        doc["status"] = "failed";
        doc["error"] = res.error;
        bool ps = false;
        doc["steps"] = steps_json(e.trace, nl, sd, c.lipschitz_r, ps);
        if (dir) write_step_artifacts(*dir, e.trace);
        doc["pass"] = false;
        return res;
    }
    if (dir) write_step_artifacts(*dir, tr);
    doc["status"] = "ok";
    doc["steps"] = steps_json(tr, nl, sd, c.lipschitz_r, res.ps_warning);
    doc["mountain_pass"] = json{{"sweeps", tr.sweep_levels.size()},
                                {"sweep_levels", tr.sweep_levels},
                                {"path_max", tr.path_max},
                                {"path_max_J", tr.path_max_J},
                                {"gap_indicator", tr.gap_indicator}};

    // Warm start: the first step's cost is its mountain-pass sweeps plus Newton iterations.
    const int first = static_cast<int>(tr.sweep_levels.size()) + tr.points.front().iterations;
    json later = json::array();
    std::size_t ok = 0;
    for (std::size_t j = 1; j < tr.points.size(); ++j) {
        later.push_back(tr.points[j].iterations);
        if (tr.points[j].iterations <= first) ++ok;
    }
    const std::size_t n_later = tr.points.size() - 1;
    doc["warm_start"] = json{{"first_count", first},
                             {"later_counts", later},
                             {"within_first", ok},
                             {"ok", n_later == 0 || 5 * ok >= 4 * n_later}};

    const Field& u = tr.limit;
    res.level = tr.levels.back();
    res.J_limit = energy_J(u, nl).total;
    json limit{{"J", res.J_limit}, {"level", res.level}, {"field", "field_" + std::to_string(tr.points.size() - 1) + ".txt"}};
    if (nl.kind() == NonlinearityKind::critical) {
        res.nehari = nehari_residual(u, nl);
        limit["nehari_residual"] = num(res.nehari);
        limit["nehari_sentinel"] = !std::isfinite(res.nehari);
        limit["manifold_identity"] = manifold_energy_identity(u, nl);
    }
    double umin = 0.0;
    for (double v : u.values) umin = std::min(umin, v);
    limit["min_value"] = umin;
    doc["limit"] = limit;

    json ver;
    bool pass = true;

    // Sandwich of the last levels between J(u) and J(u) + |{u = 1}|.
    if (tr.points.size() >= 2) {
        const ConvergenceReport cr = convergence_report(tr, nl, c.sandwich_rel_tol);
        res.sandwich = cr.sandwich();
        ver["sandwich"] = json{{"enabled", c.verify.sandwich},
                               {"J_limit", cr.J_limit},
                               {"measure_level_one", cr.measure_level_one},
                               {"tolerance", cr.tolerance},
                               {"lower", cr.sandwich_lower},
                               {"upper", cr.sandwich_upper},
                               {"uniform_decreasing", cr.uniform_decreasing},
                               {"oscillating", cr.oscillating},
                               {"h1_proxy", cr.h1_proxy},
                               {"h1_trend_monotone", cr.h1_trend_monotone},
                               {"pass", res.sandwich}};
    } else {
        res.sandwich = true;
        ver["sandwich"] = json{{"enabled", c.verify.sandwich}, {"skipped", "needs at least two steps"}, {"pass", true}};
    }
    if (c.verify.sandwich && !res.sandwich) pass = false;

    // Level window, maximum principle and barrier, and the critical-integral bound.
    {
        json b;
        bool ok_b = true;
        json window = json::array();
        const bool have_window = std::isfinite(sd.M) && nl.kind() == NonlinearityKind::critical;
        for (const auto& p : tr.points) {
            const double tol = c.sandwich_rel_tol * std::abs(p.level);
            const bool in = !have_window || (p.level >= sd.rho_floor - tol && p.level <= sd.M + tol);
            window.push_back(in);
            ok_b = ok_b && in;
        }
        b["level_window"] = json{{"lower", sd.rho_floor}, {"upper", num(sd.M)}, {"applicable", have_window}, {"ok", window}};
        if (nl.kind() == NonlinearityKind::critical && std::isfinite(sd.M)) {
            const BoundsReport br = linf_bound_check(tr, sd.M, nl, sd.kappa_star_lower, c.lipschitz_r);
            json crit = json::array();
            for (std::size_t j = 0; j < br.crit_integrals.size(); ++j)
                crit.push_back(json{{"integral", br.crit_integrals[j]},
                                    {"checked", static_cast<bool>(br.crit_checked[j])},
                                    {"ok", static_cast<bool>(br.crit_ok[j])}});
            b["linf"] = br.linf;
            b["linf_ratio"] = num(br.linf_ratio);
            b["linf_uniform"] = br.linf_uniform;
            b["lipschitz"] = br.lipschitz;
            b["barrier_ok"] = br.barrier_ok;
            b["crit_bound"] = br.crit_bound;
            b["crit"] = crit;
            b["applicable"] = br.applicable;
            ok_b = ok_b && br.all_ok();
        } else {
            bool barrier = true;
            for (const auto& p : tr.points) barrier = barrier && barrier_check(p.field, nl).ok;
            b["barrier_ok"] = barrier;
            ok_b = ok_b && barrier;
        }
        const bool max_principle = umin >= -1e-12;
        b["maximum_principle"] = max_principle;
        ok_b = ok_b && max_principle;
        b["enabled"] = c.verify.bounds;
        b["pass"] = ok_b;
        res.bounds = ok_b;
        ver["bounds"] = b;
        if (c.verify.bounds && !ok_b) pass = false;
    }

    json lip = json::array();
    for (double v : lipschitz_diagnostic(tr.points, c.lipschitz_r)) lip.push_back(v);
    ver["lipschitz"] = json{{"r", c.lipschitz_r}, {"sequence", lip}};

    if (with_free_boundary && (c.verify.fbc || c.verify.nondegeneracy)) {
        const FreeBoundaryChecks fb = free_boundary_checks(u, c.nondegeneracy_r0, dir);
        res.min_alpha = fb.min_alpha;
        res.flux_jump_mean = fb.flux_jump_mean;
        json f = fb.fbc;
        f["enabled"] = c.verify.fbc;
        ver["fbc"] = f;
        ver["flux_jump"] = fb.flux_jump;
        json n = fb.nondegeneracy;
        n["enabled"] = c.verify.nondegeneracy;
        ver["nondegeneracy"] = n;
        if (c.verify.fbc && !fb.fbc_pass) pass = false;
        if (c.verify.nondegeneracy && !fb.nondegeneracy_pass) pass = false;
    }
    doc["verifications"] = ver;
    doc["pass"] = pass;
    res.pass = pass;
    return res;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return exit_config;
    } catch (const SolverError& e) {
        err << "solver failure: " << e.what() << "\n";
        return exit_solver;
    } catch (const std::exception& e) {
        err << "solver failure: " << e.what() << "\n";
        return exit_solver;
    }
}

} // namespace

std::vector<double> RunConfig::schedule() const { return geometric_schedule(eps0, ratio, steps); }

RunConfig parse_config(std::istream& is) {
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        const auto it = known_keys().find(section);
        if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' appears outside any section");
        if (it == known_keys().end()) throw ConfigError("unknown section [" + section + "]");
        for (const auto& kv : body)
            if (!it->second.count(kv.first)) throw ConfigError("unknown key " + section + "." + kv.first);
    }
    auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
        const auto node = tree.get_child_optional(pt::ptree::path_type(section + "/" + key, '/'));
        if (!node) return std::nullopt;
        return node->data();
    };
    auto num_opt = [&](const std::string& section, const std::string& key) -> std::optional<double> {
        const auto s = get(section, key);
        if (!s) return std::nullopt;
        return parse_scalar<double>(section + "." + key, *s);
    };

    RunConfig c;
    if (auto v = get("grid", "dim")) c.dim = parse_scalar<int>("grid.dim", *v);
    if (c.dim < 3) throw ConfigError("grid.dim must be at least 3");
    c.extents.assign(c.dim, 1.0);
    c.nodes.assign(c.dim, 33);
    if (auto v = get("grid", "extents")) {
        c.extents = parse_list<double>("grid.extents", *v);
        if (c.extents.size() == 1) c.extents.assign(c.dim, c.extents.front());
    }
    if (auto v = get("grid", "nodes")) {
        c.nodes = parse_list<int>("grid.nodes", *v);
        if (c.nodes.size() == 1) c.nodes.assign(c.dim, c.nodes.front());
    }
    if (static_cast<int>(c.extents.size()) != c.dim || static_cast<int>(c.nodes.size()) != c.dim)
        throw ConfigError("grid.extents and grid.nodes need one entry per dimension");
    config_grid(c);

    if (auto v = get("nonlinearity", "kind")) {
        if (*v == "critical")
            c.kind = NonlinearityKind::critical;
        else if (*v == "subcritical")
            c.kind = NonlinearityKind::subcritical;
        else
            throw ConfigError("nonlinearity.kind must be critical or subcritical, got '" + *v + "'");
    }
    c.spectral.lambda = num_opt("nonlinearity", "lambda");
    c.spectral.lambda_over_lambda1 = num_opt("nonlinearity", "lambda_over_lambda1");
    c.spectral.lambda_star = num_opt("nonlinearity", "lambda_star");
    c.spectral.lambda_star_over_lambda1 = num_opt("nonlinearity", "lambda_star_over_lambda1");
    c.spectral.kappa = num_opt("nonlinearity", "kappa");
    c.spectral.kappa_fraction = num_opt("nonlinearity", "kappa_fraction");
    c.spectral.M_override = num_opt("nonlinearity", "M_override");
    if (auto v = num_opt("nonlinearity", "p")) c.p = *v;
    if (c.spectral.lambda.has_value() == c.spectral.lambda_over_lambda1.has_value())
        throw ConfigError("nonlinearity: give exactly one of lambda, lambda_over_lambda1");
    if (c.spectral.lambda_star && c.spectral.lambda_star_over_lambda1)
        throw ConfigError("nonlinearity: give at most one of lambda_star, lambda_star_over_lambda1");
    if (c.spectral.kappa.has_value() == c.spectral.kappa_fraction.has_value())
        throw ConfigError("nonlinearity: give exactly one of kappa, kappa_fraction");
    if (c.kind == NonlinearityKind::subcritical) {
        const double crit = 2.0 * c.dim / (c.dim - 2.0);
        if (!(c.p > 2.0 && c.p < crit)) throw ConfigError("nonlinearity.p must lie in (2, 2N/(N-2)) for the subcritical kind");
    } else if (get("nonlinearity", "p")) {
        throw ConfigError("nonlinearity.p applies to the subcritical kind only");
    }

    if (auto v = num_opt("schedule", "eps0")) c.eps0 = *v;
    if (auto v = num_opt("schedule", "ratio")) c.ratio = *v;
    if (auto v = get("schedule", "steps")) c.steps = parse_scalar<int>("schedule.steps", *v);
    if (auto v = get("schedule", "cap_policy")) {
        if (*v == "refine")
            c.continuation.cap_policy = CapPolicy::refine;
        else if (*v == "reject")
            c.continuation.cap_policy = CapPolicy::reject;
        else
            throw ConfigError("schedule.cap_policy must be refine or reject");
    }
    if (auto v = get("schedule", "refine_multiple")) c.continuation.refine_multiple = parse_scalar<int>("schedule.refine_multiple", *v);
    if (auto v = get("schedule", "max_nodes_per_axis"))
        c.continuation.max_nodes_per_axis = parse_scalar<int>("schedule.max_nodes_per_axis", *v);
    try {
        c.schedule();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.continuation.refine_multiple < 1) throw ConfigError("schedule.refine_multiple must be positive");

    SolveConfig& s = c.continuation.solve;
    if (auto v = num_opt("solver", "tolerance")) s.tolerance = *v;
    if (auto v = get("solver", "max_newton")) s.max_newton = parse_scalar<int>("solver.max_newton", *v);
    if (auto v = num_opt("solver", "backtrack")) s.backtrack = *v;
    if (auto v = get("solver", "max_sweeps")) s.max_sweeps = parse_scalar<int>("solver.max_sweeps", *v);
    if (auto v = get("solver", "path_samples")) s.path_samples = parse_scalar<int>("solver.path_samples", *v);
    if (auto v = num_opt("solver", "minres_rtol")) s.minres_rtol = *v;
    if (auto v = get("solver", "minres_max_iter")) s.minres_max_iter = parse_scalar<int>("solver.minres_max_iter", *v);
    if (auto v = num_opt("solver", "mpa_tolerance")) s.mpa_tolerance = *v;
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[solver] ") + e.what());
    }

    if (auto v = get("verify", "fbc")) c.verify.fbc = parse_bool("verify.fbc", *v);
    if (auto v = get("verify", "nondegeneracy")) c.verify.nondegeneracy = parse_bool("verify.nondegeneracy", *v);
    if (auto v = get("verify", "bounds")) c.verify.bounds = parse_bool("verify.bounds", *v);
    if (auto v = get("verify", "sandwich")) c.verify.sandwich = parse_bool("verify.sandwich", *v);
    if (auto v = num_opt("verify", "lipschitz_r")) c.lipschitz_r = *v;
    if (auto v = num_opt("verify", "nondegeneracy_r0")) c.nondegeneracy_r0 = *v;
    if (auto v = num_opt("verify", "sandwich_rel_tol")) c.sandwich_rel_tol = *v;
    if (!(c.lipschitz_r > 0.0)) throw ConfigError("verify.lipschitz_r must be positive");
    if (c.nondegeneracy_r0 < 0.0) throw ConfigError("verify.nondegeneracy_r0 must be non-negative");
    if (!(c.sandwich_rel_tol > 0.0)) throw ConfigError("verify.sandwich_rel_tol must be positive");

    if (auto v = get("output", "dir")) c.out_dir = *v;

    if (auto v = get("sweep", "lambda_over_lambda1")) c.sweep_lambda_over_lambda1 = parse_list<double>("sweep.lambda_over_lambda1", *v);
    if (auto v = get("sweep", "kappa_fraction")) c.sweep_kappa_fraction = parse_list<double>("sweep.kappa_fraction", *v);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    return parse_config(is);
}

unsigned worker_count() {
    if (const char* env = std::getenv("FBGROUND_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_spectrum(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig c = load_config(opt.config_path);
        const Grid g = config_grid(c);
        const SpectralData sd = spectral_for(c, g, false);
        json doc;
        doc["grid"] = grid_json(g);
        doc["spectral"] = spectral_json(sd);
        const std::string text = doc.dump(2) + "\n";
        if (opt.out_dir) {
            ensure_dir(*opt.out_dir);
            write_text(fs::path(*opt.out_dir) / "spectrum.json", text);
        }
        out << text;
        return int(exit_ok);
    });
}

int cmd_solve(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig c = load_config(opt.config_path);
        const Grid g = config_grid(c);
        const SpectralData sd = spectral_for(c, g, true);
        check_kappa(c, sd, opt.allow_supercritical_kappa);
        const fs::path dir = output_dir(c, opt);
        ensure_dir(dir);
        PipelineResult res = run_pipeline(c, sd, &dir, true);
        write_text(dir / "trace.json", res.doc.dump(2) + "\n");
        if (res.solver_failed) {
            err << "solver failure: " << res.error << " (partial trace in " << (dir / "trace.json").string() << ")\n";
            return int(exit_solver);
        }
        out << "levels:";
        for (const auto& s : res.doc["steps"]) out << " " << s["level"].get<double>();
        out << "\ntrace: " << (dir / "trace.json").string() << "\n";
        out << (res.pass ? "all enabled verifications passed" : "verification failed") << "\n";
        return int(res.pass ? exit_ok : exit_verification);
    });
}

int cmd_verify(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig c = load_config(opt.config_path);
        const Grid g = config_grid(c);
        Field u;
        {
            std::ifstream is(opt.field_path);
            if (!is) throw ConfigError("cannot open field file '" + opt.field_path + "'");
            try {
                u = read_field(is);
            } catch (const std::exception& e) {
                throw ConfigError(std::string("field file: ") + e.what());
            }
        }
        // A refined solve leaves its limit on a finer grid of the same box.
        if (u.grid.dim != g.dim || u.grid.extents != g.extents)
            throw ConfigError("field file does not match the [grid] block (dimension or extents differ)");
        for (int a = 0; a < g.dim; ++a)
            if ((u.grid.nodes[a] - 1) % (g.nodes[a] - 1) != 0)
                throw ConfigError("field file does not match the [grid] block (nodes are not a refinement)");
        const SpectralData sd = spectral_for(c, g, true);
        check_kappa(c, sd, opt.allow_supercritical_kappa);
        const Nonlinearity nl = make_nonlinearity(c, sd);
        const double eps = c.schedule().back();

        json doc;
        doc["grid"] = grid_json(u.grid);
        doc["eps"] = eps;
        doc["spectral"] = spectral_json(sd);
        json checks;
        checks["energy"] = json{{"J", energy_J(u, nl).total}, {"J_eps", energy_Jeps(u, eps, nl).total}};
        checks["euler_lagrange_residual"] = l2_norm(el_residual(u, eps, nl));
        if (nl.kind() == NonlinearityKind::critical) {
            const double nr = nehari_residual(u, nl);
            checks["nehari"] = json{{"residual", num(nr)},
                                    {"sentinel", !std::isfinite(nr)},
                                    {"manifold_identity", manifold_energy_identity(u, nl)}};
        }
        bool pass = true;
        double umin = 0.0;
        for (double v : u.values) umin = std::min(umin, v);
        const bool zero_trace = u.has_zero_trace();
        const BarrierReport br = barrier_check(u, nl);
        const bool bounds_ok = umin >= -1e-12 && br.ok && zero_trace;
        checks["bounds"] = json{{"enabled", c.verify.bounds},
                                {"zero_trace", zero_trace},
                                {"min_value", umin},
                                {"maximum_principle", umin >= -1e-12},
                                {"barrier_A0", br.A0},
                                {"barrier_lower_violation", br.lower_violation},
                                {"barrier_upper_violation", br.upper_violation},
                                {"barrier_ok", br.ok},
                                {"pass", bounds_ok}};
        if (c.verify.bounds && !bounds_ok) pass = false;

        // Symmetry of the Euler-Lagrange Jacobian along seeded random directions.
        {
            std::mt19937_64 rng(opt.seed);
            std::normal_distribution<double> nd(0.0, 1.0);
            auto random_field = [&] {
                Field v(u.grid);
                for (std::size_t i = 0; i < v.size(); ++i)
                    if (!u.grid.is_boundary(i)) v[i] = nd(rng);
                return v;
            };
            json pairs = json::array();
            for (int k = 0; k < 3; ++k) {
                const Field v = random_field(), w = random_field();
                pairs.push_back(json{{"Jv_w", inner(el_jacobian_apply(u, eps, nl, v), w)},
                                     {"v_Jw", inner(v, el_jacobian_apply(u, eps, nl, w))}});
            }
            checks["jacobian_symmetry"] = json{{"seed", opt.seed}, {"pairs", pairs}};
        }

        const FreeBoundaryChecks fb = free_boundary_checks(u, c.nondegeneracy_r0, nullptr);
        json f = fb.fbc;
        f["enabled"] = c.verify.fbc;
        checks["fbc"] = f;
        checks["flux_jump"] = fb.flux_jump;
        json n = fb.nondegeneracy;
        n["enabled"] = c.verify.nondegeneracy;
        checks["nondegeneracy"] = n;
        if (c.verify.fbc && !fb.fbc_pass) pass = false;
        if (c.verify.nondegeneracy && !fb.nondegeneracy_pass) pass = false;

        doc["checks"] = checks;
        doc["pass"] = pass;
        const std::string text = doc.dump(2) + "\n";
        if (opt.out_dir) {
            ensure_dir(*opt.out_dir);
            write_text(fs::path(*opt.out_dir) / "verify.json", text);
        }
        out << text;
        return int(pass ? exit_ok : exit_verification);
    });
}

int cmd_sweep(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig base = load_config(opt.config_path);
        const Grid g = config_grid(base);
        std::vector<double> lams = base.sweep_lambda_over_lambda1;
        std::vector<double> kfs = base.sweep_kappa_fraction;
        if (lams.empty()) {
            if (!base.spectral.lambda_over_lambda1) throw ConfigError("sweep needs sweep.lambda_over_lambda1 or nonlinearity.lambda_over_lambda1");
            lams.push_back(*base.spectral.lambda_over_lambda1);
        }
        if (kfs.empty()) {
            if (!base.spectral.kappa_fraction) throw ConfigError("sweep needs sweep.kappa_fraction or nonlinearity.kappa_fraction");
            kfs.push_back(*base.spectral.kappa_fraction);
        }
        const fs::path dir = output_dir(base, opt);
        ensure_dir(dir);

        struct Cell {
            double lam = 0.0, kf = 0.0;
            std::string status;
            std::string message;
            SpectralData sd;
            PipelineResult res;
        };
        std::vector<Cell> cells;
        for (double l : lams)
            for (double k : kfs) {
                Cell cell;
                cell.lam = l;
                cell.kf = k;
                cells.push_back(std::move(cell));
            }

        auto run_cell = [&](Cell& cell) {
            RunConfig c = base;
            c.spectral.lambda.reset();
            c.spectral.lambda_over_lambda1 = cell.lam;
            c.spectral.kappa.reset();
            c.spectral.kappa_fraction = cell.kf;
            try {
                cell.sd = spectral_for(c, g, true);
                check_kappa(c, cell.sd, opt.allow_supercritical_kappa);
            } catch (const std::exception& e) {
                cell.status = "rejected";
                cell.message = e.what();
                return;
            }
            try {
                cell.res = run_pipeline(c, cell.sd, nullptr, true);
                cell.status = cell.res.solver_failed ? "failed" : "ok";
                cell.message = cell.res.error;
            } catch (const std::exception& e) {
                cell.status = "failed";
                cell.message = e.what();
            }
        };

        const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(cells.size()));
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
            });
        for (auto& t : pool) t.join();

        std::ostringstream csv;
        csv << "cell,lambda_over_lambda1,kappa_fraction,lambda,kappa,kappa_star_upper,kappa_star_lower,status,level,"
               "J_limit,nehari_residual,min_alpha,flux_jump_mean,sandwich,bounds,pass,ps_warning,message\n";
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const Cell& cell = cells[i];
            const bool ran = cell.status == "ok";
            std::string msg = cell.message;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            const bool ps = cell.status != "rejected" && (cell.res.ps_warning || cell.sd.kappa >= cell.sd.kappa_star_upper);
            csv << i << "," << csv_num(cell.lam) << "," << csv_num(cell.kf) << ","
                << (cell.status == "rejected" ? "" : csv_num(cell.sd.lambda)) << ","
                << (cell.status == "rejected" ? "" : csv_num(cell.sd.kappa)) << ","
                << (cell.status == "rejected" ? "" : csv_num(cell.sd.kappa_star_upper)) << ","
                << (cell.status == "rejected" ? "" : csv_num(cell.sd.kappa_star_lower)) << "," << cell.status << ","
                << (ran ? csv_num(cell.res.level) : "") << "," << (ran ? csv_num(cell.res.J_limit) : "") << ","
                << (ran ? csv_num(finite_or_nan(cell.res.nehari)) : "") << ","
                << (ran ? csv_num(cell.res.min_alpha) : "") << "," << (ran ? csv_num(cell.res.flux_jump_mean) : "")
                << "," << (ran && cell.res.sandwich) << "," << (ran && cell.res.bounds) << ","
                << (ran && cell.res.pass) << "," << ps << "," << msg << "\n";
        }
        write_text(dir / "sweep.csv", csv.str());
        out << csv.str();
        return int(exit_ok);
    });
}

int cmd_report(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        fs::path dir;
        if (opt.out_dir)
            dir = *opt.out_dir;
        else if (!opt.config_path.empty())
            dir = load_config(opt.config_path).out_dir;
        else
            throw ConfigError("report needs --out or --config");
        std::ifstream is(dir / "trace.json");
        if (!is) throw ConfigError("no trace.json in '" + dir.string() + "'");
        json doc;
        try {
            doc = json::parse(is);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("trace.json: ") + e.what());
        }
        auto cell = [](const json& v) {
            if (v.is_null()) return std::string();
            if (v.is_number_float()) return csv_num(v.get<double>());
            return v.dump();
        };
        std::ostringstream csv;
        csv << "step,eps,nodes,level,J,residual_norm,newton_iterations,nehari_residual,lipschitz,uniform_dist,h1_dist\n";
        const json& steps = doc.at("steps");
        for (std::size_t j = 0; j < steps.size(); ++j) {
            const json& s = steps[j];
            csv << j << "," << cell(s.at("eps")) << "," << s.at("nodes").at(0).get<int>() << "," << cell(s.at("level"))
                << "," << cell(s.at("J")) << "," << cell(s.at("residual_norm")) << "," << cell(s.at("newton_iterations"))
                << "," << (s.contains("nehari_residual") ? cell(s["nehari_residual"]) : "") << ","
                << cell(s.at("lipschitz")) << "," << cell(s.at("uniform_dist")) << "," << cell(s.at("h1_dist")) << "\n";
        }
        write_text(dir / "levels.csv", csv.str());

        out << "status: " << doc.value("status", "unknown") << "\n";
        if (doc.contains("error")) out << "error: " << doc["error"].get<std::string>() << "\n";
        const json& sp = doc.at("spectral");
        out << "lambda1 " << cell(sp.at("lambda1")) << "  S " << cell(sp.at("S")) << "  M " << cell(sp.at("M"))
            << "  kappa " << cell(sp.at("kappa")) << "  kappa_* " << cell(sp.at("kappa_star_lower")) << "  kappa* "
            << cell(sp.at("kappa_star_upper")) << "\n";
        out << csv.str();
        if (doc.contains("verifications")) {
            for (const auto& [name, v] : doc["verifications"].items())
                if (v.contains("pass"))
                    out << name << ": " << (v["pass"].get<bool>() ? "pass" : "FAIL")
                        << (v.value("enabled", true) ? "" : " (not enforced)") << "\n";
        }
        if (doc.contains("pass")) out << "overall: " << (doc["pass"].get<bool>() ? "pass" : "FAIL") << "\n";
        return int(exit_ok);
    });
}

} // namespace fbground
