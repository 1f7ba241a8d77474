#include "fbground/freeboundary.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace fbground {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 mul(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

void require_3d(const Grid& g) {
    if (g.dim != 3) throw std::invalid_argument("level-set extraction supports three-dimensional grids only");
}

Vec3 interp_vec(const Grid& g, const VectorField& v, const Vec3& x) {
    return {interpolate(g, v.values, x, 3, 0), interpolate(g, v.values, x, 3, 1), interpolate(g, v.values, x, 3, 2)};
}

bool inside_box(const Grid& g, const Vec3& x) {
    for (int a = 0; a < 3; ++a)
        if (x[a] < 0.0 || x[a] > g.extents[a]) return false;
    return true;
}

// Closest distance from p to triangle abc.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = sub(b, a), ac = sub(c, a), ap = sub(p, a);
    const double d1 = dot3(ab, ap), d2 = dot3(ac, ap);
    if (d1 <= 0 && d2 <= 0) return norm3(ap);
    const Vec3 bp = sub(p, b);
    const double d3 = dot3(ab, bp), d4 = dot3(ac, bp);
    if (d3 >= 0 && d4 <= d3) return norm3(bp);
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return norm3(sub(p, add(a, mul(ab, d1 / (d1 - d3)))));
    const Vec3 cp = sub(p, c);
    const double d5 = dot3(ab, cp), d6 = dot3(ac, cp);
    if (d6 >= 0 && d5 <= d6) return norm3(cp);
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return norm3(sub(p, add(a, mul(ac, d2 / (d2 - d6)))));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return norm3(sub(p, add(b, mul(sub(c, b), w))));
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return norm3(sub(p, add(a, add(mul(ab, v), mul(ac, w)))));
}

// Uniform bucket grid over points in the box.
class Buckets {
public:
    Buckets(const Grid& g, double cell) : cell_(cell) {
        for (int a = 0; a < 3; ++a) n_[a] = std::max(1, static_cast<int>(std::ceil(g.extents[a] / cell)) + 1);
        bins_.resize(static_cast<std::size_t>(n_[0]) * n_[1] * n_[2]);
    }
    int coord(double x, int a) const { return std::clamp(static_cast<int>(std::floor(x / cell_)), 0, n_[a] - 1); }
    void insert(const Vec3& x, std::size_t id) { bins_[flat(coord(x[0], 0), coord(x[1], 1), coord(x[2], 2))].push_back(id); }
    // Visit ids in bins overlapping the axis-aligned box [lo, hi].
    template <class F>
    void visit(const Vec3& lo, const Vec3& hi, F&& f) const {
        const int i0 = coord(lo[0], 0), i1 = coord(hi[0], 0);
        const int j0 = coord(lo[1], 1), j1 = coord(hi[1], 1);
        const int k0 = coord(lo[2], 2), k1 = coord(hi[2], 2);
        for (int i = i0; i <= i1; ++i)
            for (int j = j0; j <= j1; ++j)
                for (int k = k0; k <= k1; ++k)
                    for (std::size_t id : bins_[flat(i, j, k)]) f(id);
    }

private:
    std::size_t flat(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k;
    }
    double cell_;
    int n_[3];
    std::vector<std::vector<std::size_t>> bins_;
};

double safe_level(const Field& u, double level) {
    const double step = 1e-12 * std::max(1.0, std::abs(level));
    for (int guard = 0; guard < 1000; ++guard) {
        bool hit = false;
        for (double v : u.values)
            if (v == level) {
                hit = true;
                break;
            }
        if (!hit) return level;
        level += step;
    }
    return level;
}

struct Fit {
    double intercept = 0.0;
};

Fit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    Fit f;
    const std::size_t n = x.size();
    if (n == 0) return f;
    if (n == 1) {
        f.intercept = y[0];
        return f;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0.0) {
        f.intercept = sy / n;
        return f;
    }
    const double slope = (n * sxy - sx * sy) / det;
    f.intercept = (sy - slope * sx) / n;
    return f;
}

// Value at xi of the quadratic through (0, f0), (1, f1), (2, f2).
double quadratic_extrapolate(double f0, double f1, double f2, double xi) {
    return f0 * 0.5 * (xi - 1) * (xi - 2) - f1 * xi * (xi - 2) + f2 * 0.5 * xi * (xi - 1);
}

} // namespace

double LevelSetSurface::total_area() const {
    double a = 0.0;
    for (const auto& f : facets) a += f.area;
    return a;
}

LevelSetSurface level_set(const Field& u, double level, Side side) {
    const Grid& g = u.grid;
    require_3d(g);
    LevelSetSurface surf;
    surf.side = side;
    surf.level = safe_level(u, level);
    const double L = surf.level;
    const VectorField grad = gradient(u);
    const double sign = side == Side::plus ? 1.0 : -1.0;

    // Kuhn split of the unit cube: corner bits (x, y, z) -> x | y<<1 | z<<2.
    static const int tets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                                   {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};
    const std::size_t sx = g.strides[0], sy = g.strides[1], sz = g.strides[2];
    const double hx = g.spacing[0], hy = g.spacing[1], hz = g.spacing[2];

    auto emit = [&](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& up) {
        Facet f;
        f.vertices = {a, b, c};
        const Vec3 cr = cross(sub(b, a), sub(c, a));
        f.area = 0.5 * norm3(cr);
        if (!(f.area > 0.0)) return;
        f.centroid = mul(add(add(a, b), c), 1.0 / 3.0);
        f.gradient = interp_vec(g, grad, f.centroid);
        const double gn = norm3(f.gradient);
        if (gn > 0.0) {
            f.normal = mul(f.gradient, sign / gn);
        } else {
            Vec3 n = mul(cr, 1.0 / norm3(cr));
            if (dot3(n, up) < 0.0) n = mul(n, -1.0);
            f.normal = mul(n, sign);
        }
        surf.facets.push_back(f);
    };

    for (int i = 0; i + 1 < g.nodes[0]; ++i)
        for (int j = 0; j + 1 < g.nodes[1]; ++j)
            for (int k = 0; k + 1 < g.nodes[2]; ++k) {
                const std::size_t base = i * sx + j * sy + k * sz;
                double val[8];
                Vec3 pos[8];
                int above = 0;
                for (int c = 0; c < 8; ++c) {
                    const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
                    val[c] = u[base + bx * sx + by * sy + bz * sz] - L;
                    pos[c] = {(i + bx) * hx, (j + by) * hy, (k + bz) * hz};
                    above += val[c] > 0.0;
                }
                if (above == 0 || above == 8) continue;
                for (const auto& t : tets) {
                    int in[4], out[4], ni = 0, no = 0;
                    for (int v : t) (val[v] > 0.0 ? in[ni++] : out[no++]) = v;
                    if (ni == 0 || no == 0) continue;
                    auto cut = [&](int a, int b) {
                        const double s = val[a] / (val[a] - val[b]);
                        return add(pos[a], mul(sub(pos[b], pos[a]), s));
                    };
                    const Vec3 up = sub(pos[in[0]], pos[out[0]]);
                    if (ni == 1) {
                        emit(cut(in[0], out[0]), cut(in[0], out[1]), cut(in[0], out[2]), up);
                    } else if (no == 1) {
                        emit(cut(out[0], in[0]), cut(out[0], in[1]), cut(out[0], in[2]), up);
                    } else {
                        const Vec3 p0 = cut(in[0], out[0]), p1 = cut(in[0], out[1]);
                        const Vec3 p2 = cut(in[1], out[1]), p3 = cut(in[1], out[0]);
                        emit(p0, p1, p2, up);
                        emit(p0, p2, p3, up);
                    }
                }
            }
    return surf;
}

LevelSetSurface flip_side(const LevelSetSurface& s) {
    LevelSetSurface out = s;
    out.side = s.side == Side::plus ? Side::minus : Side::plus;
    for (auto& f : out.facets) f.normal = mul(f.normal, -1.0);
    return out;
}

FluxReport generalized_fbc(const Field& u, const VectorField& phi, double delta_plus, double delta_minus) {
    if (!(delta_plus > 0.0) || !(delta_minus > 0.0)) throw std::invalid_argument("generalized_fbc: deltas must be positive");
    const Grid& g = u.grid;
    require_3d(g);
    if (!(phi.grid == g)) throw std::invalid_argument("generalized_fbc: phi grid mismatch");
    for (std::size_t i : g.boundary_nodes())
        for (int a = 0; a < 3; ++a)
            if (std::abs(phi.at(i)[a]) > 1e-12) throw std::invalid_argument("generalized_fbc: phi must vanish on the boundary");

    FluxReport rep;
    rep.delta_plus = delta_plus;
    rep.delta_minus = delta_minus;
    const LevelSetSurface sp = level_set(u, 1.0 + delta_plus, Side::plus);
    const LevelSetSurface sm = level_set(u, 1.0 - delta_minus, Side::minus);
    // The band-outward normal on the plus surface is -n+; on the minus surface it is n-.
    for (const auto& f : sp.facets) {
        const Vec3 ph = interp_vec(g, phi, f.centroid);
        rep.plus_integral -= (dot3(f.gradient, f.gradient) - 2.0) * dot3(ph, f.normal) * f.area;
    }
    for (const auto& f : sm.facets) {
        const Vec3 ph = interp_vec(g, phi, f.centroid);
        rep.minus_integral += dot3(f.gradient, f.gradient) * dot3(ph, f.normal) * f.area;
    }
    rep.defect = rep.plus_integral - rep.minus_integral;

    const double dmax = std::max(delta_plus, delta_minus);
    double supp = 0.0, band = 0.0;
    for (std::size_t i = 0; i < g.size; ++i) {
        const double* p = phi.at(i);
        if (p[0] == 0.0 && p[1] == 0.0 && p[2] == 0.0) continue;
        const double w = trapezoid_weight(g, i);
        supp += w;
        if (std::abs(u[i] - 1.0) <= dmax) band += w;
    }
    rep.band_fraction = supp > 0.0 ? band / supp : 0.0;
    if (rep.band_fraction > 0.2)
        rep.warnings.push_back("band {|u-1| <= delta} covers " + std::to_string(rep.band_fraction) + " of supp phi");
    return rep;
}

VectorField radial_test_field(const Grid& g) {
    return sample_vector(g, [&](std::span<const double> x, std::span<double> out) {
        double w = 1.0;
        for (int a = 0; a < g.dim; ++a) {
            const double s = std::sin(M_PI * x[a] / g.extents[a]);
            w *= s * s;
        }
        for (int a = 0; a < g.dim; ++a) out[a] = w * (x[a] - 0.5 * g.extents[a]);
    });
}

FbcSweep fbc_sweep(const Field& u, const VectorField& phi, const std::vector<double>& deltas) {
    FbcSweep s;
    std::vector<double> x, yp, ym, yd;
    for (double d : deltas) {
        s.reports.push_back(generalized_fbc(u, phi, d, d));
        x.push_back(d);
        yp.push_back(s.reports.back().plus_integral);
        ym.push_back(s.reports.back().minus_integral);
        yd.push_back(s.reports.back().defect);
    }
    s.plus0 = linear_fit(x, yp).intercept;
    s.minus0 = linear_fit(x, ym).intercept;
    s.defect0 = linear_fit(x, yd).intercept;
    const double scale = std::max(std::abs(s.plus0), std::abs(s.minus0));
    s.relative_defect = scale > 0.0 ? std::abs(s.defect0) / scale : 0.0;
    return s;
}

double resolved_delta(const Field& u) {
    const LevelSetSurface s = level_set(u, 1.0, Side::plus);
    if (s.facets.empty()) return 0.0;
    std::vector<double> g;
    for (const auto& f : s.facets) g.push_back(norm3(f.gradient));
    std::nth_element(g.begin(), g.begin() + g.size() / 2, g.end());
    return 2.0 * u.grid.max_spacing() * g[g.size() / 2];
}

FluxJumpReport flux_jump(const Field& u, const std::vector<double>& deltas) {
    const Grid& g = u.grid;
    require_3d(g);
    FluxJumpReport rep;
    const double h = g.max_spacing();
    const VectorField grad = gradient(u);
    auto gsq_at = [&](const Vec3& x) {
        const Vec3 v = interp_vec(g, grad, x);
        return dot3(v, v);
    };
    std::vector<double> xs, ms, rs;
    for (double delta : deltas) {
        if (!(delta > 0.0)) throw std::invalid_argument("flux_jump: deltas must be positive");
        const LevelSetSurface sp = level_set(u, 1.0 + delta, Side::plus);
        const LevelSetSurface sm = level_set(u, 1.0 - delta, Side::minus);
        if (sp.facets.empty() || sm.facets.empty()) continue;
        Buckets buckets(g, h);
        for (std::size_t q = 0; q < sm.facets.size(); ++q) buckets.insert(sm.facets[q].centroid, q);

        JumpEstimate est;
        est.delta = delta;
        double wsum = 0.0, m1 = 0.0, m2 = 0.0, r1 = 0.0, r2 = 0.0;
        std::size_t unmatched = 0;
        for (const auto& p : sp.facets) {
            const double gp = norm3(p.gradient);
            if (!(gp > 0.0)) {
                ++unmatched;
                continue;
            }
            const Vec3 n = mul(p.gradient, 1.0 / gp);
            const double cap = 3.0 * delta / gp;
            const Vec3 end = sub(p.centroid, mul(n, cap));
            Vec3 lo, hi;
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(p.centroid[a], end[a]) - h;
                hi[a] = std::max(p.centroid[a], end[a]) + h;
            }
            std::size_t best = std::numeric_limits<std::size_t>::max();
            double best_perp = h, best_s = 0.0;
            buckets.visit(lo, hi, [&](std::size_t q) {
                const Vec3 d = sub(p.centroid, sm.facets[q].centroid);
                const double s = dot3(d, n);
                if (!(s > 0.0) || s > cap) return;
                const double perp = norm3(sub(d, mul(n, s)));
                if (perp < best_perp || (perp == best_perp && best != std::numeric_limits<std::size_t>::max() && s < best_s)) {
                    best = q;
                    best_perp = perp;
                    best_s = s;
                }
            });
            if (best == std::numeric_limits<std::size_t>::max()) {
                ++unmatched;
                continue;
            }
            const Facet& q = sm.facets[best];
            const double gq2 = dot3(q.gradient, q.gradient);
            const double raw = gp * gp - gq2;
            // One-sided quadratic extrapolation of |grad u|^2 along n, from samples
            // 0, h, 2h away from each facet, to the crossing of u = 1 estimated by
            // splitting the pair distance in proportion to delta / |grad u| per side.
            double jump = raw;
            const double gq = std::sqrt(gq2);
            const Vec3 p1 = add(p.centroid, mul(n, h)), p2 = add(p.centroid, mul(n, 2 * h));
            const Vec3 q1 = sub(q.centroid, mul(n, h)), q2 = sub(q.centroid, mul(n, 2 * h));
            if (gq > 0.0 && inside_box(g, p2) && inside_box(g, q2)) {
                const double tp = best_s * (1.0 / gp) / (1.0 / gp + 1.0 / gq);
                const double plus = quadratic_extrapolate(gp * gp, gsq_at(p1), gsq_at(p2), -tp / h);
                const double minus = quadratic_extrapolate(gq2, gsq_at(q1), gsq_at(q2), -(best_s - tp) / h);
                jump = plus - minus;
            }
            const double w = p.area;
            wsum += w;
            m1 += w * jump;
            m2 += w * jump * jump;
            r1 += w * raw;
            r2 += w * raw * raw;
            ++est.pairs;
        }
        est.unmatched_fraction = static_cast<double>(unmatched) / sp.facets.size();
        est.warning = est.unmatched_fraction > 0.2;
        if (wsum > 0.0) {
            est.one_sided_mean = m1 / wsum;
            est.one_sided_spread = std::sqrt(std::max(0.0, m2 / wsum - est.one_sided_mean * est.one_sided_mean));
            est.mean = r1 / wsum;
            est.spread = std::sqrt(std::max(0.0, r2 / wsum - est.mean * est.mean));
            xs.push_back(delta);
            ms.push_back(est.one_sided_mean);
            rs.push_back(est.mean);
        }
        rep.estimates.push_back(est);
    }
    rep.extrapolated_mean = linear_fit(xs, rs).intercept;
    rep.extrapolated_one_sided_mean = linear_fit(xs, ms).intercept;
    return rep;
}

NondegeneracyReport nondegeneracy_scan(const Field& u, double r0) {
    const Grid& g = u.grid;
    require_3d(g);
    if (!(r0 > 2.0 * g.max_spacing())) throw std::invalid_argument("nondegeneracy_scan: r0 must exceed 2 max(h)");
    NondegeneracyReport rep;
    const LevelSetSurface s = level_set(u, 1.0, Side::plus);
    if (s.facets.empty()) return rep;
    Buckets buckets(g, r0);
    for (std::size_t f = 0; f < s.facets.size(); ++f) buckets.insert(s.facets[f].centroid, f);
    // A facet within r0 of a node has its centroid within r0 + (facet diameter) of it.
    double diam = 0.0;
    for (int a = 0; a < 3; ++a) diam += g.spacing[a] * g.spacing[a];
    diam = std::sqrt(diam);
    const double reach = r0 + diam;

    std::vector<double> x;
    rep.min_alpha = std::numeric_limits<double>::infinity();
    double near_sum = 0.0, far_sum = 0.0;
    std::size_t near_n = 0, far_n = 0;
    for (std::size_t i = 0; i < g.size; ++i) {
        if (g.is_boundary(i) || !(u[i] > 1.0)) continue;
        g.coords(i, x);
        const Vec3 p{x[0], x[1], x[2]};
        const Vec3 lo{p[0] - reach, p[1] - reach, p[2] - reach}, hi{p[0] + reach, p[1] + reach, p[2] + reach};
        double r = std::numeric_limits<double>::infinity();
        buckets.visit(lo, hi, [&](std::size_t f) {
            const auto& v = s.facets[f].vertices;
            r = std::min(r, point_triangle_distance(p, v[0], v[1], v[2]));
        });
        if (!(r <= r0) || !(r > 0.0)) continue;
        const double alpha = (u[i] - 1.0) / r;
        rep.samples.push_back({p, r, alpha});
        rep.min_alpha = std::min(rep.min_alpha, alpha);
        if (r <= 0.25 * r0) {
            near_sum += alpha;
            ++near_n;
        }
        if (r >= 0.5 * r0) {
            far_sum += alpha;
            ++far_n;
        }
    }
    if (rep.samples.empty()) {
        rep.min_alpha = 0.0;
        return rep;
    }
    rep.near_mean_alpha = near_n ? near_sum / near_n : 0.0;
    rep.far_mean_alpha = far_n ? far_sum / far_n : 0.0;
    return rep;
}

void write_surface_csv(std::ostream& os, const LevelSetSurface& s) {
    os << "cx,cy,cz,nx,ny,nz,area\n" << std::setprecision(17);
    for (const auto& f : s.facets)
        os << f.centroid[0] << ',' << f.centroid[1] << ',' << f.centroid[2] << ',' << f.normal[0] << ','
           << f.normal[1] << ',' << f.normal[2] << ',' << f.area << '\n';
}

} // namespace fbground
