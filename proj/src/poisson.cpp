#include "fbground/poisson.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>

namespace fbground {

namespace {
// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

struct PoissonSolver::Impl {
    std::vector<int> m;          // interior counts per axis
    std::size_t n = 1;
    double* buf = nullptr;
    fftw_plan plan = nullptr;
    std::vector<double> inv_eig; // 1/(eigenvalue * normalisation)
    double lowest = 0.0;
};

PoissonSolver::PoissonSolver(const Grid& g) : grid_(g), impl_(std::make_unique<Impl>()) {
    auto& im = *impl_;
    const int d = g.dim;
    im.m.resize(d);
    for (int a = 0; a < d; ++a) {
        im.m[a] = g.nodes[a] - 2;
        im.n *= static_cast<std::size_t>(im.m[a]);
    }
    im.buf = fftw_alloc_real(im.n);
    if (!im.buf) throw std::runtime_error("PoissonSolver: allocation failed");
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        std::vector<fftw_r2r_kind> kinds(d, FFTW_RODFT00);
        im.plan = fftw_plan_r2r(d, im.m.data(), im.buf, im.buf, kinds.data(), FFTW_ESTIMATE);
    }
    if (!im.plan) throw std::runtime_error("PoissonSolver: FFTW planning failed");

    // Per-axis symbols 4/h^2 sin^2(pi k / (2(n-1))), k = 1..m.
    std::vector<std::vector<double>> sym(d);
    double norm = 1.0;
    for (int a = 0; a < d; ++a) {
        const double h = g.spacing[a];
        const int ma = im.m[a];
        sym[a].resize(ma);
        for (int k = 0; k < ma; ++k) {
            const double s = std::sin(std::numbers::pi * (k + 1) / (2.0 * (ma + 1)));
            sym[a][k] = 4.0 / (h * h) * s * s;
        }
        norm *= 2.0 * (ma + 1);
    }
    im.lowest = 0.0;
    for (int a = 0; a < d; ++a) im.lowest += sym[a][0];
    im.inv_eig.resize(im.n);
    std::vector<int> k(d, 0);
    for (std::size_t i = 0; i < im.n; ++i) {
        double lam = 0.0;
        for (int a = 0; a < d; ++a) lam += sym[a][k[a]];
        im.inv_eig[i] = 1.0 / (lam * norm);
        for (int a = d - 1; a >= 0; --a) {
            if (++k[a] < im.m[a]) break;
            k[a] = 0;
        }
    }
}

PoissonSolver::~PoissonSolver() {
    if (!impl_) return;
    if (impl_->plan) {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(impl_->plan);
    }
    if (impl_->buf) fftw_free(impl_->buf);
}

double PoissonSolver::lowest_eigenvalue() const { return impl_->lowest; }

void PoissonSolver::solve(const std::vector<double>& rhs, std::vector<double>& out) {
    const Grid& g = grid_;
    auto& im = *impl_;
    if (rhs.size() != g.size) throw std::invalid_argument("PoissonSolver: rhs size mismatch");
    const int d = g.dim;
    // Gather interior nodes in row-major interior order.
    std::vector<int> k(d, 0);
    auto node_of = [&](const std::vector<int>& kk) {
        std::size_t idx = 0;
        for (int a = 0; a < d; ++a) idx += static_cast<std::size_t>(kk[a] + 1) * g.strides[a];
        return idx;
    };
    // Contiguous runs along the last axis keep this cheap.
    const int mlast = im.m[d - 1];
    const std::size_t runs = im.n / mlast;
    for (std::size_t r = 0; r < runs; ++r) {
        const std::size_t base = node_of(k);
        for (int j = 0; j < mlast; ++j) im.buf[r * mlast + j] = rhs[base + j];
        for (int a = d - 2; a >= 0; --a) {
            if (++k[a] < im.m[a]) break;
            k[a] = 0;
        }
    }
    fftw_execute(im.plan);
    for (std::size_t i = 0; i < im.n; ++i) im.buf[i] *= im.inv_eig[i];
    fftw_execute(im.plan);
    out.assign(g.size, 0.0);
    std::fill(k.begin(), k.end(), 0);
    for (std::size_t r = 0; r < runs; ++r) {
        const std::size_t base = node_of(k);
        for (int j = 0; j < mlast; ++j) out[base + j] = im.buf[r * mlast + j];
        for (int a = d - 2; a >= 0; --a) {
            if (++k[a] < im.m[a]) break;
            k[a] = 0;
        }
    }
}

Field PoissonSolver::solve(const Field& rhs) {
    if (!(rhs.grid == grid_)) throw std::invalid_argument("PoissonSolver: grid mismatch");
    Field out(grid_);
    solve(rhs.values, out.values);
    return out;
}

} // namespace fbground
