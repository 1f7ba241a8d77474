#pragma once

#include <optional>

#include "fbground/grid.hpp"

namespace fbground {

struct EigenPair {
    double lambda1 = 0.0;
    Field phi1;          // positive, unit L2 norm
    int iterations = 0;
    double residual = 0.0; // ||-lap phi - lambda phi||_2 / ||phi||_2
};

// Inverse power iteration with the fast Dirichlet solver.
EigenPair principal_eigen(const Grid& g, double tol = 1e-10, int max_iter = 5000);

// Best constant of the embedding of D^{1,2}(R^N) into L^{2*}, from the
// Rayleigh quotient of the bubble (1+|x|^2)^{-(N-2)/2}.
double sobolev_constant(int N);

// Quotient int|grad u|^2 / (int |u|^{2*})^{2/2*} of a zero-trace field.
double sobolev_quotient(const Field& u);

struct KappaThresholds {
    double upper = 0.0; // compactness threshold
    double lower = 0.0; // threshold for the uniform L^inf bound
};
KappaThresholds kappa_thresholds(double M, double volume, int N, double S);

struct Rho {
    double rho = 0.0;
    double floor = 0.0; // rho^2 / 3
};
Rho rho_radius(int N, double lambda, double kappa, double S);

struct MpassBound {
    double value = 0.0; // +inf when lambda <= lambda1
    bool finite = false;
    double t_max = 0.0;
};
// t -> int[1/2 lambda1 t^2 phi1^2 + 1 - 1/2 lambda (t phi1 - 1)_+^2]
double mpass_integrand(double t, double lambda, double lambda1, const Field& phi1);
MpassBound mpass_upper_bound(double lambda, double lambda1, const Field& phi1);

struct SpectralInputs {
    std::optional<double> lambda;
    std::optional<double> lambda_over_lambda1;
    std::optional<double> lambda_star;
    std::optional<double> lambda_star_over_lambda1;
    std::optional<double> kappa;
    std::optional<double> kappa_fraction; // of the lower threshold
    std::optional<double> M_override;
};

struct SpectralData {
    double lambda1 = 0.0;
    Field phi1;
    double S = 0.0;
    double lambda = 0.0;
    double lambda_star = 0.0;
    double kappa = 0.0;
    double M = 0.0;          // M_{lambda*} or the override
    bool M_overridden = false;
    MpassBound M_lambda;     // at the working lambda
    MpassBound M_lambda_star;
    double kappa_star_upper = 0.0;
    double kappa_star_lower = 0.0;
    double rho = 0.0;
    double rho_floor = 0.0;
    int eigen_iterations = 0;
    double eigen_residual = 0.0;
};

// With require_finite_M false an infinite M_{lambda*} (lambda* <= lambda1, no
// override) is returned as is, with zero thresholds, instead of throwing.
SpectralData compute_spectral(const Grid& g, const SpectralInputs& in, bool require_finite_M = true);

} // namespace fbground
