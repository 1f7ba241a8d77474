#pragma once

#include <functional>
#include <string>

#include "fbground/grid.hpp"

namespace fbground {

// Smoothing kernel: beta(t) = 30 t^2 (1-t)^2 on [0,1], B(t) = int_0^t beta.
double beta_eval(double t);
double bigB_eval(double t);
double beta_prime(double t);

enum class NonlinearityKind { critical, subcritical, custom };

std::string to_string(NonlinearityKind k);

// f(t) with f = 0 for t <= 0 and |f(t)| <= C (t^{2*-1} + 1); F(t) = int_0^t f.
class Nonlinearity {
public:
    using Fn = std::function<double(double)>;

    // f(t) = lambda t_+ + kappa t_+^{2*-1}
    static Nonlinearity critical(int dim, double lambda, double kappa);
    // f(t) = lambda t_+ + kappa t_+^{p-1}, 2 < p < 2*
    static Nonlinearity subcritical(int dim, double lambda, double kappa, double p);
    static Nonlinearity custom(int dim, Fn f, Fn F, Fn fprime, double C);

    NonlinearityKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double lambda() const { return lambda_; }
    double kappa() const { return kappa_; }
    double p() const { return p_; }
    double growth_constant() const { return C_; }
    double critical_exponent() const { return 2.0 * dim_ / (dim_ - 2.0); }

    double f(double t) const;
    double F(double t) const;
    double fprime(double t) const; // one-sided at 0: f'(0) = 0

private:
    Nonlinearity() = default;
    void validate() const;

    NonlinearityKind kind_ = NonlinearityKind::critical;
    int dim_ = 3;
    double lambda_ = 0.0, kappa_ = 0.0, p_ = 0.0, C_ = 0.0;
    Fn f_, F_, fp_;
};

struct EnergyReport {
    double total = 0.0;
    double dirichlet = 0.0; // 1/2 int |grad u|^2
    double phase = 0.0;     // int chi_{u>1} or int B((u-1)/eps)
    double potential = 0.0; // int F(u-1)
};

EnergyReport energy_J(const Field& u, const Nonlinearity& nl);
EnergyReport energy_Jeps(const Field& u, double eps, const Nonlinearity& nl);

// Nodal residual -lap u + beta((u-1)/eps)/eps - f(u-1) at interior nodes, zero
// on the boundary; its trapezoid product with v is the derivative of J_eps.
Field grad_Jeps(const Field& u, double eps, const Nonlinearity& nl);

// Gap of the plus-part energy inequality for the critical kind:
// J_eps(u) - 1/2 J_eps'(u) u^+ + |Omega| - (kappa/N) int (u^+)^{2*}, never negative.
double plus_energy_gap(const Field& u, double eps, const Nonlinearity& nl);

} // namespace fbground
