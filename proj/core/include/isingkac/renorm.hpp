#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "isingkac/spectral.hpp"

namespace isingkac {

class DegenerateDenominator : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

// W < 0 means the whole frequency torus.
// alpha / 2^d sum_{0 < |w|_inf <= W} |K^(w)|^2 / (1 - K^(w))
double c2_main(const SpectralKernel& spec, const ScalingParameters& s, int W = -1);

// Sunset constant 2^{1-2d} sum_{w1,w2 != 0} K^1^2 K^2^2 K^12 / (l1 l2 (l1 + l2 + l12)) up to
// sign, with l = -laplacian_symbol. Equals alpha^3/2^{2d-1} sum K1^2 K2^2 K12 / (a1 a2 (a1+a2+a12)),
// a = 1 - K^. Evaluated over the full torus with one cyclic FFT convolution per node of a
// log-time quadrature; the error is the quadrature estimate.
Estimate c1_main(const SpectralKernel& spec, const ScalingParameters& s);
// The same double sum by direct enumeration over 0 < |w1|_inf, |w2|_inf <= W. The error is
// a rigorous bound on the omitted terms (zero when W covers the torus).
Estimate c1_main_direct(const SpectralKernel& spec, const ScalingParameters& s, int W);
// Double sum with denominator (1 - K^1 - K^2 + K^12) and prefactor alpha^3 / 2^{d+1}.
double c1_main_literal(const SpectralKernel& spec, const ScalingParameters& s, int W);

// c/2^d + 1/(2 2^d) sum_{w != 0} |K^|^2 / l (1 - e^{-2 l c}), l = -laplacian_symbol
double c_gamma(const SpectralKernel& spec, const ScalingParameters& s, double c);

// 2 int_{[0,c]^3} P~(z) P~(z1) P~(z2) P~(z1 - z) P~(z2 - z), by one FFT convolution per
// time node.
Estimate c_double_prime(const SpectralKernel& spec, const ScalingParameters& s, double c);
// Same integrand at a single time t (integrated over t in [0, c] above).
double c_double_prime_density(const SpectralKernel& spec, const ScalingParameters& s, double c,
                              double t);

// Smooth plateau: 1 on |x| <= 1, 0 on |x| >= 2.
double plateau(double x);
// Under-smoothed kernel spectrum prod_i plateau(eps gamma^(kappa_under - 1) w_i).
SpectralKernel under_kernel_spectrum(const ScalingParameters& s, double kappa_under);
Field under_kernel_real(const SpectralKernel& under);

// kappa2 / 2^d sum_{w != 0} K_^ K^ / l (1 - e^{-2 l t}); t = infinity gives the limit.
double c_under_t(const SpectralKernel& spec, const SpectralKernel& under,
                 const ScalingParameters& s, double t);
double c_under(const SpectralKernel& spec, const SpectralKernel& under, const ScalingParameters& s);

// -beta kappa3 alpha C_under c_gamma
double c_prime(double c_under_value, double c_gamma_value, const ScalingParameters& s, double beta);

struct RenormOptions {
    double cutoff = 1.0;         // time cutoff c of the surrogate kernel
    double kappa_under = 0.05;
    double A = 0.0;
    int max_iterations = 100;
    double beta_tolerance = 1e-12;
};

struct RenormConstants {
    double gamma = 0.0;
    double mesoscale = 0.0;
    double cutoff = 0.0;
    double kappa_under = 0.0;
    double c = 0.0;                 // c_gamma
    double c_prime = 0.0;
    double c_double_prime = 0.0;
    double c_double_prime_error = 0.0;
    double c2 = 0.0;
    double c1 = 0.0;                // positive sunset constant, c'' ~ c1 / 4
    double c1_error = 0.0;
    double c_under = 0.0;
    double C = 0.0;                 // 2 (c + c' - 2 c'')
    double beta = 1.0;
    int iterations = 0;
    // C - c2 + c1: the finite remainder once the divergent parts are removed
    double remainder() const { return C - c2 + c1; }
};

RenormConstants total_C(const SpectralKernel& spec, const ScalingParameters& s,
                        const RenormOptions& options = {});
// The beta iteration for precomputed c, c'' and C_under.
void resolve_beta(RenormConstants& r, const ScalingParameters& s, const RenormOptions& options);

struct RenormFits {
    double c2_slope = 0.0;         // log c2 against log(1/e)
    double c1_slope = 0.0;         // c1 against log(1/e)
    double e_c2_ratio = 0.0;       // max/min of e c2
    double c1_log_ratio = 0.0;     // max/min of c1 / log(1/e)
};
RenormFits fit_rates(const std::vector<RenormConstants>& rows);

void write_renorm_csv(const std::string& path, const std::vector<RenormConstants>& rows,
                      const RenormFits& fits);

}  // namespace isingkac
