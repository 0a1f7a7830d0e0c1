#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "isingkac/lattice.hpp"

namespace isingkac {

using Complex = std::complex<double>;

class NegativeTime : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Unnormalised real-to-half-complex transforms on a lattice (FFTW, estimate plans).
// The half spectrum keeps the last axis at frequencies 0..side/2.
class FftPlan {
public:
    explicit FftPlan(const TorusLattice& lattice);
    ~FftPlan();
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    const TorusLattice& lattice() const { return lattice_; }
    std::size_t real_size() const { return real_size_; }
    std::size_t half_size() const { return half_size_; }

    void forward(const double* in, Complex* out) const;
    void inverse(const Complex* in, double* out) const;

    // Full-grid site index for a half-spectrum index.
    std::size_t full_index(std::size_t half) const;

private:
    TorusLattice lattice_;
    std::size_t real_size_ = 0;
    std::size_t half_size_ = 0;
    double* rbuf_ = nullptr;
    Complex* cbuf_ = nullptr;
    void* fwd_ = nullptr;
    void* inv_ = nullptr;
};

// Full-grid spectrum; entry at site index k holds frequency centred(k) per axis.
struct Spectrum {
    TorusLattice lattice;
    std::vector<Complex> values;
};

// g^(w) = eps^d sum_x g(x) exp(-pi i w.x)
Spectrum dft_forward(const Field& g, const TorusLattice& lattice);
// g(x) = 2^-d sum_w g^(w) exp(pi i w.x), real part
Field dft_inverse(const Spectrum& s);
// Direct O(M^2) evaluation, for tests on small lattices.
Spectrum dft_forward_direct(const Field& g, const TorusLattice& lattice);

struct SpectralKernel {
    TorusLattice lattice;
    std::vector<double> full;  // K^(w) on the full frequency grid
    std::vector<double> half;  // the same values in half-spectrum layout

    double at(const Coord& w) const { return full[lattice.index(w)]; }
};

SpectralKernel kernel_spectrum(const KacKernel& kernel);
SpectralKernel spectrum_from_real(const Field& kernel_values, const TorusLattice& lattice);
// K^ at an arbitrary real frequency, by direct summation over the kernel support.
double kernel_spectrum_at(const KacKernel& kernel, const std::array<double, 3>& w);

// Multiplier of the generator of the linear part: kappa3^2 gamma^2 eps^-2 (K^ - 1).
double laplacian_symbol(double khat, const ScalingParameters& s);
// Heat multiplier exp(t * laplacian_symbol), t macroscopic.
double heat_symbol(double khat, double t, const ScalingParameters& s);

// Spectral operators sharing one FFT plan.
class SpectralCalculus {
public:
    SpectralCalculus(const ScalingParameters& scaling, SpectralKernel spectrum);

    const ScalingParameters& scaling() const { return scaling_; }
    const SpectralKernel& spectrum() const { return spectrum_; }
    const FftPlan& plan() const { return *plan_; }

    // (K * f)(x) = eps^d sum_y K(x-y) f(y)
    Field convolve(const Field& f) const;
    Field laplacian(const Field& f) const;
    Field heat(const Field& f, double t) const;
    Field tilde_heat(const Field& f, double t) const;
    // Generic: multiply the half spectrum of f by m(K^) and transform back.
    template <class F>
    Field apply(const Field& f, F&& symbol) const {
        std::vector<Complex> spec(plan_->half_size());
        plan_->forward(f.data(), spec.data());
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= symbol(spectrum_.half[i], i);
        return inverse_scaled(spec);
    }

    // Real-space kernels P_t(x) and P~_t(x) as lattice fields.
    Field heat_kernel(double t) const;
    Field tilde_heat_kernel(double t) const;

    Field inverse_scaled(std::vector<Complex>& spec) const;

private:
    ScalingParameters scaling_;
    SpectralKernel spectrum_;
    std::shared_ptr<FftPlan> plan_;
};

// Direct-space convolution eps^d sum_y K(x-y) f(y) with a dense kernel; for tests.
Field convolve_direct(const Field& kernel_values, const Field& f, const TorusLattice& lattice);

struct KernelBoundsReport {
    double gamma = 0.0;
    double max_abs_khat = 0.0;        // on the lattice frequency grid
    double max_abs_khat_offgrid = 0.0;
    double c4 = 0.0;                  // min over w != 0 of (1 - K^) / (|gamma^3 w|^2 ^ 1)
    double c4_offgrid = 0.0;
    std::vector<int> decay_orders{2, 4, 8};
    std::vector<double> c2;           // max over |w| >= gamma^-3 of |K^| |gamma^3 w|^m
    double heat_constant = 0.0;       // max_t |P~_t|_inf (sqrt t + e)^d
    bool pass = false;
};

// Off-grid samples: 8x oversampled along the axes and diagonals, plus a seeded
// random set of `random_samples` frequencies inside the torus box.
KernelBoundsReport verify_kernel_bounds(const SpectralKernel& spec, const KacKernel& kernel,
                                        const ScalingParameters& scaling,
                                        std::size_t random_samples = 2000);

struct HeatSupnormScan {
    std::vector<double> times;
    std::vector<double> supnorm;
    std::vector<double> scaled;  // supnorm * (sqrt t + e)^d
    double constant = 0.0;       // max of scaled
};

HeatSupnormScan heat_supnorm_scan(const SpectralCalculus& calc, const std::vector<double>& times);
std::vector<double> log_spaced(double lo, double hi, std::size_t n);

void write_spectrum_csv(const std::string& path, const SpectralKernel& spec);

}  // namespace isingkac
