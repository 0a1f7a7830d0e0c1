#include "isingkac/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>

#include "isingkac/numerics.hpp"

namespace isingkac {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

FftPlan::FftPlan(const TorusLattice& lattice) : lattice_(lattice) {
    std::vector<int> n(static_cast<std::size_t>(lattice.d), lattice.side);
    real_size_ = lattice.size();
    half_size_ = real_size_ / lattice.side * (lattice.side / 2 + 1);
    rbuf_ = fftw_alloc_real(real_size_);
    cbuf_ = reinterpret_cast<Complex*>(fftw_alloc_complex(half_size_));
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_r2c(lattice.d, n.data(), rbuf_, reinterpret_cast<fftw_complex*>(cbuf_),
                             FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r(lattice.d, n.data(), reinterpret_cast<fftw_complex*>(cbuf_), rbuf_,
                             FFTW_ESTIMATE);
}

FftPlan::~FftPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(inv_));
    fftw_free(rbuf_);
    fftw_free(cbuf_);
}

void FftPlan::forward(const double* in, Complex* out) const {
    std::copy(in, in + real_size_, rbuf_);
    fftw_execute(static_cast<fftw_plan>(fwd_));
    std::copy(cbuf_, cbuf_ + half_size_, out);
}

void FftPlan::inverse(const Complex* in, double* out) const {
    std::copy(in, in + half_size_, cbuf_);
    fftw_execute(static_cast<fftw_plan>(inv_));
    std::copy(rbuf_, rbuf_ + real_size_, out);
}

std::size_t FftPlan::full_index(std::size_t half) const {
    const std::size_t h = static_cast<std::size_t>(lattice_.side / 2 + 1);
    const std::size_t last = half % h;
    const std::size_t lead = half / h;
    return lead * static_cast<std::size_t>(lattice_.side) + last;
}

namespace {

std::vector<int> dims(const TorusLattice& lattice) {
    return std::vector<int>(static_cast<std::size_t>(lattice.d), lattice.side);
}

void full_c2c(const TorusLattice& lattice, std::vector<Complex>& data, int sign) {
    const auto n = dims(lattice);
    fftw_complex* buf = fftw_alloc_complex(data.size());
    fftw_plan p;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        p = fftw_plan_dft(lattice.d, n.data(), buf, buf, sign, FFTW_ESTIMATE);
    }
    std::copy(data.begin(), data.end(), reinterpret_cast<Complex*>(buf));
    fftw_execute(p);
    std::copy(reinterpret_cast<Complex*>(buf), reinterpret_cast<Complex*>(buf) + data.size(),
              data.begin());
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(p);
    fftw_free(buf);
}

}  // namespace

Spectrum dft_forward(const Field& g, const TorusLattice& lattice) {
    if (g.size() != lattice.size()) throw std::invalid_argument("field does not match lattice");
    Spectrum s{lattice, std::vector<Complex>(g.begin(), g.end())};
    full_c2c(lattice, s.values, FFTW_FORWARD);
    const double w = std::pow(lattice.eps(), lattice.d);
    for (auto& v : s.values) v *= w;
    return s;
}

Field dft_inverse(const Spectrum& s) {
    std::vector<Complex> data = s.values;
    full_c2c(s.lattice, data, FFTW_BACKWARD);
    const double w = std::ldexp(1.0, -s.lattice.d);
    Field out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = w * data[i].real();
    return out;
}

Spectrum dft_forward_direct(const Field& g, const TorusLattice& lattice) {
    const std::size_t M = lattice.size();
    Spectrum s{lattice, std::vector<Complex>(M)};
    const double eps = lattice.eps();
    const double w = std::pow(eps, lattice.d);
    for (std::size_t a = 0; a < M; ++a) {
        const Coord om = lattice.centred_coords(a);
        Complex acc = 0.0;
        for (std::size_t b = 0; b < M; ++b) {
            const Coord x = lattice.centred_coords(b);
            double phase = 0.0;
            for (int i = 0; i < lattice.d; ++i) phase += om[i] * eps * x[i];
            acc += g[b] * std::polar(1.0, -std::numbers::pi * phase);
        }
        s.values[a] = w * acc;
    }
    return s;
}

SpectralKernel spectrum_from_real(const Field& kernel_values, const TorusLattice& lattice) {
    // kernel_values holds K(k) in lattice units (unit sum), i.e. eps^d K_gamma(x)
    FftPlan plan(lattice);
    std::vector<Complex> half(plan.half_size());
    plan.forward(kernel_values.data(), half.data());
    SpectralKernel sk;
    sk.lattice = lattice;
    sk.half.resize(half.size());
    for (std::size_t i = 0; i < half.size(); ++i) sk.half[i] = half[i].real();
    Spectrum full{lattice, std::vector<Complex>(kernel_values.begin(), kernel_values.end())};
    full_c2c(lattice, full.values, FFTW_FORWARD);
    sk.full.resize(full.values.size());
    for (std::size_t i = 0; i < full.values.size(); ++i) sk.full[i] = full.values[i].real();
    return sk;
}

SpectralKernel kernel_spectrum(const KacKernel& kernel) {
    SpectralKernel sk = spectrum_from_real(kernel.dense, kernel.lattice);
    // the kernel sums to one up to rounding; pin the zero mode exactly
    sk.full[0] = 1.0;
    sk.half[0] = 1.0;
    return sk;
}

double kernel_spectrum_at(const KacKernel& kernel, const std::array<double, 3>& w) {
    const double eps = kernel.lattice.eps();
    double acc = 0.0;
    for (std::size_t i = 0; i < kernel.offsets.size(); ++i) {
        double phase = 0.0;
        for (int a = 0; a < kernel.lattice.d; ++a) phase += w[a] * kernel.offsets[i][a];
        acc += kernel.weights[i] * std::cos(std::numbers::pi * eps * phase);
    }
    return acc;
}

double laplacian_symbol(double khat, const ScalingParameters& s) {
    return s.kappa3 * s.kappa3 * s.gamma * s.gamma / (s.eps * s.eps) * (khat - 1.0);
}

double heat_symbol(double khat, double t, const ScalingParameters& s) {
    return std::exp(t * laplacian_symbol(khat, s));
}

SpectralCalculus::SpectralCalculus(const ScalingParameters& scaling, SpectralKernel spectrum)
    : scaling_(scaling), spectrum_(std::move(spectrum)),
      plan_(std::make_shared<FftPlan>(scaling.lattice)) {}

Field SpectralCalculus::inverse_scaled(std::vector<Complex>& spec) const {
    Field out(plan_->real_size());
    plan_->inverse(spec.data(), out.data());
    const double inv = 1.0 / static_cast<double>(plan_->real_size());
    for (double& v : out) v *= inv;
    return out;
}

Field SpectralCalculus::convolve(const Field& f) const {
    return apply(f, [](double k, std::size_t) { return k; });
}

Field SpectralCalculus::laplacian(const Field& f) const {
    return apply(f, [&](double k, std::size_t) { return laplacian_symbol(k, scaling_); });
}

Field SpectralCalculus::heat(const Field& f, double t) const {
    if (t < 0.0) throw NegativeTime("heat semigroup needs t >= 0");
    return apply(f, [&](double k, std::size_t) { return heat_symbol(k, t, scaling_); });
}

Field SpectralCalculus::tilde_heat(const Field& f, double t) const {
    if (t < 0.0) throw NegativeTime("heat semigroup needs t >= 0");
    return apply(f, [&](double k, std::size_t) { return k * heat_symbol(k, t, scaling_); });
}

Field SpectralCalculus::heat_kernel(double t) const {
    if (t < 0.0) throw NegativeTime("heat kernel needs t >= 0");
    std::vector<Complex> spec(plan_->half_size());
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = heat_symbol(spectrum_.half[i], t, scaling_);
    // P_t(x) = 2^-d sum_w P^(w) e^{pi i w.x}; the unnormalised inverse carries the 1/M
    Field out = inverse_scaled(spec);
    const double norm = 1.0 / std::pow(scaling_.eps, scaling_.d());
    for (double& v : out) v *= norm;
    return out;
}

Field SpectralCalculus::tilde_heat_kernel(double t) const {
    if (t < 0.0) throw NegativeTime("heat kernel needs t >= 0");
    std::vector<Complex> spec(plan_->half_size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        spec[i] = spectrum_.half[i] * heat_symbol(spectrum_.half[i], t, scaling_);
    }
    Field out = inverse_scaled(spec);
    const double norm = 1.0 / std::pow(scaling_.eps, scaling_.d());
    for (double& v : out) v *= norm;
    return out;
}

Field convolve_direct(const Field& kernel_values, const Field& f, const TorusLattice& lattice) {
    const std::size_t M = lattice.size();
    const double w = std::pow(lattice.eps(), lattice.d);
    Field out(M, 0.0);
    for (std::size_t x = 0; x < M; ++x) {
        const Coord cx = lattice.coords(x);
        double acc = 0.0;
        for (std::size_t y = 0; y < M; ++y) {
            const Coord cy = lattice.coords(y);
            Coord diff{0, 0, 0};
            for (int i = 0; i < lattice.d; ++i) diff[i] = cx[i] - cy[i];
            acc += kernel_values[lattice.index(diff)] * f[y];
        }
        out[x] = w * acc;
    }
    return out;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        t[i] = lo * std::pow(hi / lo, u);
    }
    return t;
}

HeatSupnormScan heat_supnorm_scan(const SpectralCalculus& calc, const std::vector<double>& times) {
    HeatSupnormScan out;
    const auto& s = calc.scaling();
    for (double t : times) {
        const Field k = calc.tilde_heat_kernel(t);
        double m = 0.0;
        for (double v : k) m = std::max(m, std::abs(v));
        out.times.push_back(t);
        out.supnorm.push_back(m);
        const double scaled = m * std::pow(std::sqrt(t) + s.mesoscale, s.d());
        out.scaled.push_back(scaled);
        out.constant = std::max(out.constant, scaled);
    }
    return out;
}

KernelBoundsReport verify_kernel_bounds(const SpectralKernel& spec, const KacKernel& kernel,
                                        const ScalingParameters& scaling,
                                        std::size_t random_samples) {
    KernelBoundsReport r;
    r.gamma = scaling.gamma;
    const TorusLattice& L = spec.lattice;
    const int d = L.d;
    const double scale = scaling.delta;  // gamma^3 in three dimensions
    const double far = 1.0 / scale;
    r.c2.assign(r.decay_orders.size(), 0.0);
    r.c4 = std::numeric_limits<double>::infinity();
    r.c4_offgrid = std::numeric_limits<double>::infinity();

    auto visit = [&](const std::array<double, 3>& w, double khat, bool on_grid) {
        double norm2 = 0.0;
        for (int i = 0; i < d; ++i) norm2 += w[i] * w[i];
        if (norm2 == 0.0) return;
        const double absk = std::abs(khat);
        const double ratio = (1.0 - khat) / std::min(scale * scale * norm2, 1.0);
        if (on_grid) {
            r.max_abs_khat = std::max(r.max_abs_khat, absk);
            r.c4 = std::min(r.c4, ratio);
        } else {
            r.max_abs_khat_offgrid = std::max(r.max_abs_khat_offgrid, absk);
            r.c4_offgrid = std::min(r.c4_offgrid, ratio);
        }
        const double norm = std::sqrt(norm2);
        if (norm >= far) {
            for (std::size_t m = 0; m < r.decay_orders.size(); ++m) {
                r.c2[m] = std::max(r.c2[m], absk * std::pow(scale * norm, r.decay_orders[m]));
            }
        }
    };

    for (std::size_t i = 0; i < L.size(); ++i) {
        const Coord c = L.centred_coords(i);
        visit({double(c[0]), double(c[1]), double(c[2])}, spec.full[i], true);
    }
    const double half = L.side / 2.0;
    const int steps = static_cast<int>(8 * half);
    for (int m = 1; m <= steps; ++m) {
        const double u = m / 8.0;
        std::vector<std::array<double, 3>> dirs{{u, 0, 0}};
        if (d >= 2) dirs.push_back({u, u, 0});
        if (d >= 3) dirs.push_back({u, u, u});
        for (const auto& w : dirs) visit(w, kernel_spectrum_at(kernel, w), false);
    }
    std::mt19937_64 rng(0x5eed5eedULL);
    std::uniform_real_distribution<double> unif(-half, half);
    for (std::size_t n = 0; n < random_samples; ++n) {
        std::array<double, 3> w{0, 0, 0};
        for (int i = 0; i < d; ++i) w[i] = unif(rng);
        visit(w, kernel_spectrum_at(kernel, w), false);
    }
    SpectralCalculus calc(scaling, spec);
    r.heat_constant = heat_supnorm_scan(calc, log_spaced(1e-6, 10.0, 57)).constant;
    r.pass = r.c4 > 0.0 && r.c4_offgrid > 0.0 && r.max_abs_khat <= 1.0 + 1e-12 &&
             r.max_abs_khat_offgrid <= 1.0 + 1e-12;
    return r;
}

void write_spectrum_csv(const std::string& path, const SpectralKernel& spec) {
    std::ofstream out(path);
    out << "# schema: spectrum v1\n";
    out << "w1,w2,w3,khat\n";
    out.precision(17);
    for (std::size_t i = 0; i < spec.full.size(); ++i) {
        const Coord c = spec.lattice.centred_coords(i);
        out << c[0] << ',' << c[1] << ',' << c[2] << ',' << spec.full[i] << '\n';
    }
}

}  // namespace isingkac
