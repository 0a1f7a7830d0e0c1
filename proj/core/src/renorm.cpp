#include "isingkac/renorm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "isingkac/numerics.hpp"

namespace isingkac {

namespace {

constexpr double kDegenerate = 1e-14;

bool inside_box(const TorusLattice& L, std::size_t k, int W) {
    if (W < 0) return true;
    const Coord c = L.centred_coords(k);
    for (int i = 0; i < L.d; ++i) {
        if (std::abs(c[i]) > W) return false;
    }
    return true;
}

// Positive decay rates l(w) = -laplacian_symbol; l(0) = 0.
std::vector<double> decay_rates(const SpectralKernel& spec, const ScalingParameters& s) {
    std::vector<double> l(spec.full.size());
    for (std::size_t k = 0; k < l.size(); ++k) {
        l[k] = k == 0 ? 0.0 : -laplacian_symbol(spec.full[k], s);
        if (k != 0 && !(1.0 - spec.full[k] > kDegenerate)) {
            throw DegenerateDenominator("1 - K^(w) vanishes at a nonzero frequency");
        }
    }
    return l;
}

std::pair<double, double> rate_range(const std::vector<double>& l) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t k = 1; k < l.size(); ++k) {
        lo = std::min(lo, l[k]);
        hi = std::max(hi, l[k]);
    }
    return {lo, hi};
}

// Sum over w of K^(w) e^{-l(w) t} [G * G](w) with the cyclic convolution done by FFT.
class ConvolutionSum {
public:
    ConvolutionSum(const SpectralKernel& spec, std::vector<double> l)
        : spec_(spec), l_(std::move(l)), plan_(spec.lattice), g_(l_.size()), conv_(l_.size()),
          h_(plan_.half_size()) {}

    template <class Fill>
    double operator()(double t, Fill&& fill) {
        for (std::size_t k = 0; k < g_.size(); ++k) g_[k] = fill(k);
        plan_.forward(g_.data(), h_.data());
        for (Complex& z : h_) z *= z;
        plan_.inverse(h_.data(), conv_.data());
        const double inv = 1.0 / static_cast<double>(g_.size());
        KahanSum sum;
        for (std::size_t k = 0; k < g_.size(); ++k) {
            sum += spec_.full[k] * std::exp(-l_[k] * t) * conv_[k] * inv;
        }
        return sum.value();
    }

    const std::vector<double>& rates() const { return l_; }

private:
    const SpectralKernel& spec_;
    std::vector<double> l_;
    FftPlan plan_;
    std::vector<double> g_, conv_;
    std::vector<Complex> h_;
};

template <class F>
Estimate log_quadrature(F&& f, double lo, double hi) {
    using boost::math::quadrature::gauss_kronrod;
    double err = 0.0;
    const double v = gauss_kronrod<double, 15>::integrate(
        [&](double x) {
            const double u = std::exp(x);
            return u * f(u);
        },
        std::log(lo), std::log(hi), 10, 1e-10, &err);
    return {v, err};
}

}  // namespace

double c2_main(const SpectralKernel& spec, const ScalingParameters& s, int W) {
    KahanSum sum;
    for (std::size_t k = 1; k < spec.full.size(); ++k) {
        if (!inside_box(spec.lattice, k, W)) continue;
        const double kh = spec.full[k];
        const double a = 1.0 - kh;
        if (!(a > kDegenerate)) throw DegenerateDenominator("1 - K^(w) vanishes at a nonzero frequency");
        sum += kh * kh / a;
    }
    return s.alpha / s.volume() * sum.value();
}

Estimate c1_main(const SpectralKernel& spec, const ScalingParameters& s) {
    ConvolutionSum conv(spec, decay_rates(spec, s));
    const auto& l = conv.rates();
    const auto [lmin, lmax] = rate_range(l);
    auto integrand = [&](double u) {
        return conv(u, [&](std::size_t k) {
            if (k == 0) return 0.0;
            const double kh = spec.full[k];
            return kh * kh * std::exp(-l[k] * u) / l[k];
        });
    };
    const double u0 = 1e-7 / lmax;
    Estimate e = log_quadrature(integrand, u0, 25.0 / lmin);
    const double head = integrand(u0) * u0;
    const double pre = 2.0 / (s.volume() * s.volume());
    return {pre * (e.value + head), pre * (e.error + std::abs(head))};
}

Estimate c1_main_direct(const SpectralKernel& spec, const ScalingParameters& s, int W) {
    const std::vector<double> l = decay_rates(spec, s);
    const TorusLattice& L = spec.lattice;
    const std::size_t M = l.size();
    std::vector<std::size_t> box;
    for (std::size_t k = 1; k < M; ++k) {
        if (inside_box(L, k, W)) box.push_back(k);
    }
    KahanSum sum;
    for (std::size_t k1 : box) {
        const Coord c1 = L.coords(k1);
        const double k1h = spec.full[k1];
        for (std::size_t k2 : box) {
            const Coord c2 = L.coords(k2);
            Coord c12{0, 0, 0};
            for (int i = 0; i < L.d; ++i) c12[i] = c1[i] + c2[i];
            const std::size_t k12 = L.index(c12);
            const double k2h = spec.full[k2];
            sum += k1h * k1h * k2h * k2h * spec.full[k12] / (l[k1] * l[k2] * (l[k1] + l[k2] + l[k12]));
        }
    }
    const double pre = 2.0 / (s.volume() * s.volume());
    double bound = 0.0;
    if (box.size() + 1 < M) {
        KahanSum outside, all;
        for (std::size_t k = 1; k < M; ++k) {
            const double kh2 = spec.full[k] * spec.full[k];
            all += kh2 / (l[k] * l[k]);
            if (!inside_box(L, k, W)) outside += kh2 / l[k];
        }
        bound = 2.0 * pre * outside.value() * all.value();
    }
    return {pre * sum.value(), bound};
}

double c1_main_literal(const SpectralKernel& spec, const ScalingParameters& s, int W) {
    const TorusLattice& L = spec.lattice;
    std::vector<std::size_t> box;
    for (std::size_t k = 1; k < spec.full.size(); ++k) {
        if (inside_box(L, k, W)) box.push_back(k);
    }
    KahanSum sum;
    for (std::size_t k1 : box) {
        const Coord c1 = L.coords(k1);
        const double K1 = spec.full[k1];
        if (!(1.0 - K1 > kDegenerate)) throw DegenerateDenominator("1 - K^(w1) vanishes");
        for (std::size_t k2 : box) {
            const Coord c2 = L.coords(k2);
            Coord c12{0, 0, 0};
            for (int i = 0; i < L.d; ++i) c12[i] = c1[i] + c2[i];
            const double K2 = spec.full[k2];
            const double K12 = spec.full[L.index(c12)];
            const double den = 1.0 - K1 - K2 + K12;
            if (!(std::abs(den) > kDegenerate)) {
                throw DegenerateDenominator("1 - K^(w1) - K^(w2) + K^(w1 + w2) vanishes");
            }
            sum += K1 * K1 * K2 * K2 / ((1.0 - K1) * (1.0 - K2)) * K12 / den;
        }
    }
    return s.alpha * s.alpha * s.alpha / (2.0 * s.volume()) * sum.value();
}

double c_gamma(const SpectralKernel& spec, const ScalingParameters& s, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("time cutoff must be positive");
    const std::vector<double> l = decay_rates(spec, s);
    KahanSum sum;
    for (std::size_t k = 1; k < l.size(); ++k) {
        const double kh = spec.full[k];
        sum += kh * kh / l[k] * -std::expm1(-2.0 * l[k] * c);
    }
    return c / s.volume() + 0.5 / s.volume() * sum.value();
}

namespace {

double sunset_density(ConvolutionSum& conv, const SpectralKernel& spec, double c, double t) {
    const auto& l = conv.rates();
    return conv(t, [&](std::size_t k) {
        if (k == 0) return c - t;
        const double kh = spec.full[k];
        return kh * kh * std::exp(-l[k] * t) * -std::expm1(-2.0 * l[k] * (c - t)) / (2.0 * l[k]);
    });
}

}  // namespace

double c_double_prime_density(const SpectralKernel& spec, const ScalingParameters& s, double c,
                              double t) {
    ConvolutionSum conv(spec, decay_rates(spec, s));
    return 2.0 / (s.volume() * s.volume()) * sunset_density(conv, spec, c, t);
}

Estimate c_double_prime(const SpectralKernel& spec, const ScalingParameters& s, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("time cutoff must be positive");
    ConvolutionSum conv(spec, decay_rates(spec, s));
    const double lmax = rate_range(conv.rates()).second;
    auto f = [&](double t) { return sunset_density(conv, spec, c, t); };
    const double t0 = std::min(1e-7 / lmax, 1e-3 * c);
    Estimate e = log_quadrature(f, t0, c);
    const double head = f(t0) * t0;
    const double pre = 2.0 / (s.volume() * s.volume());
    return {pre * (e.value + head), pre * (e.error + std::abs(head))};
}

double plateau(double x) {
    const double a = std::abs(x);
    if (a <= 1.0) return 1.0;
    if (a >= 2.0) return 0.0;
    auto f = [](double y) { return y > 0.0 ? std::exp(-1.0 / y) : 0.0; };
    const double up = f(2.0 - a);
    return up / (up + f(a - 1.0));
}

SpectralKernel under_kernel_spectrum(const ScalingParameters& s, double kappa_under) {
    if (!(kappa_under > 0.0 && kappa_under < 0.1)) {
        throw std::invalid_argument("kappa_under must lie in (0, 1/10)");
    }
    const TorusLattice& L = s.lattice;
    const double scale = s.eps * std::pow(s.gamma, kappa_under - 1.0);
    SpectralKernel out;
    out.lattice = L;
    out.full.resize(L.size());
    for (std::size_t k = 0; k < out.full.size(); ++k) {
        const Coord w = L.centred_coords(k);
        double v = 1.0;
        for (int i = 0; i < L.d; ++i) v *= plateau(scale * w[i]);
        out.full[k] = v;
    }
    FftPlan plan(L);
    out.half.resize(plan.half_size());
    for (std::size_t h = 0; h < out.half.size(); ++h) out.half[h] = out.full[plan.full_index(h)];
    return out;
}

Field under_kernel_real(const SpectralKernel& under) {
    Spectrum sp{under.lattice, std::vector<Complex>(under.full.begin(), under.full.end())};
    return dft_inverse(sp);
}

double c_under_t(const SpectralKernel& spec, const SpectralKernel& under,
                 const ScalingParameters& s, double t) {
    if (t < 0.0) throw NegativeTime("c_under_t needs t >= 0");
    const std::vector<double> l = decay_rates(spec, s);
    KahanSum sum;
    for (std::size_t k = 1; k < l.size(); ++k) {
        const double factor = std::isinf(t) ? 1.0 : -std::expm1(-2.0 * l[k] * t);
        sum += under.full[k] * spec.full[k] / l[k] * factor;
    }
    return s.kappa2 / s.volume() * sum.value();
}

double c_under(const SpectralKernel& spec, const SpectralKernel& under, const ScalingParameters& s) {
    return c_under_t(spec, under, s, std::numeric_limits<double>::infinity());
}

double c_prime(double c_under_value, double c_gamma_value, const ScalingParameters& s, double beta) {
    return -beta * s.kappa3 * s.alpha * c_under_value * c_gamma_value;
}

void resolve_beta(RenormConstants& r, const ScalingParameters& s, const RenormOptions& options) {
    double beta = 1.0;
    for (int it = 1; it <= options.max_iterations; ++it) {
        const double cp = c_prime(r.c_under, r.c, s, beta);
        const double C = 2.0 * (r.c + cp - 2.0 * r.c_double_prime);
        const double next = 1.0 + s.alpha * (C + options.A);
        const bool done = std::abs(next - beta) < options.beta_tolerance;
        beta = next;
        if (done) {
            r.iterations = it;
            r.beta = beta;
            r.c_prime = c_prime(r.c_under, r.c, s, beta);
            r.C = 2.0 * (r.c + r.c_prime - 2.0 * r.c_double_prime);
            return;
        }
    }
    throw NoConvergence("beta iteration did not converge");
}

RenormConstants total_C(const SpectralKernel& spec, const ScalingParameters& s,
                        const RenormOptions& options) {
    RenormConstants r;
    r.gamma = s.gamma;
    r.mesoscale = s.mesoscale;
    r.cutoff = options.cutoff;
    r.kappa_under = options.kappa_under;
    r.c = c_gamma(spec, s, options.cutoff);
    const Estimate dp = c_double_prime(spec, s, options.cutoff);
    r.c_double_prime = dp.value;
    r.c_double_prime_error = dp.error;
    r.c2 = c2_main(spec, s);
    const Estimate c1 = c1_main(spec, s);
    r.c1 = c1.value;
    r.c1_error = c1.error;
    r.c_under = c_under(spec, under_kernel_spectrum(s, options.kappa_under), s);
    resolve_beta(r, s, options);
    return r;
}

RenormFits fit_rates(const std::vector<RenormConstants>& rows) {
    RenormFits f;
    if (rows.size() < 2) return f;
    std::vector<double> x, log_c2, c1, e_c2, c1_log;
    for (const auto& r : rows) {
        const double L = std::log(1.0 / r.mesoscale);
        x.push_back(L);
        log_c2.push_back(std::log(r.c2));
        c1.push_back(r.c1);
        e_c2.push_back(r.mesoscale * r.c2);
        c1_log.push_back(r.c1 / L);
    }
    f.c2_slope = linear_fit(x, log_c2).slope;
    f.c1_slope = linear_fit(x, c1).slope;
    auto ratio = [](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *hi / *lo;
    };
    f.e_c2_ratio = ratio(e_c2);
    f.c1_log_ratio = ratio(c1_log);
    return f;
}

void write_renorm_csv(const std::string& path, const std::vector<RenormConstants>& rows,
                      const RenormFits& fits) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        out << std::setprecision(17);
        out << "# schema renorm v1\n";
        out << "# fit c2_slope=" << fits.c2_slope << " c1_slope=" << fits.c1_slope
            << " e_c2_ratio=" << fits.e_c2_ratio << " c1_log_ratio=" << fits.c1_log_ratio << '\n';
        out << "gamma,mesoscale,cutoff,kappa_under,c,c_prime,c_double_prime,c_double_prime_error,"
               "c2,c1,c1_error,c_under,C,beta,iterations,remainder\n";
        for (const auto& r : rows) {
            out << r.gamma << ',' << r.mesoscale << ',' << r.cutoff << ',' << r.kappa_under << ','
                << r.c << ',' << r.c_prime << ',' << r.c_double_prime << ','
                << r.c_double_prime_error << ',' << r.c2 << ',' << r.c1 << ',' << r.c1_error << ','
                << r.c_under << ',' << r.C << ',' << r.beta << ',' << r.iterations << ','
                << r.remainder() << '\n';
        }
        if (!out) throw std::runtime_error("failed to write " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

}  // namespace isingkac
