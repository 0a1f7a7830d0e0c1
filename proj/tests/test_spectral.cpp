#include "doctest.h"

#include <cmath>
#include <numbers>

#include "isingkac/numerics.hpp"
#include "isingkac/spectral.hpp"

using namespace isingkac;

namespace {

struct Setup {
    ScalingParameters s;
    KacKernel k;
    SpectralKernel spec;
    SpectralCalculus calc;

    explicit Setup(double g)
        : s(ScalingParameters::physical(3, g)),
          k(build_kac_kernel(KacProfile::calibrated_bump(3), g, s.lattice)),
          spec(kernel_spectrum(k)),
          calc(s, spec) {}
};

Field random_field(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Field f(n);
    for (double& v : f) v = rng.normal();
    return f;
}

double max_abs_diff(const Field& a, const Field& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs(const Field& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

double mass(const Field& f, const TorusLattice& L) {
    return pairwise_sum(f) * std::pow(L.eps(), L.d);
}

}  // namespace

TEST_CASE("discrete fourier transform") {
    const TorusLattice L = TorusLattice::from_half_width(2, 3);
    const Field one(L.size(), 1.0);
    const Spectrum s = dft_forward(one, L);
    CHECK(s.values[0].real() == doctest::Approx(4.0).epsilon(1e-14));
    for (std::size_t i = 1; i < s.values.size(); ++i) CHECK(std::abs(s.values[i]) < 1e-13);

    const Field g = random_field(L.size(), 1);
    const Field h = random_field(L.size(), 2);
    CHECK(max_abs_diff(dft_inverse(dft_forward(g, L)), g) < 1e-10);
    const Spectrum direct = dft_forward_direct(g, L);
    const Spectrum fast = dft_forward(g, L);
    double err = 0.0;
    for (std::size_t i = 0; i < direct.values.size(); ++i) err = std::max(err, std::abs(direct.values[i] - fast.values[i]));
    CHECK(err < 1e-12);

    // Parseval
    double lhs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) lhs += g[i] * h[i];
    lhs *= std::pow(L.eps(), L.d);
    const Spectrum gh = dft_forward(h, L);
    double rhs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rhs += (fast.values[i] * std::conj(gh.values[i])).real();
    rhs /= 4.0;
    CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-10);
}

TEST_CASE("kernel spectrum") {
    Setup st(0.5);
    CHECK(st.spec.full[0] == doctest::Approx(1.0).epsilon(1e-15));
    double top = 0.0;
    for (std::size_t i = 1; i < st.spec.full.size(); ++i) top = std::max(top, std::abs(st.spec.full[i]));
    CHECK(top <= 1.0);
    CHECK(top < 1.0);
    // convolution theorem
    const Field f = random_field(st.s.lattice.size(), 3);
    const Spectrum lhs = dft_forward(st.calc.convolve(f), st.s.lattice);
    const Spectrum fh = dft_forward(f, st.s.lattice);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < fh.values.size(); ++i) {
        err = std::max(err, std::abs(lhs.values[i] - st.spec.full[i] * fh.values[i]));
        scale = std::max(scale, std::abs(lhs.values[i]));
    }
    CHECK(err / scale < 1e-10);
    // off-grid evaluation agrees on the grid
    const Coord w{1, -2, 3};
    CHECK(kernel_spectrum_at(st.k, {1.0, -2.0, 3.0}) == doctest::Approx(st.spec.at(w)).epsilon(1e-12));
}

TEST_CASE("spectral and direct convolution agree on a small lattice") {
    const ScalingParameters s = ScalingParameters::mini_lattice(2, 0.6, 15);
    const KacKernel k = build_kac_kernel(KacProfile::calibrated_bump(2), 0.6, s.lattice, false);
    SpectralCalculus calc(s, kernel_spectrum(k));
    const Field f = random_field(s.lattice.size(), 5);
    Field dense = k.dense;
    for (double& v : dense) v /= std::pow(s.eps, 2);
    CHECK(max_abs_diff(calc.convolve(f), convolve_direct(dense, f, s.lattice)) < 1e-12);
    // laplacian against its direct-space definition
    const Field direct = convolve_direct(dense, f, s.lattice);
    Field lap(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) lap[i] = (direct[i] - f[i]) / s.alpha;
    CHECK(max_abs_diff(calc.laplacian(f), lap) / max_abs(lap) < 1e-10);
}

TEST_CASE("laplacian") {
    for (double g : {0.5, 0.35}) {
        Setup st(g);
        const TorusLattice& L = st.s.lattice;
        CHECK(max_abs(st.calc.laplacian(Field(L.size(), 3.0))) < 1e-9);
        // low mode: cos(pi w.x) with w = (1, 0, 0)
        Field f(L.size());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::cos(std::numbers::pi * L.position(i)[0]);
        const Field lf = st.calc.laplacian(f);
        Field target(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) target[i] = -std::numbers::pi * std::numbers::pi * f[i];
        const double rel = max_abs_diff(lf, target) / max_abs(target);
        CHECK(rel < std::pow(g, 3));
    }
}

TEST_CASE("heat semigroups") {
    Setup st(0.5);
    const TorusLattice& L = st.s.lattice;
    const Field f = random_field(L.size(), 7);
    CHECK(max_abs_diff(st.calc.heat(f, 0.0), f) < 1e-12);
    CHECK(max_abs_diff(st.calc.tilde_heat(f, 0.0), st.calc.convolve(f)) < 1e-12);
    const double t = 0.003, s = 0.005;
    const Field a = st.calc.heat(st.calc.heat(f, s), t);
    const Field b = st.calc.heat(f, t + s);
    CHECK(max_abs_diff(a, b) / max_abs(b) < 1e-10);
    for (double tt : {0.0, 0.01, 0.1, 1.0}) {
        CHECK(mass(st.calc.heat(f, tt), L) == doctest::Approx(mass(f, L)).epsilon(1e-12).scale(1.0));
    }
    CHECK_THROWS_AS(st.calc.heat(f, -1.0), NegativeTime);
    bool positive = true;
    for (double k : st.spec.half) {
        for (double tt : {0.0, 0.001, 0.1, 10.0}) {
            const double m = heat_symbol(k, tt, st.s);
            positive = positive && m > 0.0 && m <= 1.0;
        }
    }
    CHECK(positive);
    // large times: tilde heat flattens to the average
    const Field flat = st.calc.tilde_heat(f, 50.0);
    const double avg = pairwise_sum(f) / static_cast<double>(f.size());
    for (double v : flat) CHECK(v == doctest::Approx(avg).epsilon(1e-9).scale(1.0));
}

TEST_CASE("heat equation residual is first order in h") {
    Setup st(0.5);
    const Field f = random_field(st.s.lattice.size(), 8);
    const double t = 0.002;
    const Field pt = st.calc.heat(f, t);
    const Field lap = st.calc.laplacian(pt);
    std::vector<double> hs, errs;
    for (double h = 1e-4; h > 1e-4 / 17.0; h *= 0.5) {
        const Field next = st.calc.heat(f, t + h);
        Field r(f.size());
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = (next[i] - pt[i]) / h - lap[i];
        hs.push_back(std::log(h));
        errs.push_back(std::log(max_abs(r)));
    }
    const LinearFit fit = linear_fit(hs, errs);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("real-space heat kernels") {
    Setup st(0.5);
    const double inv = std::pow(st.s.eps, -3);
    double kmax = 0.0;
    for (double v : st.k.dense) kmax = std::max(kmax, v);
    CHECK(max_abs(st.calc.tilde_heat_kernel(0.0)) == doctest::Approx(inv * kmax).epsilon(1e-10));
    CHECK(mass(st.calc.heat_kernel(0.01), st.s.lattice) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mass(st.calc.tilde_heat_kernel(0.01), st.s.lattice) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kernel bounds report") {
    Setup st(0.5);
    const KernelBoundsReport r = verify_kernel_bounds(st.spec, st.k, st.s, 500);
    CHECK(r.max_abs_khat <= 1.0);
    CHECK(r.c4 > 0.0);
    CHECK(r.pass);
    REQUIRE(r.c2.size() == 3);
    CHECK(std::isfinite(r.c2[2]));
    const HeatSupnormScan scan = heat_supnorm_scan(st.calc, log_spaced(1e-5, 1.0, 12));
    CHECK(std::isfinite(scan.constant));
    CHECK(scan.constant > 0.0);
    for (std::size_t i = 1; i < scan.supnorm.size(); ++i) CHECK(scan.supnorm[i] <= scan.supnorm[i - 1] * (1.0 + 1e-12));
}
