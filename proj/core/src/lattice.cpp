#include "isingkac/lattice.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "isingkac/binary_io.hpp"

namespace isingkac {

TorusLattice TorusLattice::from_half_width(int d, int N) {
    if (d < 1 || d > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
    if (N < 1) throw std::invalid_argument("half-width must be at least 1");
    return TorusLattice{d, 2 * N + 1};
}

int TorusLattice::half_width() const {
    if (!has_half_width()) throw std::logic_error("even side length has no half-width");
    return side / 2;
}

std::size_t TorusLattice::size() const {
    std::size_t m = 1;
    for (int i = 0; i < d; ++i) m *= static_cast<std::size_t>(side);
    return m;
}

Coord TorusLattice::coords(std::size_t site) const {
    Coord c{0, 0, 0};
    for (int i = d - 1; i >= 0; --i) {
        c[i] = static_cast<int>(site % side);
        site /= side;
    }
    return c;
}

std::size_t TorusLattice::index(const Coord& c) const {
    std::size_t s = 0;
    for (int i = 0; i < d; ++i) s = s * side + static_cast<std::size_t>(wrap(c[i]));
    return s;
}

std::size_t TorusLattice::shifted(std::size_t site, const Coord& offset) const {
    Coord c = coords(site);
    for (int i = 0; i < d; ++i) c[i] += offset[i];
    return index(c);
}

Coord TorusLattice::centred_coords(std::size_t site) const {
    Coord c = coords(site);
    for (int i = 0; i < d; ++i) c[i] = centred(c[i]);
    return c;
}

std::array<double, 3> TorusLattice::position(std::size_t site) const {
    const Coord c = centred_coords(site);
    return {eps() * c[0], eps() * c[1], eps() * c[2]};
}

namespace {

double floor_power(double gamma, double exponent) {
    // guard against pow() landing just below an exact integer
    const double v = std::pow(gamma, exponent);
    return std::floor(v * (1.0 + 1e-12));
}

}  // namespace

ScalingParameters ScalingParameters::physical(int d, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    if (d < 1 || d > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
    const double q = 4.0 - d;
    const int N = static_cast<int>(floor_power(gamma, -4.0 / q));
    ScalingParameters s = mini_lattice(d, gamma, 2 * N + 1);
    s.mini = false;
    return s;
}

ScalingParameters ScalingParameters::mini_lattice(int d, double gamma, int side) {
    if (d < 1 || d > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
    if (side < 2) throw std::invalid_argument("side length must be at least 2");
    ScalingParameters s;
    s.lattice = TorusLattice{d, side};
    s.gamma = gamma;
    const double q = 4.0 - d;
    s.eps = s.lattice.eps();
    s.alpha = std::pow(gamma, 2.0 * d / q);
    s.delta = std::pow(gamma, d / q);
    s.mesoscale = s.eps / gamma;
    s.kappa2 = std::pow(s.eps, d) / (s.delta * s.delta * s.alpha);
    s.kappa3 = s.eps / std::pow(gamma, 4.0 / q);
    s.mini = true;
    return s;
}

double ScalingParameters::volume() const { return std::ldexp(1.0, lattice.d); }

namespace {

double sphere_area(int d) {
    switch (d) {
        case 1: return 2.0;
        case 2: return 2.0 * std::numbers::pi;
        default: return 4.0 * std::numbers::pi;
    }
}

double bump(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return s * s * std::exp(-1.0 / (1.0 - s * s));
}

double radial_moment(const std::function<double(double)>& psi, int power) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate([&](double s) { return psi(s) * std::pow(s, power); }, 0.0, 1.0,
                                1e-13);
}

}  // namespace

KacProfile KacProfile::bump_with_radius(double r_star) {
    if (!(r_star > 0.0)) throw InvalidProfile("r_star must be positive");
    return KacProfile{r_star, bump, "bump"};
}

KacProfile KacProfile::calibrated_bump(int d) {
    // second moment of the unit-mass kernel is r^2 * int psi s^(d+1) / int psi s^(d-1)
    const double m_low = radial_moment(bump, d - 1);
    const double m_high = radial_moment(bump, d + 1);
    const double r = std::sqrt(2.0 * d * m_low / m_high);
    return KacProfile{r, bump, "bump"};
}

double KacProfile::continuum_mass_unnormalised(int d) const {
    return sphere_area(d) * std::pow(r_star, d) * radial_moment(psi, d - 1);
}

double KacProfile::continuum_value(double r, int d) const {
    const double s = r / r_star;
    if (s >= 1.0) return 0.0;
    return psi(s) / continuum_mass_unnormalised(d);
}

double KacProfile::continuum_second_moment(int d) const {
    const double num = sphere_area(d) * std::pow(r_star, d + 2) * radial_moment(psi, d + 1);
    return num / continuum_mass_unnormalised(d);
}

double KacKernel::at_offset(const Coord& c) const { return dense[lattice.index(c)]; }

double KacKernel::sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

double KacKernel::second_moment() const {
    double s = 0.0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        double r2 = 0.0;
        for (int a = 0; a < lattice.d; ++a) r2 += std::pow(gamma * offsets[i][a], 2);
        s += weights[i] * r2;
    }
    return s;
}

KacKernel build_kac_kernel(const KacProfile& profile, double gamma, const TorusLattice& lattice,
                           bool enforce_gamma_star) {
    if (!profile.psi) throw InvalidProfile("profile function missing");
    if (profile.psi(0.0) != 0.0) throw InvalidProfile("profile must vanish at the origin");
    for (int i = 0; i <= 1000; ++i) {
        if (profile.psi(i / 1000.0) < 0.0) throw InvalidProfile("profile must be nonnegative");
    }
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    const int d = lattice.d;
    if (enforce_gamma_star && d == 3 && !(gamma < std::pow(profile.r_star, -1.0 / 3.0))) {
        throw std::invalid_argument("gamma must be below r_star^(-1/3)");
    }
    const double radius = profile.r_star / gamma;
    const bool fits = lattice.has_half_width() ? radius <= lattice.half_width()
                                               : radius < lattice.side / 2.0;
    if (!fits) throw SupportExceedsLattice("kernel support radius exceeds the lattice half-width");

    KacKernel k;
    k.lattice = lattice;
    k.gamma = gamma;
    k.support_radius = radius;
    k.dense.assign(lattice.size(), 0.0);
    const int R = static_cast<int>(std::ceil(radius));
    std::map<std::array<int, 2>, std::vector<std::pair<int, double>>> by_row;
    double total = 0.0;
    Coord c{0, 0, 0};
    const int r0 = d >= 3 ? R : 0;
    const int r1 = d >= 2 ? R : 0;
    for (c[0] = -r0; c[0] <= r0; ++c[0]) {
        for (c[1] = -r1; c[1] <= r1; ++c[1]) {
            for (c[2] = -R; c[2] <= R; ++c[2]) {
                const double r = gamma * std::sqrt(double(c[0]) * c[0] + double(c[1]) * c[1] +
                                                   double(c[2]) * c[2]);
                const double w = r < profile.r_star ? profile.psi(r / profile.r_star) : 0.0;
                if (w <= 0.0) continue;
                Coord off{0, 0, 0};
                // map the loop variables onto the first d axes
                if (d == 1) off = {c[2], 0, 0};
                if (d == 2) off = {c[1], c[2], 0};
                if (d == 3) off = c;
                k.offsets.push_back(off);
                k.weights.push_back(w);
                by_row[{c[0], c[1]}].push_back({c[2], w});
                total += w;
            }
        }
    }
    if (total <= 0.0) throw InvalidProfile("kernel support contains no lattice sites");
    const double unit = profile.continuum_mass_unnormalised(d);
    k.kappa1 = unit / (std::pow(gamma, d) * total);
    for (double& w : k.weights) w /= total;
    for (std::size_t i = 0; i < k.offsets.size(); ++i) k.dense[lattice.index(k.offsets[i])] = k.weights[i];
    for (auto& [lead, entries] : by_row) {
        KernelRow row;
        row.lead = d == 3 ? lead : std::array<int, 2>{d == 2 ? lead[1] : 0, 0};
        row.first = entries.front().first;
        const int last = entries.back().first;
        row.values.assign(static_cast<std::size_t>(last - row.first + 1), 0.0);
        for (auto [z, w] : entries) row.values[static_cast<std::size_t>(z - row.first)] = w / total;
        k.rows.push_back(std::move(row));
    }
    return k;
}

void add_kernel_at(Field& f, std::size_t j, double coef, const KacKernel& kernel) {
    const TorusLattice& L = kernel.lattice;
    const int side = L.side;
    const Coord jc = L.coords(j);
    const int last_axis = L.d - 1;
    for (const KernelRow& row : kernel.rows) {
        std::size_t base = 0;
        if (L.d == 3) {
            base = (static_cast<std::size_t>(L.wrap(jc[0] + row.lead[0])) * side +
                    static_cast<std::size_t>(L.wrap(jc[1] + row.lead[1]))) *
                   side;
        } else if (L.d == 2) {
            base = static_cast<std::size_t>(L.wrap(jc[0] + row.lead[0])) * side;
        }
        const int len = static_cast<int>(row.values.size());
        int start = L.wrap(jc[last_axis] + row.first);
        const double* v = row.values.data();
        double* out = f.data() + base;
        const int first_len = std::min(len, side - start);
        for (int i = 0; i < first_len; ++i) out[start + i] += coef * v[i];
        for (int i = first_len; i < len; ++i) out[i - first_len] += coef * v[i];
    }
}

Field averaged_field(const std::vector<std::int8_t>& spin, const KacKernel& kernel) {
    Field h(spin.size(), 0.0);
    for (std::size_t j = 0; j < spin.size(); ++j) add_kernel_at(h, j, spin[j], kernel);
    return h;
}

SpinConfiguration SpinConfiguration::all_plus(const TorusLattice& lattice, const KacKernel& kernel) {
    return from_spins(std::vector<std::int8_t>(lattice.size(), 1), kernel);
}

SpinConfiguration SpinConfiguration::from_spins(std::vector<std::int8_t> spins,
                                                const KacKernel& kernel) {
    if (spins.size() != kernel.lattice.size()) throw std::invalid_argument("shape mismatch");
    for (auto s : spins) {
        if (s != 1 && s != -1) throw std::invalid_argument("spins must be +1 or -1");
    }
    SpinConfiguration c;
    c.lattice = kernel.lattice;
    c.spin = std::move(spins);
    c.h = averaged_field(c.spin, kernel);
    return c;
}

void SpinConfiguration::refresh(const KacKernel& kernel) {
    h = averaged_field(spin, kernel);
    flips_since_refresh = 0;
}

void update_field_after_flip(SpinConfiguration& config, std::size_t j, const KacKernel& kernel) {
    const double old = config.spin[j];
    config.spin[j] = static_cast<std::int8_t>(-config.spin[j]);
    add_kernel_at(config.h, j, -2.0 * old, kernel);
    if (++config.flips_since_refresh >= 1000000) config.refresh(kernel);
}

double hamiltonian(const SpinConfiguration& config) {
    double e = 0.0;
    for (std::size_t k = 0; k < config.spin.size(); ++k) e += config.spin[k] * config.h[k];
    return -0.5 * e;
}

double hamiltonian(const std::vector<std::int8_t>& spin, const KacKernel& kernel) {
    const Field h = averaged_field(spin, kernel);
    double e = 0.0;
    for (std::size_t k = 0; k < spin.size(); ++k) e += spin[k] * h[k];
    return -0.5 * e;
}

namespace {

void write_header(BinaryWriter& w, const TorusLattice& lattice, double gamma, std::uint32_t kind,
                  std::uint64_t count) {
    w.magic("KPL1");
    w.u32(static_cast<std::uint32_t>(lattice.d));
    w.u32(static_cast<std::uint32_t>(lattice.side / 2));
    w.f64(gamma);
    w.u32(static_cast<std::uint32_t>(lattice.side));
    w.u32(kind);
    w.u64(count);
}

}  // namespace

void write_snapshot(const std::string& path, const TorusLattice& lattice, double gamma,
                    const std::vector<std::int8_t>& spins) {
    BinaryWriter w(path);
    write_header(w, lattice, gamma, 0, spins.size());
    for (auto s : spins) w.i8(s);
    w.commit();
}

void write_snapshot(const std::string& path, const TorusLattice& lattice, double gamma,
                    const Field& values) {
    BinaryWriter w(path);
    write_header(w, lattice, gamma, 1, values.size());
    for (double v : values) w.f64(v);
    w.commit();
}

Snapshot read_snapshot(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("KPL1");
    Snapshot s;
    s.lattice.d = static_cast<int>(r.u32());
    r.u32();  // half-width, implied by the side length
    s.gamma = r.f64();
    s.lattice.side = static_cast<int>(r.u32());
    const std::uint32_t kind = r.u32();
    const std::uint64_t count = r.u64();
    if (count != s.lattice.size()) throw std::runtime_error("snapshot payload size mismatch");
    if (kind == 0) {
        s.spins.resize(count);
        for (auto& v : s.spins) v = r.i8();
    } else if (kind == 1) {
        s.values.resize(count);
        for (auto& v : s.values) v = r.f64();
    } else {
        throw std::runtime_error("unknown snapshot payload kind");
    }
    return s;
}

}  // namespace isingkac
