#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace isingkac {

class SupportExceedsLattice : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidProfile : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Coord = std::array<int, 3>;

// Periodic cubic lattice with `side` sites per axis, mesh eps = 2/side.
// Sites are stored row-major with the last axis fastest; coordinates are
// kept in [0, side) and mapped to the centred range on demand.
struct TorusLattice {
    int d = 3;
    int side = 1;

    static TorusLattice from_half_width(int d, int N);

    bool has_half_width() const { return side % 2 == 1; }
    int half_width() const;
    double eps() const { return 2.0 / side; }
    std::size_t size() const;

    // Centred representative of a coordinate or frequency index.
    int centred(int k) const { return k <= side / 2 ? k : k - side; }
    int wrap(int k) const {
        int r = k % side;
        return r < 0 ? r + side : r;
    }

    Coord coords(std::size_t site) const;
    std::size_t index(const Coord& c) const;
    // Site reached from `site` after moving by the (possibly negative) offset.
    std::size_t shifted(std::size_t site, const Coord& offset) const;
    // Centred coordinates of the site in lattice units.
    Coord centred_coords(std::size_t site) const;
    // Macroscopic position eps * centred coordinate.
    std::array<double, 3> position(std::size_t site) const;
};

// gamma-dependent scalings: eps ~ gamma^{4/(4-d)}, alpha = gamma^{2d/(4-d)},
// delta = gamma^{d/(4-d)}; in d = 3 these are N = floor(gamma^-4), gamma^6, gamma^3.
struct ScalingParameters {
    TorusLattice lattice;
    double gamma = 0.5;
    double eps = 0.0;
    double alpha = 0.0;
    double delta = 0.0;
    double mesoscale = 0.0;  // eps / gamma
    double kappa2 = 0.0;     // eps^d / (delta^2 alpha)
    double kappa3 = 0.0;     // eps / gamma^{4/(4-d)}
    bool mini = false;       // lattice size chosen independently of gamma

    static ScalingParameters physical(int d, double gamma);
    static ScalingParameters mini_lattice(int d, double gamma, int side);

    int d() const { return lattice.d; }
    // 2^d, the volume of the torus [-1,1)^d.
    double volume() const;
};

// Radial profile psi on [0,1] scaled to radius r_star, with psi(0) = 0.
struct KacProfile {
    double r_star = 1.0;
    std::function<double(double)> psi;  // argument s = |x| / r_star in [0,1]
    std::string name;

    // psi(s) = s^2 exp(-1/(1-s^2)), r_star calibrated so that the unit-mass
    // kernel has second moment 2d (i.e. 6 in three dimensions).
    static KacProfile calibrated_bump(int d);
    static KacProfile bump_with_radius(double r_star);

    // Continuum value of the unit-mass kernel at distance r (dimension d).
    double continuum_value(double r, int d) const;
    double continuum_mass_unnormalised(int d) const;
    double continuum_second_moment(int d) const;
};

// Offsets along one row of the kernel support: fixed leading coordinates,
// contiguous range along the last axis.
struct KernelRow {
    std::array<int, 2> lead{};   // offsets along the leading axes (unused ones 0)
    int first = 0;               // smallest offset along the last axis
    std::vector<double> values;  // kernel values for first, first+1, ...
};

struct KacKernel {
    TorusLattice lattice;
    double gamma = 0.0;
    double kappa1 = 0.0;
    double support_radius = 0.0;     // r_star / gamma in lattice units
    std::vector<double> dense;       // K_gamma(k) over all sites, k centred at site 0
    std::vector<Coord> offsets;      // support offsets (centred)
    std::vector<double> weights;     // K_gamma at the offsets
    std::vector<KernelRow> rows;

    double at_offset(const Coord& c) const;
    double sum() const;
    double second_moment() const;  // sum_k K(k) |gamma k|^2
};

KacKernel build_kac_kernel(const KacProfile& profile, double gamma, const TorusLattice& lattice,
                           bool enforce_gamma_star = true);

using Field = std::vector<double>;

struct SpinConfiguration {
    TorusLattice lattice;
    std::vector<std::int8_t> spin;
    Field h;  // averaged field, kept in sync with spin
    std::uint64_t flips_since_refresh = 0;

    static SpinConfiguration all_plus(const TorusLattice& lattice, const KacKernel& kernel);
    static SpinConfiguration from_spins(std::vector<std::int8_t> spins, const KacKernel& kernel);

    std::size_t size() const { return spin.size(); }
    void refresh(const KacKernel& kernel);
};

// h(k) = sum_j K(k - j) sigma(j), by direct summation over the kernel support.
Field averaged_field(const std::vector<std::int8_t>& spin, const KacKernel& kernel);

// Adds coef * K(k - j) to f(k) for every k in the support around j.
void add_kernel_at(Field& f, std::size_t j, double coef, const KacKernel& kernel);

// Flip sigma(j) and update h on the support of j.
void update_field_after_flip(SpinConfiguration& config, std::size_t j, const KacKernel& kernel);

double hamiltonian(const SpinConfiguration& config);
double hamiltonian(const std::vector<std::int8_t>& spin, const KacKernel& kernel);

// Little-endian snapshot: "KPL1", u32 d, u32 N, f64 gamma, u32 side,
// u32 payload kind (0 = int8 spins, 1 = f64 values), u64 count, payload.
void write_snapshot(const std::string& path, const TorusLattice& lattice, double gamma,
                    const std::vector<std::int8_t>& spins);
void write_snapshot(const std::string& path, const TorusLattice& lattice, double gamma,
                    const Field& values);

struct Snapshot {
    TorusLattice lattice;
    double gamma = 0.0;
    std::vector<std::int8_t> spins;
    Field values;
};
Snapshot read_snapshot(const std::string& path);

}  // namespace isingkac
