#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "isingkac/numerics.hpp"
#include "isingkac/regstruct.hpp"
#include "isingkac/renorm.hpp"

using namespace isingkac;

namespace {

using S = Symbol;
using P = PlusSymbol;

// hand table: {symbol, constant part, multiple of kappa}
struct HomRow {
    Symbol s;
    double base;
    double k;
};

const std::vector<HomRow>& hom_table() {
    static const std::vector<HomRow> rows{
        {S::One, 0.0, 0.0},   {S::X1, 1.0, 0.0},    {S::X2, 1.0, 0.0},    {S::X3, 1.0, 0.0},
        {S::I1, -0.5, -1.0},  {S::I2, -1.0, -2.0},  {S::I2X1, 0.0, -2.0}, {S::I2X2, 0.0, -2.0},
        {S::I2X3, 0.0, -2.0}, {S::I3, -1.5, -3.0},  {S::I3X1, -0.5, -3.0}, {S::I3X2, -0.5, -3.0},
        {S::I3X3, -0.5, -3.0}, {S::I20, 1.0, -2.0}, {S::I30, 0.5, -3.0},  {S::I22, 0.0, -4.0},
        {S::I31, 0.0, -4.0},  {S::I32, -0.5, -5.0}, {S::I4, -2.0, -4.0},  {S::I5, -2.5, -5.0},
        {S::E40, 0.0, -4.0},  {S::E50, -0.5, -5.0}, {S::Xi, -2.5, -1.0},
    };
    return rows;
}

using Row = std::vector<std::tuple<Symbol, PlusSymbol, double>>;

Row expected_coproduct(Symbol s) {
    switch (s) {
        case S::X1: return {{S::X1, P::One, 1.0}, {S::One, P::X1, 1.0}};
        case S::X2: return {{S::X2, P::One, 1.0}, {S::One, P::X2, 1.0}};
        case S::X3: return {{S::X3, P::One, 1.0}, {S::One, P::X3, 1.0}};
        case S::I2X1: return {{S::I2X1, P::One, 1.0}, {S::I2, P::X1, 1.0}};
        case S::I2X2: return {{S::I2X2, P::One, 1.0}, {S::I2, P::X2, 1.0}};
        case S::I2X3: return {{S::I2X3, P::One, 1.0}, {S::I2, P::X3, 1.0}};
        case S::I3X1: return {{S::I3X1, P::One, 1.0}, {S::I3, P::X1, 1.0}};
        case S::I3X2: return {{S::I3X2, P::One, 1.0}, {S::I3, P::X2, 1.0}};
        case S::I3X3: return {{S::I3X3, P::One, 1.0}, {S::I3, P::X3, 1.0}};
        case S::I20: return {{S::I20, P::One, 1.0}, {S::One, P::I20, 1.0}};
        case S::I30: return {{S::I30, P::One, 1.0}, {S::One, P::I30, 1.0}};
        case S::I22: return {{S::I22, P::One, 1.0}, {S::I2, P::I20, 1.0}};
        case S::I31: return {{S::I31, P::One, 1.0}, {S::I1, P::I30, 1.0}};
        case S::I32: return {{S::I32, P::One, 1.0}, {S::I2, P::I30, 1.0}};
        default: return {{s, P::One, 1.0}};
    }
}

// Table of the structure group action: tau -> tau + coefficient * lower
SymbolVector expected_action(const GroupElement& g, Symbol s) {
    SymbolVector v(s);
    auto add = [&](Symbol t, double c) { v.add(t, c); };
    switch (s) {
        case S::X1: add(S::One, g.a[0]); break;
        case S::X2: add(S::One, g.a[1]); break;
        case S::X3: add(S::One, g.a[2]); break;
        case S::I2X1: add(S::I2, g.a[0]); break;
        case S::I2X2: add(S::I2, g.a[1]); break;
        case S::I2X3: add(S::I2, g.a[2]); break;
        case S::I3X1: add(S::I3, g.a[0]); break;
        case S::I3X2: add(S::I3, g.a[1]); break;
        case S::I3X3: add(S::I3, g.a[2]); break;
        case S::I20: add(S::One, g.b); break;
        case S::I30: add(S::One, g.c); break;
        case S::I22: add(S::I2, g.b); break;
        case S::I31: add(S::I1, g.c); break;
        case S::I32: add(S::I2, g.c); break;
        default: break;
    }
    return v;
}

GroupElement random_group(Rng& rng) {
    return {{rng.normal(), rng.normal(), rng.normal()}, rng.normal(), rng.normal()};
}

double max_gap(const SymbolVector& a, const SymbolVector& b) {
    double m = 0.0;
    for (Symbol s : all_symbols()) m = std::max(m, std::abs(a[s] - b[s]));
    return m;
}

struct Lift {
    ScalingParameters s = ScalingParameters::mini_lattice(3, 0.95, 9);
    KacKernel k = build_kac_kernel(KacProfile::calibrated_bump(3), 0.95, s.lattice, false);
    SpectralKernel spec = kernel_spectrum(k);
    SpectralCalculus calc{s, spec};
    LiftConfig config;
    LiftConstants constants;
    Trajectory traj, ext;

    Lift() {
        config.cutoff = 0.5;
        config.substeps = 8;
        config.times = {0.5, 0.75};
        constants.c = c_gamma(spec, s, config.cutoff);
        constants.c_prime = -1e-3;
        constants.c_double_prime = c_double_prime(spec, s, config.cutoff).value;
        Rng rng(5);
        std::vector<std::int8_t> spins(s.lattice.size());
        for (auto& v : spins) v = rng.uniform() < 0.5 ? 1 : -1;
        const SpinConfiguration c0 = SpinConfiguration::from_spins(spins, k);
        traj = simulate(c0, k, {RateVariant::Glauber, 1.0}, 0.75, s.alpha, 11);
        ext = simulate(c0, k, {RateVariant::Glauber, 1.0}, 0.5, s.alpha, 12);
    }
    PiHatCache build() const { return lift_pi_hat(traj, ext, k, calc, config, constants); }
};

}  // namespace

TEST_CASE("basis and names") {
    CHECK(all_symbols().size() == kSymbolCount);
    CHECK(all_symbols().back() == S::Xi);
    CHECK(model_symbols().size() == kSymbolCount - 1);
    for (Symbol s : all_symbols()) {
        CHECK(symbol_from_name(symbol_name(s)) == s);
        CHECK(symbol_of(tree_of(s)) == s);
    }
    CHECK_FALSE(symbol_from_name("nonsense").has_value());
    CHECK(tree_of(S::I22) == product(planted(tree_of(S::I2)), tree_of(S::I2)));
    CHECK(tree_of(S::I31) == product(tree_of(S::I1), tree_of(S::I30)));
    CHECK(tree_of(S::E40) == error_tree(tree_of(S::I4)));
    CHECK(tree_of(S::I2X3) == product(monomial(2), tree_of(S::I2)));
    CHECK_FALSE(symbol_of(product(tree_of(S::I5), tree_of(S::I1))).has_value());
}

TEST_CASE("homogeneity tables for random kappa") {
    Rng rng(2024);
    CHECK(homogeneity(S::I1, 0.05) == doctest::Approx(-0.55));
    CHECK(homogeneity(S::One, 0.05) == 0.0);
    CHECK(homogeneity(S::E50, 0.05) == doctest::Approx(-0.75));
    for (int trial = 0; trial < 50; ++trial) {
        const double kappa = rng.uniform() / 14.0;
        if (kappa == 0.0) continue;
        for (const HomRow& r : hom_table()) {
            CHECK(homogeneity(r.s, kappa) == doctest::Approx(r.base + r.k * kappa).epsilon(1e-14).scale(1.0));
        }
        CHECK(homogeneity(P::I20, kappa) == doctest::Approx(1.0 - 2.0 * kappa));
        CHECK(homogeneity(P::I30, kappa) == doctest::Approx(0.5 - 3.0 * kappa));
        CHECK(homogeneity(P::X2, kappa) == 1.0);
    }
    CHECK_THROWS_AS(check_kappa(0.0), std::invalid_argument);
    CHECK_THROWS_AS(check_kappa(1.0 / 14.0), std::invalid_argument);
    CHECK_THROWS_AS(homogeneity(S::I1, 0.2), std::invalid_argument);
}

TEST_CASE("coproduct tables") {
    for (Symbol s : all_symbols()) {
        const Row want = expected_coproduct(s);
        const auto got = coproduct(s);
        REQUIRE(got.size() == want.size());
        for (const auto& [l, r, c] : want) {
            bool found = false;
            for (const CoproductTerm& t : got) found = found || (t.left == l && t.right == r && t.coefficient == c);
            CHECK_MESSAGE(found, symbol_name(s) << " missing " << symbol_name(l) << " x " << plus_name(r));
        }
    }
}

TEST_CASE("structure group action") {
    const GroupElement id{};
    for (Symbol s : all_symbols()) CHECK(max_gap(group_act(id, s), SymbolVector(s)) == 0.0);
    GroupElement g;
    g.b = 2.0;
    const SymbolVector v = group_act(g, S::I22);
    CHECK(v[S::I22] == 1.0);
    CHECK(v[S::I2] == 2.0);
    g = {};
    g.c = 0.7;
    CHECK(group_act(g, S::I32)[S::I2] == 0.7);

    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const double kappa = std::max(1e-6, rng.uniform() / 14.0);
        const GroupElement g1 = random_group(rng), g2 = random_group(rng);
        for (Symbol s : all_symbols()) {
            CHECK(max_gap(group_act(g1, s), expected_action(g1, s)) < 1e-15);
            CHECK(max_gap(group_act(g1, group_act(g2, s)), group_act(g1 + g2, s)) < 1e-12);
            CHECK(max_gap(group_act(g1.inverse(), group_act(g1, s)), SymbolVector(s)) < 1e-12);
            const SymbolVector diff = group_act(g1, s) - SymbolVector(s);
            CHECK(diff.project_from(homogeneity(s, kappa), kappa).empty(1e-14));
        }
    }
}

TEST_CASE("projections and norms") {
    const double kappa = 0.03;
    SymbolVector v;
    for (Symbol s : all_symbols()) v.add(s, 1.0 + static_cast<int>(s));
    for (double a : {-2.0, -0.5 - kappa, 0.0, 1.0}) {
        const SymbolVector below = v.project_below(a, kappa);
        CHECK(max_gap(below.project_below(a, kappa), below) == 0.0);
        const SymbolVector upto = v.project_upto(a, kappa);
        CHECK(max_gap(upto.project_upto(a, kappa), upto) == 0.0);
        SymbolVector sum = below;
        sum += v.project_from(a, kappa);
        CHECK(max_gap(sum, v) == 0.0);
    }
    CHECK(v.norm(-4.0 * kappa, kappa) ==
          doctest::Approx(v[S::I22] + v[S::I31] + v[S::E40]));
    CHECK(v.norm(1.0, kappa) == doctest::Approx(v[S::X1] + v[S::X2] + v[S::X3]));
}

TEST_CASE("hermite polynomials") {
    for (double u : {-1.7, 0.0, 0.3, 2.0}) {
        for (double c : {0.0, 0.4, 1.0}) {
            CHECK(hermite(1, u, c) == u);
            CHECK(hermite(2, u, c) == doctest::Approx(u * u - c));
            CHECK(hermite(3, u, c) == doctest::Approx(u * u * u - 3.0 * c * u).scale(1.0));
            CHECK(hermite(4, u, c) == doctest::Approx(std::pow(u, 4) - 6.0 * c * u * u + 3.0 * c * c).scale(1.0));
            CHECK(hermite(5, u, c) ==
                  doctest::Approx(std::pow(u, 5) - 10.0 * c * std::pow(u, 3) + 15.0 * c * c * u).scale(1.0));
        }
    }
    CHECK(hermite(3, 2.0, 1.0) == 2.0);
    CHECK_THROWS_AS(hermite(6, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(hermite(0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("lift identities") {
    const Lift lift;
    const PiHatCache cache = lift.build();
    REQUIRE(cache.time_count() == 2);
    const double c = lift.constants.c, cp = lift.constants.c_prime, cpp = lift.constants.c_double_prime;
    double worst = 0.0, spread = 0.0;
    for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t x = 0; x < cache.site_count(); ++x) {
            const double u = cache.value(S::I1, t, x);
            spread = std::max(spread, std::abs(u));
            auto rel = [&](double lhs, double rhs) {
                worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
            };
            CHECK(cache.value(S::One, t, x) == 1.0);
            CHECK(cache.value(S::X2, t, x) == lift.s.lattice.position(x)[1]);
            rel(cache.value(S::I2, t, x) + c + cp, u * u);
            rel(cache.value(S::I3, t, x) + 3.0 * c * u, u * u * u);
            rel(cache.value(S::I4, t, x) + 6.0 * c * u * u - 3.0 * c * c, u * u * u * u);
            rel(cache.value(S::I5, t, x) + 10.0 * c * u * u * u - 15.0 * c * c * u, u * u * u * u * u);
            rel(cache.value(S::E40, t, x), lift.s.alpha * cache.value(S::I4, t, x));
            rel(cache.value(S::I22, t, x) + cpp, cache.value(S::I20, t, x) * cache.value(S::I2, t, x));
            rel(cache.value(S::I32, t, x) + 3.0 * cpp * u, cache.value(S::I30, t, x) * cache.value(S::I2, t, x));
            rel(cache.value(S::I3X1, t, x), cache.value(S::I3, t, x) * lift.s.lattice.position(x)[0]);
        }
    }
    CHECK(worst < 1e-12);
    CHECK(spread > 0.0);
    CHECK_THROWS_AS(cache.field(S::Xi, 0), std::invalid_argument);
}

TEST_CASE("lift input validation") {
    Lift lift;
    LiftConfig off = lift.config;
    off.times = {0.5, 0.53};
    CHECK_THROWS_AS(lift_pi_hat(lift.traj, lift.ext, lift.k, lift.calc, off, lift.constants), std::invalid_argument);
    LiftConfig late = lift.config;
    late.times = {1.0};
    CHECK_THROWS_AS(lift_pi_hat(lift.traj, lift.ext, lift.k, lift.calc, late, lift.constants), WindowTooShort);
    const Trajectory short_ext = simulate(SpinConfiguration::from_spins(lift.ext.initial, lift.k), lift.k,
                                          {RateVariant::Glauber, 1.0}, 0.1, lift.s.alpha, 3);
    CHECK_THROWS_AS(lift_pi_hat(lift.traj, short_ext, lift.k, lift.calc, lift.config, lift.constants),
                    WindowTooShort);
}

TEST_CASE("model consistency") {
    const Lift lift;
    const PiHatCache cache = lift.build();
    const NumericModel model(cache);
    const auto base = base_point_grid(cache, 3);
    CHECK(base.size() == 27u * cache.time_count());
    const BasePoint z = base[4];
    const GroupElement gzz = model.gamma(z, z);
    CHECK(std::abs(gzz.a[0]) + std::abs(gzz.a[1]) + std::abs(gzz.a[2]) + std::abs(gzz.b) + std::abs(gzz.c) == 0.0);
    CHECK(model.pi(z, S::I20, z) == 0.0);
    CHECK(model.pi(z, S::I30, z) == 0.0);
    std::vector<BasePoint> points;
    for (std::size_t t = 0; t < cache.time_count(); ++t) {
        for (std::size_t x = 0; x < cache.site_count(); x += 7) points.push_back({t, x});
    }
    const ModelCheck mc = check_model(model, base, points);
    CHECK(mc.comparisons > 0u);
    CHECK(mc.max_relative < 1e-8);
    CHECK(mc.gamma_identity == 0.0);
    CHECK(mc.recentering == 0.0);
    CHECK(mc.chain < 1e-12);
    CHECK(mc.group_law < 1e-12);

    const auto rows = model_bound_constants(model, base, points, 0.05);
    CHECK(rows.size() == model_symbols().size());
    for (const auto& r : rows) CHECK(std::isfinite(r.constant));
}

TEST_CASE("pi-hat snapshot") {
    const Lift lift;
    const PiHatCache cache = lift.build();
    const auto path = (std::filesystem::temp_directory_path() / "isingkac_pihat_test.kpl").string();
    write_pi_hat_snapshot(path, cache, S::I2, 1);
    const Snapshot r = read_snapshot(path);
    CHECK(r.values == cache.field(S::I2, 1));
    std::filesystem::remove(path);
}
