#include "isingkac/regstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace isingkac {

namespace {

// Any kappa in (0, 1/14) gives the same signs of homogeneities.
constexpr double kReferenceKappa = 1.0 / 28.0;

const std::array<const char*, kSymbolCount> kNames = {
    "1",     "X1",    "X2",    "X3",   "<1>",  "<2>",  "<2>X1", "<2>X2",
    "<2>X3", "<3>",   "<3>X1", "<3>X2", "<3>X3", "<20>", "<30>",  "<22>",
    "<31>",  "<32>",  "<4>",   "<5>",  "<40E>", "<50E>", "Xi"};

std::size_t idx(Symbol s) { return static_cast<std::size_t>(s); }

}  // namespace

const std::array<Symbol, kSymbolCount>& all_symbols() {
    static const std::array<Symbol, kSymbolCount> all = [] {
        std::array<Symbol, kSymbolCount> a{};
        for (std::size_t i = 0; i < kSymbolCount; ++i) a[i] = static_cast<Symbol>(i);
        return a;
    }();
    return all;
}

std::vector<Symbol> model_symbols() {
    std::vector<Symbol> out;
    for (Symbol s : all_symbols()) {
        if (s != Symbol::Xi) out.push_back(s);
    }
    return out;
}

std::string symbol_name(Symbol s) { return kNames[idx(s)]; }

std::optional<Symbol> symbol_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kSymbolCount; ++i) {
        if (name == kNames[i]) return static_cast<Symbol>(i);
    }
    return std::nullopt;
}

std::string plus_name(PlusSymbol p) {
    switch (p) {
        case PlusSymbol::One: return "1";
        case PlusSymbol::X1: return "X1";
        case PlusSymbol::X2: return "X2";
        case PlusSymbol::X3: return "X3";
        case PlusSymbol::I20: return "<20>";
        case PlusSymbol::I30: return "<30>";
    }
    return "?";
}

bool operator==(const Tree& a, const Tree& b) {
    return a.noise == b.noise && a.poly == b.poly && a.planted == b.planted && a.errors == b.errors;
}

bool operator<(const Tree& a, const Tree& b) {
    if (a.noise != b.noise) return a.noise < b.noise;
    if (a.poly != b.poly) return a.poly < b.poly;
    if (!(a.planted == b.planted)) return a.planted < b.planted;
    return a.errors < b.errors;
}

Tree noise_tree() {
    Tree t;
    t.noise = 1;
    return t;
}

Tree monomial(int axis) {
    if (axis < 0 || axis > 2) throw std::out_of_range("monomial axis");
    Tree t;
    t.poly[axis] = 1;
    return t;
}

Tree planted(const Tree& child) {
    Tree t;
    t.planted.push_back(child);
    return t;
}

Tree error_tree(const Tree& child) {
    Tree t;
    t.errors.push_back(child);
    return t;
}

Tree product(const Tree& a, const Tree& b) {
    Tree t;
    t.noise = a.noise + b.noise;
    for (int i = 0; i < 3; ++i) t.poly[i] = a.poly[i] + b.poly[i];
    t.planted = a.planted;
    t.planted.insert(t.planted.end(), b.planted.begin(), b.planted.end());
    std::sort(t.planted.begin(), t.planted.end());
    t.errors = a.errors;
    t.errors.insert(t.errors.end(), b.errors.begin(), b.errors.end());
    std::sort(t.errors.begin(), t.errors.end());
    return t;
}

namespace {

Tree build_tree(Symbol s) {
    const Tree one;
    const Tree i1 = planted(noise_tree());
    const Tree i2 = product(i1, i1);
    const Tree i3 = product(i2, i1);
    const Tree i4 = product(i3, i1);
    const Tree i5 = product(i4, i1);
    const Tree i20 = planted(i2);
    const Tree i30 = planted(i3);
    switch (s) {
        case Symbol::One: return one;
        case Symbol::X1: return monomial(0);
        case Symbol::X2: return monomial(1);
        case Symbol::X3: return monomial(2);
        case Symbol::I1: return i1;
        case Symbol::I2: return i2;
        case Symbol::I2X1: return product(i2, monomial(0));
        case Symbol::I2X2: return product(i2, monomial(1));
        case Symbol::I2X3: return product(i2, monomial(2));
        case Symbol::I3: return i3;
        case Symbol::I3X1: return product(i3, monomial(0));
        case Symbol::I3X2: return product(i3, monomial(1));
        case Symbol::I3X3: return product(i3, monomial(2));
        case Symbol::I20: return i20;
        case Symbol::I30: return i30;
        case Symbol::I22: return product(i20, i2);
        case Symbol::I31: return product(i30, i1);
        case Symbol::I32: return product(i30, i2);
        case Symbol::I4: return i4;
        case Symbol::I5: return i5;
        case Symbol::E40: return error_tree(i4);
        case Symbol::E50: return error_tree(i5);
        case Symbol::Xi: return noise_tree();
    }
    throw std::logic_error("unknown symbol");
}

const std::array<Tree, kSymbolCount>& symbol_trees() {
    static const std::array<Tree, kSymbolCount> trees = [] {
        std::array<Tree, kSymbolCount> t;
        for (Symbol s : all_symbols()) t[idx(s)] = build_tree(s);
        return t;
    }();
    return trees;
}

const std::array<Tree, kPlusCount>& plus_trees() {
    static const std::array<Tree, kPlusCount> trees = {
        Tree{}, monomial(0), monomial(1), monomial(2), build_tree(Symbol::I20), build_tree(Symbol::I30)};
    return trees;
}

using TermMap = std::map<std::pair<Tree, Tree>, double>;

TermMap multiply(const TermMap& x, const TermMap& y) {
    TermMap out;
    for (const auto& [p, c] : x) {
        for (const auto& [q, d] : y) {
            out[{product(p.first, q.first), product(p.second, q.second)}] += c * d;
        }
    }
    return out;
}

TermMap delta(const Tree& t) {
    TermMap result{{{Tree{}, Tree{}}, 1.0}};
    for (int i = 0; i < t.noise; ++i) result = multiply(result, {{{noise_tree(), Tree{}}, 1.0}});
    for (int a = 0; a < 3; ++a) {
        for (int k = 0; k < t.poly[a]; ++k) {
            result = multiply(result, {{{monomial(a), Tree{}}, 1.0}, {{Tree{}, monomial(a)}, 1.0}});
        }
    }
    for (const Tree& child : t.planted) {
        TermMap factor;
        for (const auto& [p, c] : delta(child)) {
            if (!p.first.is_polynomial()) factor[{planted(p.first), p.second}] += c;
        }
        const Tree whole = planted(child);
        if (homogeneity(whole, kReferenceKappa) > 0.0) factor[{Tree{}, whole}] += 1.0;
        result = multiply(result, factor);
    }
    for (const Tree& child : t.errors) {
        TermMap factor;
        for (const auto& [p, c] : delta(child)) {
            if (!p.first.is_polynomial()) factor[{error_tree(p.first), p.second}] += c;
        }
        result = multiply(result, factor);
    }
    return result;
}

}  // namespace

Tree tree_of(Symbol s) { return symbol_trees()[idx(s)]; }

std::optional<Symbol> symbol_of(const Tree& t) {
    const auto& trees = symbol_trees();
    for (std::size_t i = 0; i < kSymbolCount; ++i) {
        if (trees[i] == t) return static_cast<Symbol>(i);
    }
    return std::nullopt;
}

std::optional<PlusSymbol> plus_of(const Tree& t) {
    const auto& trees = plus_trees();
    for (std::size_t i = 0; i < kPlusCount; ++i) {
        if (trees[i] == t) return static_cast<PlusSymbol>(i);
    }
    return std::nullopt;
}

void check_kappa(double kappa) {
    if (!(kappa > 0.0 && kappa < 1.0 / 14.0)) throw std::invalid_argument("kappa must lie in (0, 1/14)");
}

double homogeneity(const Tree& t, double kappa) {
    double h = t.noise * (-2.5 - kappa);
    for (int a = 0; a < 3; ++a) h += t.poly[a];
    for (const Tree& c : t.planted) h += homogeneity(c, kappa) + 2.0;
    for (const Tree& c : t.errors) h += homogeneity(c, kappa) + 2.0;
    return h;
}

double homogeneity(Symbol s, double kappa) {
    check_kappa(kappa);
    return homogeneity(tree_of(s), kappa);
}

double homogeneity(PlusSymbol p, double kappa) {
    check_kappa(kappa);
    return homogeneity(plus_trees()[static_cast<std::size_t>(p)], kappa);
}

std::vector<CoproductTerm> coproduct(Symbol s) {
    static const std::array<std::vector<CoproductTerm>, kSymbolCount> table = [] {
        std::array<std::vector<CoproductTerm>, kSymbolCount> out;
        for (Symbol sym : all_symbols()) {
            for (const auto& [p, c] : delta(tree_of(sym))) {
                if (c == 0.0) continue;
                const auto left = symbol_of(p.first);
                const auto right = plus_of(p.second);
                if (!left || !right) throw std::logic_error("coproduct leaves the truncated basis");
                out[idx(sym)].push_back({*left, *right, c});
            }
            // main term first
            std::stable_sort(out[idx(sym)].begin(), out[idx(sym)].end(),
                             [](const CoproductTerm& a, const CoproductTerm& b) {
                                 return static_cast<int>(a.right) < static_cast<int>(b.right);
                             });
        }
        return out;
    }();
    return table[idx(s)];
}

double GroupElement::value(PlusSymbol p) const {
    switch (p) {
        case PlusSymbol::One: return 1.0;
        case PlusSymbol::X1: return a[0];
        case PlusSymbol::X2: return a[1];
        case PlusSymbol::X3: return a[2];
        case PlusSymbol::I20: return b;
        case PlusSymbol::I30: return c;
    }
    return 0.0;
}

GroupElement GroupElement::operator+(const GroupElement& o) const {
    return {{a[0] + o.a[0], a[1] + o.a[1], a[2] + o.a[2]}, b + o.b, c + o.c};
}

GroupElement GroupElement::operator-(const GroupElement& o) const { return *this + o.inverse(); }

GroupElement GroupElement::inverse() const { return {{-a[0], -a[1], -a[2]}, -b, -c}; }

double SymbolVector::operator[](Symbol s) const {
    auto it = coefficients.find(s);
    return it == coefficients.end() ? 0.0 : it->second;
}

void SymbolVector::add(Symbol s, double c) { coefficients[s] += c; }

SymbolVector& SymbolVector::operator+=(const SymbolVector& o) {
    for (const auto& [s, c] : o.coefficients) coefficients[s] += c;
    return *this;
}

SymbolVector SymbolVector::operator-(const SymbolVector& o) const {
    SymbolVector out = *this;
    for (const auto& [s, c] : o.coefficients) out.coefficients[s] -= c;
    return out;
}

SymbolVector SymbolVector::operator*(double c) const {
    SymbolVector out = *this;
    for (auto& [s, v] : out.coefficients) v *= c;
    return out;
}

bool SymbolVector::empty(double tolerance) const {
    for (const auto& [s, c] : coefficients) {
        if (std::abs(c) > tolerance) return false;
    }
    return true;
}

namespace {

template <class Keep>
SymbolVector filter(const SymbolVector& v, double kappa, Keep&& keep) {
    SymbolVector out;
    for (const auto& [s, c] : v.coefficients) {
        if (keep(homogeneity(s, kappa))) out.coefficients[s] = c;
    }
    return out;
}

constexpr double kHomTolerance = 1e-12;

}  // namespace

SymbolVector SymbolVector::project_below(double alpha, double kappa) const {
    return filter(*this, kappa, [&](double h) { return h < alpha - kHomTolerance; });
}

SymbolVector SymbolVector::project_upto(double alpha, double kappa) const {
    return filter(*this, kappa, [&](double h) { return h <= alpha + kHomTolerance; });
}

SymbolVector SymbolVector::project_from(double alpha, double kappa) const {
    return filter(*this, kappa, [&](double h) { return h >= alpha - kHomTolerance; });
}

double SymbolVector::norm(double alpha, double kappa) const {
    double n = 0.0;
    for (const auto& [s, c] : coefficients) {
        if (std::abs(homogeneity(s, kappa) - alpha) <= kHomTolerance) n += std::abs(c);
    }
    return n;
}

SymbolVector group_act(const GroupElement& g, Symbol s) {
    SymbolVector out;
    for (const CoproductTerm& t : coproduct(s)) out.add(t.left, t.coefficient * g.value(t.right));
    return out;
}

SymbolVector group_act(const GroupElement& g, const SymbolVector& v) {
    SymbolVector out;
    for (const auto& [s, c] : v.coefficients) out += group_act(g, s) * c;
    return out;
}

double hermite(int n, double u, double c) {
    if (n < 1 || n > 5) throw std::invalid_argument("hermite order must be in 1..5");
    // coefficients of H_n in powers of u
    std::vector<double> h{0.0, 1.0};
    for (int k = 1; k < n; ++k) {
        std::vector<double> next(h.size() + 1, 0.0);
        for (std::size_t i = 0; i < h.size(); ++i) next[i + 1] += h[i];
        for (std::size_t i = 1; i < h.size(); ++i) next[i - 1] -= c * static_cast<double>(i) * h[i];
        h = std::move(next);
    }
    double v = 0.0;
    for (std::size_t i = h.size(); i-- > 0;) v = v * u + h[i];
    return v;
}

PiHatCache::PiHatCache(const ScalingParameters& s, LiftConfig config, LiftConstants constants)
    : scaling_(s), config_(std::move(config)), constants_(constants) {
    fields_.assign(kSymbolCount, std::vector<Field>(config_.times.size()));
}

const Field& PiHatCache::field(Symbol s, std::size_t time_index) const {
    if (s == Symbol::Xi) throw std::invalid_argument("Xi is not a function");
    const Field& f = fields_.at(idx(s)).at(time_index);
    if (f.empty()) throw std::logic_error("Pi-hat not computed for " + symbol_name(s));
    return f;
}

void PiHatCache::set(Symbol s, std::size_t time_index, Field f) {
    fields_.at(idx(s)).at(time_index) = std::move(f);
}

PiHatCache lift_pi_hat(const Trajectory& traj, const Trajectory& extension, const KacKernel& kernel,
                       const SpectralCalculus& calc, const LiftConfig& config,
                       const LiftConstants& constants) {
    const ScalingParameters& s = calc.scaling();
    if (!(config.cutoff > 0.0)) throw std::invalid_argument("cutoff must be positive");
    if (config.substeps < 1) throw std::invalid_argument("substeps must be >= 1");
    if (config.times.empty()) throw std::invalid_argument("no evaluation times");
    if (!std::is_sorted(config.times.begin(), config.times.end())) {
        throw std::invalid_argument("evaluation times must be ascending");
    }
    const double c = config.cutoff;
    const std::size_t n = static_cast<std::size_t>(config.substeps);
    const double h = c / static_cast<double>(n);
    const double T0 = config.times.front() - 2.0 * c;
    std::vector<std::size_t> eval_index;
    for (double t : config.times) {
        const double k = (t - T0) / h;
        if (std::abs(k - std::round(k)) > 1e-6) {
            throw std::invalid_argument("evaluation times must sit on the cutoff / substeps lattice");
        }
        eval_index.push_back(static_cast<std::size_t>(std::llround(k)));
    }
    const std::size_t K = eval_index.back();
    std::vector<double> stops(K + 1);
    for (std::size_t k = 0; k <= K; ++k) stops[k] = T0 + h * static_cast<double>(k);
    if (stops.back() > traj.horizon * traj.alpha * (1.0 + 1e-12)) {
        throw WindowTooShort("trajectory shorter than the last evaluation time");
    }
    if (T0 < 0.0 && -T0 > extension.horizon * extension.alpha * (1.0 + 1e-12)) {
        throw WindowTooShort("extension trajectory shorter than the negative-time window");
    }

    const FftPlan& plan = calc.plan();
    const std::size_t H = plan.half_size();
    const auto& khat = calc.spectrum().half;
    std::vector<std::vector<Complex>> U(K + 1);
    const double delta = s.delta;
    NoiseIntegrator integ(calc, std::min(T0, 0.0));
    std::vector<double> neg, pos;
    for (double t : stops) (t < 0.0 ? neg : pos).push_back(t);
    if (!neg.empty()) {
        std::vector<double> rstops = neg;
        rstops.push_back(0.0);
        drive_noise_reversed(extension, kernel, delta, integ, rstops, [&](std::size_t i) {
            if (i < neg.size()) U[i] = integ.state();
        });
    }
    const std::size_t offset = neg.size();
    drive_noise(traj, kernel, delta, integ, pos, [&](std::size_t i) { U[offset + i] = integ.state(); });

    std::vector<double> ec(H), rate(H);
    for (std::size_t i = 0; i < H; ++i) {
        rate[i] = laplacian_symbol(khat[i], s);
        ec[i] = std::exp(rate[i] * c);
    }
    const double r2 = 1.0 / std::numbers::sqrt2;
    const double cc = constants.c;
    const double cp = constants.c_prime;
    const std::size_t M = plan.real_size();
    // <1> and the spectra of Pi-hat <2>, <3> from index n on
    std::vector<Field> u(K + 1);
    std::vector<std::vector<Complex>> F2(K + 1), F3(K + 1);
    Field tmp(M);
    for (std::size_t k = n; k <= K; ++k) {
        std::vector<Complex> spec(H);
        for (std::size_t i = 0; i < H; ++i) spec[i] = r2 * khat[i] * (U[k][i] - ec[i] * U[k - n][i]);
        u[k] = calc.inverse_scaled(spec);
        F2[k].resize(H);
        F3[k].resize(H);
        for (std::size_t x = 0; x < M; ++x) tmp[x] = u[k][x] * u[k][x] - cc - cp;
        plan.forward(tmp.data(), F2[k].data());
        for (std::size_t x = 0; x < M; ++x) tmp[x] = hermite(3, u[k][x], cc);
        plan.forward(tmp.data(), F3[k].data());
    }
    auto planted_field = [&](const std::vector<std::vector<Complex>>& F, std::size_t kb) {
        std::vector<Complex> acc(H, Complex(0.0, 0.0));
        for (std::size_t m = 0; m <= n; ++m) {
            const double w = (m == 0 || m == n) ? 0.5 * h : h;
            const double lag = h * static_cast<double>(m);
            const auto& Fm = F[kb - m];
            for (std::size_t i = 0; i < H; ++i) acc[i] += w * khat[i] * std::exp(rate[i] * lag) * Fm[i];
        }
        return calc.inverse_scaled(acc);
    };

    PiHatCache cache(s, config, constants);
    const TorusLattice& L = s.lattice;
    const double c2 = constants.c_double_prime;
    for (std::size_t b = 0; b < eval_index.size(); ++b) {
        const std::size_t kb = eval_index[b];
        const Field& u1 = u[kb];
        const Field i20 = planted_field(F2, kb);
        const Field i30 = planted_field(F3, kb);
        std::vector<Field> f(kSymbolCount, Field(M, 0.0));
        for (std::size_t x = 0; x < M; ++x) {
            const auto pos_x = L.position(x);
            const double v = u1[x];
            const double v2 = v * v - cc - cp;
            const double v3 = hermite(3, v, cc);
            const double v4 = hermite(4, v, cc);
            const double v5 = hermite(5, v, cc);
            f[idx(Symbol::One)][x] = 1.0;
            f[idx(Symbol::X1)][x] = L.d > 0 ? pos_x[0] : 0.0;
            f[idx(Symbol::X2)][x] = L.d > 1 ? pos_x[1] : 0.0;
            f[idx(Symbol::X3)][x] = L.d > 2 ? pos_x[2] : 0.0;
            f[idx(Symbol::I1)][x] = v;
            f[idx(Symbol::I2)][x] = v2;
            f[idx(Symbol::I3)][x] = v3;
            for (int a = 0; a < 3; ++a) {
                const double xa = a < L.d ? pos_x[a] : 0.0;
                f[idx(Symbol::I2X1) + a][x] = v2 * xa;
                f[idx(Symbol::I3X1) + a][x] = v3 * xa;
            }
            f[idx(Symbol::I20)][x] = i20[x];
            f[idx(Symbol::I30)][x] = i30[x];
            f[idx(Symbol::I22)][x] = i20[x] * v2 - c2;
            f[idx(Symbol::I31)][x] = i30[x] * v;
            f[idx(Symbol::I32)][x] = i30[x] * v2 - 3.0 * c2 * v;
            f[idx(Symbol::I4)][x] = v4;
            f[idx(Symbol::I5)][x] = v5;
            f[idx(Symbol::E40)][x] = s.alpha * v4;
            f[idx(Symbol::E50)][x] = s.alpha * v5;
        }
        for (Symbol sym : model_symbols()) cache.set(sym, b, std::move(f[idx(sym)]));
    }
    return cache;
}

double NumericModel::pi_hat(Symbol s, const BasePoint& w) const { return cache_.value(s, w.time, w.site); }

double NumericModel::position(const BasePoint& z, int axis) const {
    const TorusLattice& L = cache_.scaling().lattice;
    if (axis >= L.d) return 0.0;
    return L.position(z.site)[axis];
}

double NumericModel::f(const BasePoint& z, PlusSymbol p) const {
    switch (p) {
        case PlusSymbol::One: return 1.0;
        case PlusSymbol::X1: return -position(z, 0);
        case PlusSymbol::X2: return -position(z, 1);
        case PlusSymbol::X3: return -position(z, 2);
        case PlusSymbol::I20: return -pi_hat(Symbol::I20, z);
        case PlusSymbol::I30: return -pi_hat(Symbol::I30, z);
    }
    return 0.0;
}

GroupElement NumericModel::character(const BasePoint& z) const {
    return {{f(z, PlusSymbol::X1), f(z, PlusSymbol::X2), f(z, PlusSymbol::X3)},
            f(z, PlusSymbol::I20),
            f(z, PlusSymbol::I30)};
}

double NumericModel::pi(const BasePoint& z, Symbol s, const BasePoint& w) const {
    double v = 0.0;
    for (const CoproductTerm& t : coproduct(s)) v += t.coefficient * pi_hat(t.left, w) * f(z, t.right);
    return v;
}

double NumericModel::pi(const BasePoint& z, const SymbolVector& vec, const BasePoint& w) const {
    double v = 0.0;
    for (const auto& [s, c] : vec.coefficients) {
        if (c != 0.0) v += c * pi(z, s, w);
    }
    return v;
}

GroupElement NumericModel::gamma(const BasePoint& z, const BasePoint& zbar) const {
    return {{-pi(z, Symbol::X1, zbar), -pi(z, Symbol::X2, zbar), -pi(z, Symbol::X3, zbar)},
            -pi(z, Symbol::I20, zbar),
            -pi(z, Symbol::I30, zbar)};
}

std::vector<BasePoint> base_point_grid(const PiHatCache& cache, int per_axis) {
    if (per_axis < 1) throw std::invalid_argument("per_axis must be >= 1");
    const TorusLattice& L = cache.scaling().lattice;
    std::vector<int> ticks;
    for (int i = 0; i < per_axis; ++i) ticks.push_back(static_cast<int>((static_cast<long long>(i) * L.side) / per_axis));
    std::vector<std::size_t> sites;
    Coord c{0, 0, 0};
    std::function<void(int)> rec = [&](int a) {
        if (a == L.d) {
            sites.push_back(L.index(c));
            return;
        }
        for (int t : ticks) {
            c[a] = t;
            rec(a + 1);
        }
    };
    rec(0);
    std::vector<BasePoint> out;
    for (std::size_t t = 0; t < cache.time_count(); ++t) {
        for (std::size_t x : sites) out.push_back({t, x});
    }
    return out;
}

namespace {

double max_gap(const GroupElement& x, const GroupElement& y) {
    double g = std::max(std::abs(x.b - y.b), std::abs(x.c - y.c));
    for (int i = 0; i < 3; ++i) g = std::max(g, std::abs(x.a[i] - y.a[i]));
    return g;
}

double max_param(const GroupElement& x) { return max_gap(x, GroupElement{}); }

}  // namespace

ModelCheck check_model(const NumericModel& model, const std::vector<BasePoint>& base,
                       const std::vector<BasePoint>& points) {
    ModelCheck out;
    const std::vector<Symbol> syms = model_symbols();
    std::vector<double> scale(syms.size(), 0.0);
    std::vector<double> gap(syms.size(), 0.0);
    std::vector<SymbolVector> moved(syms.size());
    for (const BasePoint& z : base) {
        out.gamma_identity = std::max(out.gamma_identity, max_param(model.gamma(z, z)));
        out.recentering = std::max(out.recentering, std::abs(model.pi(z, Symbol::I20, z)) +
                                                        std::abs(model.pi(z, Symbol::I30, z)));
        for (const BasePoint& zb : base) {
            const GroupElement g = model.gamma(z, zb);
            out.group_law = std::max(out.group_law, max_gap(g, model.character(zb) - model.character(z)));
            for (std::size_t i = 0; i < syms.size(); ++i) moved[i] = group_act(g, syms[i]);
            for (const BasePoint& w : points) {
                for (std::size_t i = 0; i < syms.size(); ++i) {
                    const double lhs = model.pi(zb, syms[i], w);
                    const double rhs = model.pi(z, moved[i], w);
                    scale[i] = std::max(scale[i], std::abs(lhs));
                    gap[i] = std::max(gap[i], std::abs(lhs - rhs));
                    ++out.comparisons;
                }
            }
        }
    }
    for (std::size_t i = 0; i < syms.size(); ++i) {
        out.max_abs = std::max(out.max_abs, gap[i]);
        if (scale[i] > 0.0) out.max_relative = std::max(out.max_relative, gap[i] / scale[i]);
    }
    const std::size_t m = std::min<std::size_t>(base.size(), 27);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const GroupElement gij = model.gamma(base[i], base[j]);
            for (std::size_t k = 0; k < m; ++k) {
                const GroupElement lhs = gij + model.gamma(base[j], base[k]);
                out.chain = std::max(out.chain, max_gap(lhs, model.gamma(base[i], base[k])));
            }
        }
    }
    return out;
}

std::vector<ModelBoundRow> model_bound_constants(const NumericModel& model,
                                                 const std::vector<BasePoint>& base,
                                                 const std::vector<BasePoint>& points, double kappa) {
    const PiHatCache& cache = model.cache();
    const TorusLattice& L = cache.scaling().lattice;
    const double e = cache.scaling().mesoscale;
    auto distance = [&](const BasePoint& a, const BasePoint& b) {
        double dist = std::sqrt(std::abs(cache.config().times[a.time] - cache.config().times[b.time]));
        const Coord ca = L.coords(a.site);
        const Coord cb = L.coords(b.site);
        for (int i = 0; i < L.d; ++i) dist += std::abs(L.centred(L.wrap(ca[i] - cb[i]))) * L.eps();
        return dist;
    };
    std::vector<ModelBoundRow> rows;
    for (Symbol s : model_symbols()) {
        ModelBoundRow row{s, homogeneity(s, kappa), 0.0};
        for (const BasePoint& z : base) {
            for (const BasePoint& w : points) {
                const double r = std::max(distance(z, w), e);
                row.constant = std::max(row.constant, std::abs(model.pi(z, s, w)) / std::pow(r, row.homogeneity));
            }
        }
        rows.push_back(row);
    }
    return rows;
}

void write_pi_hat_snapshot(const std::string& path, const PiHatCache& cache, Symbol s,
                           std::size_t time_index) {
    write_snapshot(path, cache.scaling().lattice, cache.scaling().gamma, cache.field(s, time_index));
}

}  // namespace isingkac
