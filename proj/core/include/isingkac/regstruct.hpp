#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isingkac/field.hpp"
#include "isingkac/glauber.hpp"
#include "isingkac/spectral.hpp"

namespace isingkac {

// Basis of the truncated structure. <n> is the product of n planted noises I(Xi),
// <n0> = I(<n>), <22> = <20><2>, <31> = <30><1>, <32> = <30><2>, <n0E> = E(<n>).
enum class Symbol : int {
    One,
    X1,
    X2,
    X3,
    I1,
    I2,
    I2X1,
    I2X2,
    I2X3,
    I3,
    I3X1,
    I3X2,
    I3X3,
    I20,
    I30,
    I22,
    I31,
    I32,
    I4,
    I5,
    E40,
    E50,
    Xi,
};

constexpr std::size_t kSymbolCount = 23;
// Every basis symbol, Xi last.
const std::array<Symbol, kSymbolCount>& all_symbols();
// The symbols a model acts on (all but Xi).
std::vector<Symbol> model_symbols();
std::string symbol_name(Symbol s);
std::optional<Symbol> symbol_from_name(const std::string& name);

// Basis of the positive part that appears on the right of the coproduct.
enum class PlusSymbol : int { One, X1, X2, X3, I20, I30 };
constexpr std::size_t kPlusCount = 6;
std::string plus_name(PlusSymbol p);

// Decorated tree: a product of noises, monomials, planted trees I(.) and E(.) factors.
struct Tree {
    int noise = 0;
    std::array<int, 3> poly{};
    std::vector<Tree> planted;
    std::vector<Tree> errors;

    bool is_polynomial() const { return noise == 0 && planted.empty() && errors.empty(); }
    friend bool operator==(const Tree& a, const Tree& b);
    friend bool operator<(const Tree& a, const Tree& b);
};

Tree noise_tree();
Tree monomial(int axis);
Tree planted(const Tree& child);
Tree error_tree(const Tree& child);
Tree product(const Tree& a, const Tree& b);

Tree tree_of(Symbol s);
std::optional<Symbol> symbol_of(const Tree& t);
std::optional<PlusSymbol> plus_of(const Tree& t);

// |Xi| = -5/2 - kappa, |X_i| = 1, |I(t)| = |E(t)| = |t| + 2, products add.
double homogeneity(const Tree& t, double kappa);
double homogeneity(Symbol s, double kappa);
double homogeneity(PlusSymbol p, double kappa);
void check_kappa(double kappa);

struct CoproductTerm {
    Symbol left;
    PlusSymbol right;
    double coefficient = 1.0;
};

// Delta computed recursively: multiplicative, Delta X_i = X_i (x) 1 + 1 (x) X_i,
// Delta I(t) = (I (x) id) Delta t + 1 (x) I(t) when |I(t)| > 0, Delta E(t) = (E (x) id) Delta t.
std::vector<CoproductTerm> coproduct(Symbol s);

struct GroupElement {
    std::array<double, 3> a{};
    double b = 0.0;
    double c = 0.0;

    // The multiplicative character f on the positive part: f(1) = 1, f(X_i) = a_i, ...
    double value(PlusSymbol p) const;
    GroupElement operator+(const GroupElement& o) const;
    GroupElement operator-(const GroupElement& o) const;
    GroupElement inverse() const;
};

struct SymbolVector {
    std::map<Symbol, double> coefficients;

    SymbolVector() = default;
    SymbolVector(Symbol s, double c = 1.0) { coefficients[s] = c; }

    double operator[](Symbol s) const;
    void add(Symbol s, double c);
    SymbolVector& operator+=(const SymbolVector& o);
    SymbolVector operator-(const SymbolVector& o) const;
    SymbolVector operator*(double c) const;
    bool empty(double tolerance = 0.0) const;

    SymbolVector project_below(double alpha, double kappa) const;   // |tau| < alpha
    SymbolVector project_upto(double alpha, double kappa) const;    // |tau| <= alpha
    SymbolVector project_from(double alpha, double kappa) const;    // |tau| >= alpha
    // sum of |coefficients| over symbols of homogeneity alpha
    double norm(double alpha, double kappa) const;
};

// (id (x) f_g) Delta tau, extended linearly.
SymbolVector group_act(const GroupElement& g, Symbol s);
SymbolVector group_act(const GroupElement& g, const SymbolVector& v);

// H_1 = u, H_{n+1} = u H_n - c H_n', 1 <= n <= 5.
double hermite(int n, double u, double c);

struct LiftConstants {
    double c = 0.0;               // c_gamma for the cutoff
    double c_prime = 0.0;
    double c_double_prime = 0.0;
};

struct LiftConfig {
    double cutoff = 1.0;          // the surrogate kernel is P~_t on [0, cutoff)
    std::vector<double> times;    // evaluation times, ascending
    int substeps = 16;            // time nodes per cutoff; evaluation times must sit on this lattice
};

// Pi-hat of every model symbol on all sites at the evaluation times.
class PiHatCache {
public:
    PiHatCache(const ScalingParameters& s, LiftConfig config, LiftConstants constants);

    const ScalingParameters& scaling() const { return scaling_; }
    const LiftConfig& config() const { return config_; }
    const LiftConstants& constants() const { return constants_; }
    std::size_t time_count() const { return config_.times.size(); }
    std::size_t site_count() const { return scaling_.lattice.size(); }

    const Field& field(Symbol s, std::size_t time_index) const;
    double value(Symbol s, std::size_t time_index, std::size_t site) const {
        return field(s, time_index)[site];
    }
    void set(Symbol s, std::size_t time_index, Field f);

private:
    ScalingParameters scaling_;
    LiftConfig config_;
    LiftConstants constants_;
    std::vector<std::vector<Field>> fields_;  // [symbol][time]
};

// Builds the cache from a trajectory on [0, max time] and an independent extension
// trajectory for negative times. <1> = 2^{-1/2} K^ (U(t) - P_c U(t - c)) from the exact noise
// integrator; I(tau) by the trapezoidal rule over the time lattice with exact spatial
// convolution. Throws WindowTooShort when either trajectory is too short.
PiHatCache lift_pi_hat(const Trajectory& traj, const Trajectory& extension, const KacKernel& kernel,
                       const SpectralCalculus& calc, const LiftConfig& config,
                       const LiftConstants& constants);

struct BasePoint {
    std::size_t time = 0;  // index into the evaluation times
    std::size_t site = 0;
};

class NumericModel {
public:
    explicit NumericModel(const PiHatCache& cache) : cache_(cache) {}

    const PiHatCache& cache() const { return cache_; }
    double pi_hat(Symbol s, const BasePoint& w) const;
    double position(const BasePoint& z, int axis) const;

    // f_z on the positive part: f_z(1) = 1, f_z(X_i) = -x_i, f_z(I(tau)) = -(Pi-hat I(tau))(z).
    double f(const BasePoint& z, PlusSymbol p) const;
    GroupElement character(const BasePoint& z) const;

    // (Pi_z tau)(w) = (Pi-hat (x) f_z) Delta tau
    double pi(const BasePoint& z, Symbol s, const BasePoint& w) const;
    double pi(const BasePoint& z, const SymbolVector& v, const BasePoint& w) const;

    // Gamma_{z zbar} read off from a_i = -(Pi_z X_i)(zbar), b = -(Pi_z <20>)(zbar), c = -(Pi_z <30>)(zbar).
    GroupElement gamma(const BasePoint& z, const BasePoint& zbar) const;

private:
    const PiHatCache& cache_;
};

// per_axis points along each spatial axis at every evaluation time.
std::vector<BasePoint> base_point_grid(const PiHatCache& cache, int per_axis);

struct ModelCheck {
    double max_relative = 0.0;     // of Pi_zbar tau (w) - Pi_z Gamma_{z zbar} tau (w)
    double max_abs = 0.0;
    std::size_t comparisons = 0;
    double gamma_identity = 0.0;   // max |parameters of Gamma_zz|
    double recentering = 0.0;      // max |(Pi_z <20>)(z)| + |(Pi_z <30>)(z)|
    double chain = 0.0;            // max parameter gap in Gamma_{z zbar} Gamma_{zbar ztilde} = Gamma_{z ztilde}
    double group_law = 0.0;        // max parameter gap between the read-off Gamma and F_z^-1 F_zbar
};

ModelCheck check_model(const NumericModel& model, const std::vector<BasePoint>& base,
                       const std::vector<BasePoint>& points);

struct ModelBoundRow {
    Symbol symbol;
    double homogeneity = 0.0;
    double constant = 0.0;  // max |(Pi_z tau)(w)| / (||w - z||_s v e)^|tau|
};
// Finite-gamma diagnostic of the model bounds; parabolic distance with periodic space.
std::vector<ModelBoundRow> model_bound_constants(const NumericModel& model,
                                                 const std::vector<BasePoint>& base,
                                                 const std::vector<BasePoint>& points, double kappa);

void write_pi_hat_snapshot(const std::string& path, const PiHatCache& cache, Symbol s,
                           std::size_t time_index);

}  // namespace isingkac
