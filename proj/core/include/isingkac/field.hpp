#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "isingkac/glauber.hpp"
#include "isingkac/spectral.hpp"

namespace isingkac {

class WindowTooShort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Field values at macroscopic grid times.
struct CoarseField {
    std::vector<double> times;
    std::vector<Field> values;
    std::uint64_t seed = 0;
    std::string kernel;  // "kac" or "under"
};

// Calls `visit(i, spins)` with the configuration at each macroscopic grid time (ascending).
void for_each_grid_state(const Trajectory& traj, const std::vector<double>& grid,
                         const std::function<void(std::size_t, const std::vector<std::int8_t>&)>& visit);

// X(t, x) = h(t / alpha, x / eps) / delta, replaying events with incremental field updates.
CoarseField coarse_field(const Trajectory& traj, const KacKernel& kernel, double delta,
                         const std::vector<double>& grid);
// Same field through the FFT route K * (sigma / delta).
CoarseField coarse_field_spectral(const Trajectory& traj, const SpectralCalculus& calc,
                                  double delta, const std::vector<double>& grid);
// Xunder = Kunder * (sigma / delta) with the under-kernel spectrum.
CoarseField under_field(const Trajectory& traj, const SpectralCalculus& calc,
                        const SpectralKernel& under, double delta, const std::vector<double>& grid);

// Fourier state of U(t) = eps^d sum_y int_{t0}^t P_{t-s}(x-y) dM(s,y). The state is the
// unnormalised half-spectrum FFT of U; dM is a piecewise constant density plus point masses.
// Events are batched in bins of length h with |lambda| h <= 1/2 for every mode, and
// exp(-lambda (s - t_bin)) is expanded to order 16, so the truncation error is below 1e-19.
class NoiseIntegrator {
public:
    static constexpr int kOrder = 16;

    NoiseIntegrator(const SpectralCalculus& calc, double t0);

    // Time of the last flush; state() holds U at this time.
    double time() const { return time_; }
    const std::vector<Complex>& state() const;
    const SpectralCalculus& calculus() const { return calc_; }
    double bin_length() const { return hmax_; }

    // Point mass `amount` at `site` at time s (s nondecreasing across calls).
    void jump(std::size_t site, double amount, double s);
    // The density at `site` takes the value g from time s on.
    void set_density(std::size_t site, double g, double s);
    void set_density(const Field& g, double s);
    // Integrates all recorded events up to t_end.
    void flush(double t_end);
    // Constant density on (time, t_end].
    void drift(const Field& density, double t_end);

    // Real field of multiplier(K^, i) * state.
    template <class F>
    Field field(F&& multiplier) const {
        std::vector<Complex> spec = state();
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= multiplier(calc_.spectrum().half[i], i);
        return calc_.inverse_scaled(spec);
    }
    double rate(std::size_t i) const { return rate_[i]; }

private:
    void record(double s);

    const SpectralCalculus& calc_;
    double time_ = 0.0;
    double cursor_ = 0.0;
    double hmax_ = 0.0;
    bool pending_ = false;
    std::vector<Complex> state_;
    std::vector<Complex> ghat_;   // density spectrum at time_
    std::vector<double> rate_;    // laplacian symbol per half-spectrum mode
    Field g_;                     // current density
    Field dg_;                    // density change since time_
    std::vector<double> moments_; // [site][n]: sum of (s - time_)^n-weighted masses
    std::vector<Complex> spectra_;
    Field buffer_;
};

using StopCallback = std::function<void(std::size_t)>;

// Drives the integrator (which must sit at time 0) through the martingale of `traj`,
// calling `at_stop(i)` once the state reaches stops[i] (macroscopic, ascending, >= 0).
void drive_noise(const Trajectory& traj, const KacKernel& kernel, double delta,
                 NoiseIntegrator& integrator, const std::vector<double>& stops,
                 const StopCallback& at_stop);
// Negative times: M(s) = Mtilde(-s) for an independent trajectory. The integrator sits at
// -S with S <= tilde horizon; stops are negative and ascending, the last one may be 0.
void drive_noise_reversed(const Trajectory& tilde, const KacKernel& kernel, double delta,
                          NoiseIntegrator& integrator, const std::vector<double>& stops,
                          const StopCallback& at_stop);

// Y(t) = 2^{-1/2} eps^d sum_y int_0^t P~_{t-s}(x-y) dM(s,y) at grid times, by exact event sums.
CoarseField stochastic_convolution_Y(const Trajectory& traj, const KacKernel& kernel,
                                     const SpectralCalculus& calc, const std::vector<double>& grid);
// The same value at one space-time point from the grid of compensator densities sampled
// every `step` and the exact jump sum; for checking the exact integrator.
double stochastic_convolution_Y_stieltjes(const Trajectory& traj, const KacKernel& kernel,
                                          const SpectralCalculus& calc, double t,
                                          std::size_t site, double step);

// Tensor-product test functions b^(k1)(u1 s) ... b^(kd)(ud s), s = sqrt(d), b(u) = exp(-1/(1-u^2)),
// supported in the unit ball and scaled to C^r norm 1.
struct TestFunction {
    std::array<int, 3> order{};  // derivative order per axis
    double scale = 1.0;          // normalisation to C^r norm 1
};

struct TestFunctionDictionary {
    int d = 3;
    int r = 1;
    std::vector<TestFunction> members;
    std::vector<double> scales;  // lambda values, descending, from 1 down to eps
    double eps = 0.0;
    double mesoscale = 0.0;
    int refinement = 0;

    // Dyadic scales 2^{-k/2^refinement}; members phi and its derivatives up to order r
    // along each axis; base points every largest power of two <= lambda / (2^{1+refinement} eps).
    static TestFunctionDictionary standard(const ScalingParameters& s, double eta, int refinement = 0);
    int stride(double lambda) const;
    // Value of a member at a point of the unit ball.
    double evaluate(const TestFunction& phi, const std::array<double, 3>& y) const;
    double integral(const TestFunction& phi) const;
};

struct PairingEntry {
    double lambda = 0.0;
    std::size_t member = 0;
    std::size_t site = 0;
    double pairing = 0.0;
    double weighted = 0.0;
};

// Estimator of the (e)-seminorm: maxima over a finite dictionary, hence a lower bound on the
// supremum. `above` is the branch lambda in [e, 1], `below` the branch lambda in [eps, e).
struct BesovEstimate {
    double eta = 0.0;
    double value = 0.0;
    double above = 0.0;
    double below = 0.0;
    std::vector<PairingEntry> table;  // best base point for each (lambda, member)
};

// (iota_eps f)(phi^lambda_x) at every site x.
Field pairings(const Field& f, const TorusLattice& lattice, const TestFunctionDictionary& dict,
               const TestFunction& phi, double lambda);

BesovEstimate besov_seminorm(const Field& f, const TorusLattice& lattice, double eta,
                             const TestFunctionDictionary& dict);

using ContinuumField = std::function<double(const std::array<double, 3>&)>;
// Continuum pairing int f(y) lambda^-d phi((y - x) / lambda) dy by nested adaptive quadrature.
double continuum_pairing(const ContinuumField& f, const TestFunctionDictionary& dict,
                         const TestFunction& phi, const std::array<double, 3>& x, double lambda,
                         double tolerance = 1e-8);
// Three-branch distance estimator between a lattice field and a continuum field.
double besov_distance(const Field& f_gamma, const TorusLattice& lattice, const ContinuumField& f,
                      double eta, const TestFunctionDictionary& dict);

// E = (tanh(beta delta X) - beta delta X + (beta delta X)^3 / 3) / (delta alpha), pointwise.
double error_term(double X, const ScalingParameters& s, double beta);
Field error_term(const Field& X, const ScalingParameters& s, double beta);

struct MildResidual {
    double time = 0.0;
    double step = 0.0;     // quadrature step, 0 for exact time integration
    double max_abs = 0.0;  // max over sites of |LHS - RHS|
    double scale = 0.0;    // max over sites of |X(t)|
    Field residual;
};

// Residual of X(t) = X0 + K * M(t) + int_0^t D(s) ds with
// D = (1/alpha)(K * X - X) + ((beta - 1)/alpha) K * X - (beta^3 delta^2 / (3 alpha)) K * X^3 + K * E.
// The martingale term uses exact compensators; the drift integral uses the trapezoidal rule
// with step h (h = 0 integrates the piecewise constant drift exactly).
MildResidual mild_residual(const Trajectory& traj, const KacKernel& kernel,
                           const SpectralCalculus& calc, double t, double h);
// Residual of the semigroup form X(t) = P_t X0 + sqrt2 Y(t) + int_0^t P~_{t-s} G(s) ds,
// G = -beta^3 X^3 / 3 + ((beta - 1)/alpha) X + E, integrated exactly between events.
MildResidual mild_form_residual(const Trajectory& traj, const KacKernel& kernel,
                                const SpectralCalculus& calc, double t);

struct RemainderParameters {
    double beta = 1.0;
    double C = 0.0;        // renormalisation constant
    double A = 0.0;
    double B = 0.0;        // 4 gamma^6 beta^5 c_gamma
    bool error_term = true;
};

struct RemainderResult {
    std::vector<double> times;
    std::vector<Field> v;
    double step = 0.0;
    int iterations = 0;
    int retries = 0;
    double last_difference = 0.0;
};

using FieldPath = std::function<Field(double)>;

// Picard iteration for v(t) = P_t X0 + int_0^t P~_{t-s} F(v + sqrt2 Y)(s) ds on a uniform grid
// (exact semigroup steps, trapezoidal sources) until successive sup differences drop below
// `tolerance`. Step 0 means alpha / 10; on failure the step is halved up to four times.
RemainderResult remainder_solve(const FieldPath& Y, const Field& X0, const SpectralCalculus& calc,
                                const RemainderParameters& p, double T, double step = 0.0,
                                double tolerance = 1e-10, int max_iterations = 500);

void write_field_csv(const std::string& path, const CoarseField& f, const TorusLattice& lattice);
void write_besov_csv(const std::string& path, const BesovEstimate& e);

}  // namespace isingkac
