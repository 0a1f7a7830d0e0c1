#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "isingkac/lattice.hpp"
#include "isingkac/numerics.hpp"

namespace isingkac {

enum class RateVariant { Glauber, Voter, Frozen };

struct RateModel {
    RateVariant variant = RateVariant::Glauber;
    double beta = 1.0;
};

// c(sigma, j) for a spin value and the averaged field at j.
inline double flip_rate(RateVariant v, double beta, int spin, double h) {
    switch (v) {
        case RateVariant::Glauber: return 0.5 * (1.0 - spin * std::tanh(beta * h));
        case RateVariant::Voter: return 0.5 * (1.0 - spin * h);
        case RateVariant::Frozen: return 0.0;
    }
    return 0.0;
}

double glauber_rate(const SpinConfiguration& config, std::size_t j, const RateModel& model);

struct Event {
    double time = 0.0;  // microscopic
    std::uint32_t site = 0;
};

constexpr double kNever = std::numeric_limits<double>::infinity();

struct Trajectory {
    TorusLattice lattice;
    double gamma = 0.0;
    double alpha = 1.0;
    std::vector<std::int8_t> initial;
    std::vector<Event> events;
    double horizon = 0.0;  // microscopic
    std::uint64_t seed = 0;
    RateModel model;
    // continuation after this microscopic time uses voter rates
    double switch_time = kNever;
    bool rate_underflow = false;

    RateModel model_at(double micro_time) const {
        if (micro_time >= switch_time) return {RateVariant::Voter, model.beta};
        return model;
    }
    std::vector<std::int8_t> state_at(double micro_time) const;
    std::vector<std::int8_t> final_state() const { return state_at(kNever); }
};

enum class Sampler { Thinning, SumTree };

struct SimulationOptions {
    Sampler sampler = Sampler::Thinning;
    std::uint64_t max_events = 0;  // 0: no limit
};

// Called after each flip with (microscopic time, site, configuration after the flip).
using FlipObserver = std::function<void(double, std::size_t, const SpinConfiguration&)>;

struct StreamResult {
    double end_time = 0.0;
    std::uint64_t events = 0;
    bool rate_underflow = false;
};

// Runs the jump process from `config` (mutated in place) over microscopic
// times (t0, t_end]; rates are bounded by 1, so proposals at total rate M
// accepted with probability c(sigma, j) give the exact process.
StreamResult simulate_stream(SpinConfiguration& config, const KacKernel& kernel,
                             const RateModel& model, double t0, double t_end, Rng& rng,
                             const FlipObserver& observer, const SimulationOptions& options = {});

// Horizon is macroscopic; the clock runs to horizon / alpha.
Trajectory simulate(const SpinConfiguration& initial, const KacKernel& kernel,
                    const RateModel& model, double horizon, double alpha, std::uint64_t seed,
                    const SimulationOptions& options = {});

// Continue with voter rates from macroscopic time tau (tau = kNever leaves the input unchanged).
Trajectory switch_to_voter(const Trajectory& traj, const KacKernel& kernel, double tau);

// Compensated martingale m(t,k) = sigma(t,k) - sigma(0,k) - int_0^t L sigma(s,k) ds and
// its bracket, integrated exactly between events. Grid times are macroscopic.
struct MartingalePath {
    std::vector<double> times;
    std::vector<std::size_t> sites;
    std::vector<double> micro;  // m at [time][site], jumps of +-2
    double delta = 1.0;

    double rescaled(std::size_t t, std::size_t s) const {
        return micro[t * sites.size() + s] / delta;
    }
};

struct BracketPath {
    std::vector<double> times;
    std::vector<std::size_t> sites;
    std::vector<double> values;  // <M(., x)>_t at [time][site]

    double at(std::size_t t, std::size_t s) const { return values[t * sites.size() + s]; }
};

struct MartingaleAndBracket {
    MartingalePath martingale;
    BracketPath bracket;
};

// `sites` empty means all sites.
MartingaleAndBracket martingale_and_bracket(const Trajectory& traj, const KacKernel& kernel,
                                            double delta, const std::vector<double>& grid,
                                            std::vector<std::size_t> sites = {});
MartingalePath martingale_path(const Trajectory& traj, const KacKernel& kernel, double delta,
                               const std::vector<double>& grid, std::vector<std::size_t> sites = {});
BracketPath bracket_path(const Trajectory& traj, const KacKernel& kernel, double delta,
                         const std::vector<double>& grid, std::vector<std::size_t> sites = {});

// First grid time at which seminorm(X(t)) >= threshold, kNever otherwise.
double stopping_time_tau1(const std::vector<double>& times, const std::vector<Field>& X,
                          double threshold, const std::function<double(const Field&)>& seminorm);

// First grid time at which seminorm(Xunder * X - C) >= threshold * e^exponent;
// the default exponent is kappa_under/2 - 1.
double stopping_time_tau2(const std::vector<double>& times, const std::vector<Field>& X_under,
                          const std::vector<Field>& X, double c_under, double threshold,
                          double mesoscale, double exponent,
                          const std::function<double(const Field&)>& seminorm);

// Exhaustive enumeration on small lattices (at most 24 sites).
std::vector<std::int8_t> decode_state(std::uint64_t code, std::size_t sites);
std::uint64_t encode_state(const std::vector<std::int8_t>& spins);
std::vector<double> gibbs_distribution(const KacKernel& kernel, double beta);
double detailed_balance_residual(const KacKernel& kernel, const RateModel& model);

struct StationarityReport {
    double total_variation = 0.0;
    std::uint64_t events = 0;
    double elapsed_micro = 0.0;
};
StationarityReport stationarity_check(const KacKernel& kernel, const RateModel& model,
                                      std::uint64_t min_events, std::uint64_t seed,
                                      Sampler sampler = Sampler::Thinning);

// "KGE1", u32 d, u32 side, f64 gamma, f64 alpha, f64 beta, u32 variant, f64 horizon,
// f64 switch time, u64 seed, u64 initial count, initial spins (i8), then repeated
// (f64 time, u32 site) until end of file.
void write_event_log(const std::string& path, const Trajectory& traj);
Trajectory read_event_log(const std::string& path);

void write_martingale_csv(const std::string& path, const MartingaleAndBracket& mb);

}  // namespace isingkac
