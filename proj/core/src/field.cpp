#include "isingkac/field.hpp"

#include <algorithm>
#include <boost/math/differentiation/autodiff.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "isingkac/renorm.hpp"

namespace isingkac {

namespace {

constexpr double kTimeSlack = 1e-12;

void check_grid(const Trajectory& traj, const std::vector<double>& grid) {
    if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("grid must be ascending");
    if (!grid.empty() && grid.front() < 0.0) throw std::invalid_argument("grid times must be >= 0");
    if (!grid.empty() && grid.back() > traj.horizon * traj.alpha * (1.0 + kTimeSlack)) {
        throw WindowTooShort("grid extends beyond the simulated horizon");
    }
}

// -L sigma(k) / (delta alpha) with L sigma = -2 sigma c.
double compensator_density(const SpinConfiguration& config, std::size_t k, const RateModel& model,
                           double delta, double alpha) {
    const double c = flip_rate(model.variant, model.beta, config.spin[k], config.h[k]);
    return 2.0 * config.spin[k] * c / (delta * alpha);
}

template <class Visit>
void for_support(const TorusLattice& L, const KacKernel& kernel, std::size_t j, Visit&& visit) {
    visit(j);
    for (const Coord& off : kernel.offsets) {
        const std::size_t k = L.shifted(j, off);
        if (k != j) visit(k);
    }
}

void write_atomically(const std::string& path, const std::function<void(std::ostream&)>& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        out << std::setprecision(17);
        body(out);
        if (!out) throw std::runtime_error("failed to write " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

}  // namespace

void for_each_grid_state(const Trajectory& traj, const std::vector<double>& grid,
                         const std::function<void(std::size_t, const std::vector<std::int8_t>&)>& visit) {
    check_grid(traj, grid);
    std::vector<std::int8_t> s = traj.initial;
    std::size_t next = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double micro = grid[i] / traj.alpha;
        while (next < traj.events.size() && traj.events[next].time <= micro) {
            const std::size_t j = traj.events[next++].site;
            s[j] = static_cast<std::int8_t>(-s[j]);
        }
        visit(i, s);
    }
}

CoarseField coarse_field(const Trajectory& traj, const KacKernel& kernel, double delta,
                         const std::vector<double>& grid) {
    check_grid(traj, grid);
    CoarseField out;
    out.times = grid;
    out.seed = traj.seed;
    out.kernel = "kac";
    SpinConfiguration config = SpinConfiguration::from_spins(traj.initial, kernel);
    std::size_t next = 0;
    for (double t : grid) {
        const double micro = t / traj.alpha;
        while (next < traj.events.size() && traj.events[next].time <= micro) {
            update_field_after_flip(config, traj.events[next++].site, kernel);
        }
        Field X(config.h);
        for (double& v : X) v /= delta;
        out.values.push_back(std::move(X));
    }
    return out;
}

CoarseField coarse_field_spectral(const Trajectory& traj, const SpectralCalculus& calc,
                                  double delta, const std::vector<double>& grid) {
    CoarseField out;
    out.times = grid;
    out.seed = traj.seed;
    out.kernel = "kac";
    for_each_grid_state(traj, grid, [&](std::size_t, const std::vector<std::int8_t>& s) {
        Field f(s.begin(), s.end());
        for (double& v : f) v /= delta;
        out.values.push_back(calc.convolve(f));
    });
    return out;
}

CoarseField under_field(const Trajectory& traj, const SpectralCalculus& calc,
                        const SpectralKernel& under, double delta, const std::vector<double>& grid) {
    if (under.half.size() != calc.plan().half_size()) {
        throw std::invalid_argument("under-kernel spectrum does not match the lattice");
    }
    CoarseField out;
    out.times = grid;
    out.seed = traj.seed;
    out.kernel = "under";
    for_each_grid_state(traj, grid, [&](std::size_t, const std::vector<std::int8_t>& s) {
        Field f(s.begin(), s.end());
        for (double& v : f) v /= delta;
        out.values.push_back(calc.apply(f, [&](double, std::size_t i) { return under.half[i]; }));
    });
    return out;
}

NoiseIntegrator::NoiseIntegrator(const SpectralCalculus& calc, double t0)
    : calc_(calc), time_(t0), cursor_(t0) {
    const FftPlan& plan = calc.plan();
    const std::size_t H = plan.half_size();
    const std::size_t M = plan.real_size();
    state_.assign(H, Complex(0.0, 0.0));
    ghat_.assign(H, Complex(0.0, 0.0));
    rate_.resize(H);
    double top = 0.0;
    for (std::size_t i = 0; i < H; ++i) {
        rate_[i] = laplacian_symbol(calc.spectrum().half[i], calc.scaling());
        top = std::max(top, std::abs(rate_[i]));
    }
    hmax_ = top > 0.0 ? 0.5 / top : std::numeric_limits<double>::infinity();
    g_.assign(M, 0.0);
    dg_.assign(M, 0.0);
    moments_.assign(M * (kOrder + 1), 0.0);
    spectra_.resize(H * (kOrder + 1));
    buffer_.resize(M);
}

const std::vector<Complex>& NoiseIntegrator::state() const {
    if (pending_) throw std::logic_error("noise integrator has unflushed events");
    return state_;
}

void NoiseIntegrator::record(double s) {
    if (s < cursor_ - kTimeSlack * std::max(1.0, std::abs(cursor_))) {
        throw std::invalid_argument("noise integrator cannot move backwards in time");
    }
    if (s - time_ > hmax_) {
        if (pending_) flush(cursor_);
        flush(s);
    }
    cursor_ = std::max(cursor_, s);
    pending_ = true;
}

void NoiseIntegrator::jump(std::size_t site, double amount, double s) {
    record(s);
    const double tau = std::max(0.0, s - time_);
    double* m = &moments_[site * (kOrder + 1)];
    double p = amount;
    for (int n = 0; n <= kOrder; ++n) {
        m[n] += p;
        p *= tau;
    }
}

void NoiseIntegrator::set_density(std::size_t site, double g, double s) {
    const double change = g - g_[site];
    if (change == 0.0) return;
    record(s);
    g_[site] = g;
    dg_[site] += change;
    const double tau = std::max(0.0, s - time_);
    double* m = &moments_[site * (kOrder + 1)];
    double p = change * tau;
    for (int n = 0; n <= kOrder; ++n) {
        m[n] -= p / (n + 1);
        p *= tau;
    }
}

void NoiseIntegrator::set_density(const Field& g, double s) {
    if (g.size() != g_.size()) throw std::invalid_argument("density does not match the lattice");
    for (std::size_t k = 0; k < g.size(); ++k) set_density(k, g[k], s);
}

void NoiseIntegrator::flush(double t_end) {
    const double H = t_end - time_;
    if (t_end < cursor_ - kTimeSlack * std::max(1.0, std::abs(cursor_))) {
        throw std::invalid_argument("noise integrator cannot move backwards in time");
    }
    const FftPlan& plan = calc_.plan();
    const std::size_t nh = state_.size();
    const std::size_t M = g_.size();
    if (pending_) {
        // U(t_end) = e^{lambda H} (U + sum_n (-lambda)^n / n! R^_n) + phi(H) (g^ + dg^)
        for (int n = 0; n <= kOrder; ++n) {
            for (std::size_t k = 0; k < M; ++k) buffer_[k] = moments_[k * (kOrder + 1) + n];
            plan.forward(buffer_.data(), &spectra_[n * nh]);
        }
        std::vector<Complex> dghat(nh);
        plan.forward(dg_.data(), dghat.data());
        for (std::size_t i = 0; i < nh; ++i) {
            const double l = rate_[i];
            Complex acc = spectra_[kOrder * nh + i];
            for (int n = kOrder - 1; n >= 0; --n) acc = acc * (-l / (n + 1)) + spectra_[n * nh + i];
            ghat_[i] += dghat[i];
            const double e = std::exp(l * H);
            const double phi = l == 0.0 ? H : std::expm1(l * H) / l;
            state_[i] = e * (state_[i] + acc) + phi * ghat_[i];
        }
        std::fill(moments_.begin(), moments_.end(), 0.0);
        std::fill(dg_.begin(), dg_.end(), 0.0);
        pending_ = false;
    } else if (H > 0.0) {
        for (std::size_t i = 0; i < nh; ++i) {
            const double l = rate_[i];
            const double phi = l == 0.0 ? H : std::expm1(l * H) / l;
            state_[i] = std::exp(l * H) * state_[i] + phi * ghat_[i];
        }
    }
    time_ = std::max(time_, t_end);
    cursor_ = std::max(cursor_, time_);
}

void NoiseIntegrator::drift(const Field& density, double t_end) {
    set_density(density, cursor_);
    flush(t_end);
}

namespace {

// Forward replay driving an integrator with a density that depends on the configuration.
template <class Density>
void drive_forward(const Trajectory& traj, const KacKernel& kernel, double delta,
                   NoiseIntegrator& integ, const std::vector<double>& stops,
                   const StopCallback& at_stop, Density&& density) {
    if (std::abs(integ.time()) > 1e-15) throw std::invalid_argument("integrator must start at time 0");
    check_grid(traj, stops);
    const double alpha = traj.alpha;
    const TorusLattice& L = traj.lattice;
    SpinConfiguration config = SpinConfiguration::from_spins(traj.initial, kernel);
    RateModel model = traj.model_at(0.0);
    bool switched = !(traj.switch_time > 0.0);
    std::size_t next_stop = 0;
    const double last = stops.empty() ? 0.0 : stops.back();
    auto refresh_all = [&](double s) {
        for (std::size_t k = 0; k < L.size(); ++k) integ.set_density(k, density(config, k, model), s);
    };
    auto stops_before = [&](double s) {
        while (next_stop < stops.size() && stops[next_stop] < s) {
            integ.flush(stops[next_stop]);
            at_stop(next_stop++);
        }
    };
    auto do_switch = [&]() {
        const double s = traj.switch_time * alpha;
        stops_before(s);
        model = traj.model_at(traj.switch_time);
        refresh_all(s);
        switched = true;
    };

    refresh_all(0.0);
    for (const Event& e : traj.events) {
        const double s = e.time * alpha;
        if (s > last) break;
        if (!switched && e.time >= traj.switch_time) do_switch();
        stops_before(s);
        const std::size_t j = e.site;
        integ.jump(j, -2.0 * config.spin[j] / delta, s);
        update_field_after_flip(config, j, kernel);
        for_support(L, kernel, j, [&](std::size_t k) { integ.set_density(k, density(config, k, model), s); });
    }
    if (!switched && traj.switch_time * alpha <= last) do_switch();
    stops_before(kNever);
}

}  // namespace

void drive_noise(const Trajectory& traj, const KacKernel& kernel, double delta,
                 NoiseIntegrator& integrator, const std::vector<double>& stops,
                 const StopCallback& at_stop) {
    const double alpha = traj.alpha;
    drive_forward(traj, kernel, delta, integrator, stops, at_stop,
                  [&](const SpinConfiguration& c, std::size_t k, const RateModel& m) {
                      return compensator_density(c, k, m, delta, alpha);
                  });
}

void drive_noise_reversed(const Trajectory& tilde, const KacKernel& kernel, double delta,
                          NoiseIntegrator& integ, const std::vector<double>& stops,
                          const StopCallback& at_stop) {
    const double alpha = tilde.alpha;
    const double S = -integ.time();
    if (S < 0.0) throw std::invalid_argument("reversed drive starts at a negative time");
    if (S > tilde.horizon * alpha * (1.0 + kTimeSlack)) {
        throw WindowTooShort("negative-time window exceeds the extension trajectory");
    }
    if (!std::is_sorted(stops.begin(), stops.end())) throw std::invalid_argument("stops must be ascending");
    if (!stops.empty() && (stops.front() < -S * (1.0 + kTimeSlack) || stops.back() > 0.0)) {
        throw std::invalid_argument("reversed stops must lie in [-S, 0]");
    }
    const TorusLattice& L = tilde.lattice;
    const double micro_start = S / alpha;
    SpinConfiguration config = SpinConfiguration::from_spins(tilde.state_at(micro_start), kernel);
    RateModel model = tilde.model_at(micro_start);
    bool on_voter = micro_start >= tilde.switch_time;
    // M(s) = Mtilde(-s): the compensator density changes sign.
    auto density = [&](std::size_t k) { return -compensator_density(config, k, model, delta, alpha); };
    std::size_t next_stop = 0;
    auto refresh_all = [&](double s) {
        for (std::size_t k = 0; k < L.size(); ++k) integ.set_density(k, density(k), s);
    };
    auto stops_before = [&](double s) {
        while (next_stop < stops.size() && stops[next_stop] < s) {
            integ.flush(stops[next_stop]);
            at_stop(next_stop++);
        }
    };
    auto leave_voter = [&]() {
        const double s = -tilde.switch_time * alpha;
        stops_before(s);
        model = tilde.model;
        refresh_all(s);
        on_voter = false;
    };

    refresh_all(-S);
    auto it = std::upper_bound(tilde.events.begin(), tilde.events.end(), micro_start,
                               [](double t, const Event& e) { return t < e.time; });
    while (it != tilde.events.begin()) {
        --it;
        if (on_voter && it->time < tilde.switch_time) leave_voter();
        const double s = -it->time * alpha;
        stops_before(s);
        const std::size_t j = it->site;
        integ.jump(j, -2.0 * config.spin[j] / delta, s);
        update_field_after_flip(config, j, kernel);
        for_support(L, kernel, j, [&](std::size_t k) { integ.set_density(k, density(k), s); });
    }
    if (on_voter) leave_voter();
    stops_before(kNever);
}

CoarseField stochastic_convolution_Y(const Trajectory& traj, const KacKernel& kernel,
                                     const SpectralCalculus& calc, const std::vector<double>& grid) {
    CoarseField out;
    out.times = grid;
    out.seed = traj.seed;
    out.kernel = "Y";
    NoiseIntegrator integ(calc, 0.0);
    const double r = 1.0 / std::numbers::sqrt2;
    drive_noise(traj, kernel, calc.scaling().delta, integ, grid, [&](std::size_t) {
        out.values.push_back(integ.field([&](double k, std::size_t) { return r * k; }));
    });
    return out;
}

double stochastic_convolution_Y_stieltjes(const Trajectory& traj, const KacKernel& kernel,
                                          const SpectralCalculus& calc, double t,
                                          std::size_t site, double step) {
    if (step <= 0.0) throw std::invalid_argument("step must be positive");
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / step)));
    std::vector<double> grid(n + 1);
    for (std::size_t m = 0; m <= n; ++m) grid[m] = t * static_cast<double>(m) / n;
    const MartingalePath mp = martingale_path(traj, kernel, calc.scaling().delta, grid);
    const std::size_t M = traj.lattice.size();
    double acc = 0.0;
    Field dM(M);
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t k = 0; k < M; ++k) dM[k] = mp.rescaled(m + 1, k) - mp.rescaled(m, k);
        acc += calc.tilde_heat(dM, t - grid[m])[site];
    }
    return acc / std::numbers::sqrt2;
}

namespace {

constexpr int kMaxDerivative = 12;

// Derivatives 0..kMaxDerivative of b(u) = exp(-1/(1-u^2)).
std::array<double, kMaxDerivative + 1> bump_derivatives(double u) {
    std::array<double, kMaxDerivative + 1> out{};
    if (std::abs(u) >= 1.0) return out;
    using namespace boost::math::differentiation;
    const auto x = make_fvar<double, kMaxDerivative>(u);
    const auto y = exp(-1.0 / (1.0 - x * x));
    for (int k = 0; k <= kMaxDerivative; ++k) out[k] = y.derivative(k);
    return out;
}

const std::array<double, kMaxDerivative + 1>& bump_derivative_sup() {
    static const std::array<double, kMaxDerivative + 1> sup = [] {
        std::array<double, kMaxDerivative + 1> s{};
        const int n = 8000;
        for (int i = 1; i < n; ++i) {
            const auto v = bump_derivatives(-1.0 + 2.0 * i / n);
            for (int k = 0; k <= kMaxDerivative; ++k) s[k] = std::max(s[k], std::abs(v[k]));
        }
        return s;
    }();
    return sup;
}

}  // namespace

TestFunctionDictionary TestFunctionDictionary::standard(const ScalingParameters& s, double eta,
                                                        int refinement) {
    if (!(eta < 0.0)) throw std::invalid_argument("eta must be negative");
    if (refinement < 0) throw std::invalid_argument("refinement must be >= 0");
    TestFunctionDictionary dict;
    dict.d = s.d();
    dict.r = static_cast<int>(std::floor(-eta)) + 1;
    if (2 * dict.r > kMaxDerivative) throw std::invalid_argument("eta too negative for the dictionary");
    dict.eps = s.eps;
    dict.mesoscale = s.mesoscale;
    dict.refinement = refinement;
    const double root = std::sqrt(static_cast<double>(dict.d));
    const auto& sup = bump_derivative_sup();
    auto normalise = [&](TestFunction phi) {
        // C^r norm: max over |m| <= r of prod_a root^(k_a + m_a) sup |b^(k_a + m_a)|
        double norm = 0.0;
        std::array<int, 3> m{};
        std::function<void(int, int)> rec = [&](int a, int left) {
            if (a == dict.d) {
                double v = 1.0;
                for (int i = 0; i < dict.d; ++i) {
                    const int o = phi.order[i] + m[i];
                    v *= std::pow(root, o) * sup[o];
                }
                norm = std::max(norm, v);
                return;
            }
            for (int k = 0; k <= left; ++k) {
                m[a] = k;
                rec(a + 1, left - k);
            }
            m[a] = 0;
        };
        rec(0, dict.r);
        phi.scale = 1.0 / norm;
        return phi;
    };
    dict.members.push_back(normalise({}));
    for (int a = 0; a < dict.d; ++a) {
        for (int o = 1; o <= dict.r; ++o) {
            TestFunction phi;
            phi.order[a] = o;
            dict.members.push_back(normalise(phi));
        }
    }
    const double ratio = std::pow(2.0, -1.0 / std::pow(2.0, refinement));
    for (double l = 1.0; l >= s.eps * (1.0 - 1e-12); l *= ratio) dict.scales.push_back(l);
    if (dict.scales.back() > s.eps * (1.0 + 1e-12)) dict.scales.push_back(s.eps);
    return dict;
}

int TestFunctionDictionary::stride(double lambda) const {
    const double target = lambda / (std::pow(2.0, 1 + refinement) * eps);
    int p = 1;
    while (2.0 * p <= target) p *= 2;
    return p;
}

double TestFunctionDictionary::evaluate(const TestFunction& phi, const std::array<double, 3>& y) const {
    const double root = std::sqrt(static_cast<double>(d));
    double v = phi.scale;
    for (int a = 0; a < d; ++a) {
        const double u = y[a] * root;
        if (std::abs(u) >= 1.0) return 0.0;
        v *= bump_derivatives(u)[phi.order[a]] * std::pow(root, phi.order[a]);
    }
    return v;
}

double TestFunctionDictionary::integral(const TestFunction& phi) const {
    for (int a = 0; a < d; ++a) {
        if (phi.order[a] > 0) return 0.0;
    }
    static const double one = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [](double u) { return bump_derivatives(u)[0]; }, -1.0, 1.0, 15, 1e-14);
    // each axis contributes int b(u sqrt d) du = one / sqrt d
    return phi.scale * std::pow(one / std::sqrt(static_cast<double>(d)), d);
}

Field pairings(const Field& f, const TorusLattice& L, const TestFunctionDictionary& /*dict*/,
               const TestFunction& phi, double lambda) {
    if (f.size() != L.size()) throw std::invalid_argument("field does not match the lattice");
    const double eps = L.eps();
    const double root = std::sqrt(static_cast<double>(L.d));
    Field cur = f;
    Field next(f.size());
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::size_t acc = 1;
    for (int a = L.d - 1; a >= 0; --a) {
        stride[a] = acc;
        acc *= static_cast<std::size_t>(L.side);
    }
    for (int a = 0; a < L.d; ++a) {
        // taps w(m) = b^(k)(m eps root / lambda) root^k for |m eps root / lambda| < 1
        std::vector<int> offs;
        std::vector<double> taps;
        const int reach = static_cast<int>(std::floor(lambda / (eps * root)));
        for (int m = -reach; m <= reach; ++m) {
            const double u = m * eps * root / lambda;
            if (std::abs(u) >= 1.0) continue;
            const double w = bump_derivatives(u)[phi.order[a]] * std::pow(root, phi.order[a]);
            if (w == 0.0) continue;
            offs.push_back(m);
            taps.push_back(w);
        }
        const std::size_t sa = stride[a];
        const int side = L.side;
        for (std::size_t x = 0; x < cur.size(); ++x) {
            const int xa = static_cast<int>((x / sa) % side);
            const std::size_t base = x - static_cast<std::size_t>(xa) * sa;
            double s = 0.0;
            for (std::size_t t = 0; t < offs.size(); ++t) {
                int ya = (xa + offs[t]) % side;
                if (ya < 0) ya += side;
                s += taps[t] * cur[base + static_cast<std::size_t>(ya) * sa];
            }
            next[x] = s;
        }
        std::swap(cur, next);
    }
    const double norm = phi.scale * std::pow(eps / lambda, L.d);
    for (double& v : cur) v *= norm;
    return cur;
}

namespace {

bool on_subgrid(const TorusLattice& L, std::size_t site, int stride) {
    if (stride <= 1) return true;
    const Coord c = L.coords(site);
    for (int a = 0; a < L.d; ++a) {
        if (c[a] % stride != 0) return false;
    }
    return true;
}

}  // namespace

BesovEstimate besov_seminorm(const Field& f, const TorusLattice& L, double eta,
                             const TestFunctionDictionary& dict) {
    BesovEstimate est;
    est.eta = eta;
    for (double lambda : dict.scales) {
        const bool above = lambda >= dict.mesoscale;
        const double weight = std::pow(above ? lambda : dict.mesoscale, -eta);
        const int stride = dict.stride(lambda);
        for (std::size_t m = 0; m < dict.members.size(); ++m) {
            const Field p = pairings(f, L, dict, dict.members[m], lambda);
            PairingEntry best{lambda, m, 0, 0.0, -1.0};
            for (std::size_t x = 0; x < p.size(); ++x) {
                if (!on_subgrid(L, x, stride)) continue;
                const double w = weight * std::abs(p[x]);
                if (w > best.weighted) best = {lambda, m, x, p[x], w};
            }
            est.table.push_back(best);
            if (above) {
                est.above = std::max(est.above, best.weighted);
            } else {
                est.below = std::max(est.below, best.weighted);
            }
        }
    }
    est.value = est.above + est.below;
    return est;
}

double continuum_pairing(const ContinuumField& f, const TestFunctionDictionary& dict,
                         const TestFunction& phi, const std::array<double, 3>& x, double lambda,
                         double tolerance) {
    using boost::math::quadrature::gauss_kronrod;
    const double h = 1.0 / std::sqrt(static_cast<double>(dict.d));
    std::array<double, 3> z{};
    // int f(x + lambda z) phi(z) dz over the support cube, nested over axes
    std::function<double(int)> nest = [&](int a) -> double {
        if (a == dict.d) {
            std::array<double, 3> y{};
            for (int i = 0; i < dict.d; ++i) y[i] = x[i] + lambda * z[i];
            return f(y) * dict.evaluate(phi, z);
        }
        return gauss_kronrod<double, 31>::integrate(
            [&](double u) {
                z[a] = u;
                return nest(a + 1);
            },
            -h, h, 12, tolerance);
    };
    return nest(0);
}

double besov_distance(const Field& f_gamma, const TorusLattice& L, const ContinuumField& f,
                      double eta, const TestFunctionDictionary& dict) {
    double b1 = 0.0, b2 = 0.0, b3 = 0.0;
    for (double lambda : dict.scales) {
        const bool above = lambda >= dict.mesoscale;
        const int stride = dict.stride(lambda);
        for (const TestFunction& phi : dict.members) {
            const Field p = pairings(f_gamma, L, dict, phi, lambda);
            for (std::size_t x = 0; x < p.size(); ++x) {
                if (!on_subgrid(L, x, stride)) continue;
                const double cont = continuum_pairing(f, dict, phi, L.position(x), lambda);
                if (above) {
                    b1 = std::max(b1, std::pow(lambda, -eta) * std::abs(p[x] - cont));
                } else {
                    b2 = std::max(b2, std::pow(dict.mesoscale, -eta) * std::abs(p[x]));
                    b3 = std::max(b3, std::pow(lambda, -eta) * std::abs(cont));
                }
            }
        }
    }
    return b1 + b2 + b3;
}

double error_term(double X, const ScalingParameters& s, double beta) {
    const double x = beta * s.delta * X;
    double r;
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        r = x2 * x2 * x * (2.0 / 15.0 - x2 * (17.0 / 315.0 - x2 * 62.0 / 2835.0));
    } else {
        r = std::tanh(x) - x + x * x * x / 3.0;
    }
    return r / (s.delta * s.alpha);
}

Field error_term(const Field& X, const ScalingParameters& s, double beta) {
    Field out(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) out[k] = error_term(X[k], s, beta);
    return out;
}

MildResidual mild_residual(const Trajectory& traj, const KacKernel& kernel,
                           const SpectralCalculus& calc, double t, double h) {
    const ScalingParameters& s = calc.scaling();
    if (traj.model.variant != RateVariant::Glauber) throw std::invalid_argument("mild residual needs Glauber rates");
    if (traj.switch_time * traj.alpha < t) throw std::invalid_argument("mild residual window crosses the voter switch");
    if (t > traj.horizon * traj.alpha * (1.0 + kTimeSlack)) throw WindowTooShort("residual time beyond horizon");
    const double beta = traj.model.beta;
    const double alpha = traj.alpha;
    const double delta = s.delta;
    const TorusLattice& L = traj.lattice;
    const std::size_t M = L.size();
    const bool exact = h <= 0.0;

    SpinConfiguration config = SpinConfiguration::from_spins(traj.initial, kernel);
    const Field X0 = [&] {
        Field x(config.h);
        for (double& v : x) v /= delta;
        return x;
    }();
    Field last(M, 0.0), IL(M, 0.0), IX(M, 0.0), IX3(M, 0.0), IE(M, 0.0);
    auto integrate = [&](std::size_t k, double now) {
        const double dt = now - last[k];
        if (dt <= 0.0) return;
        const double hk = config.h[k];
        IL[k] += (-config.spin[k] + std::tanh(beta * hk)) * dt / alpha;
        if (exact) {
            const double X = hk / delta;
            IX[k] += X * dt;
            IX3[k] += X * X * X * dt;
            IE[k] += error_term(X, s, beta) * dt;
        }
        last[k] = now;
    };
    std::size_t n = 0;
    double step = 0.0;
    if (!exact) {
        n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(t / h)));
        step = t / static_cast<double>(n);
    }
    auto sample = [&](std::size_t m) {
        const double w = (m == 0 || m == n) ? 0.5 * step : step;
        for (std::size_t k = 0; k < M; ++k) {
            const double X = config.h[k] / delta;
            IX[k] += w * X;
            IX3[k] += w * X * X * X;
            IE[k] += w * error_term(X, s, beta);
        }
    };
    std::size_t next_sample = 0;
    for (const Event& e : traj.events) {
        const double se = e.time * alpha;
        if (se > t) break;
        if (!exact) {
            while (next_sample <= n && step * static_cast<double>(next_sample) < se) sample(next_sample++);
        }
        for_support(L, kernel, e.site, [&](std::size_t k) { integrate(k, se); });
        update_field_after_flip(config, e.site, kernel);
    }
    if (!exact) {
        while (next_sample <= n) sample(next_sample++);
    }
    for (std::size_t k = 0; k < M; ++k) integrate(k, t);

    Field Mt(M);
    for (std::size_t k = 0; k < M; ++k) {
        Mt[k] = (config.spin[k] - traj.initial[k] - IL[k]) / delta;
    }
    const Field KM = calc.convolve(Mt);
    const Field KIX = calc.convolve(IX);
    const Field KIX3 = calc.convolve(IX3);
    const Field KIE = calc.convolve(IE);
    MildResidual out;
    out.time = t;
    out.step = step;
    out.residual.resize(M);
    const double c3 = beta * beta * beta * delta * delta / (3.0 * alpha);
    for (std::size_t k = 0; k < M; ++k) {
        const double drift = (KIX[k] - IX[k]) / alpha + (beta - 1.0) / alpha * KIX[k] - c3 * KIX3[k] + KIE[k];
        const double X = config.h[k] / delta;
        out.residual[k] = X - X0[k] - KM[k] - drift;
        out.max_abs = std::max(out.max_abs, std::abs(out.residual[k]));
        out.scale = std::max(out.scale, std::abs(X));
    }
    return out;
}

MildResidual mild_form_residual(const Trajectory& traj, const KacKernel& kernel,
                                const SpectralCalculus& calc, double t) {
    const ScalingParameters& s = calc.scaling();
    if (traj.model.variant != RateVariant::Glauber) throw std::invalid_argument("mild residual needs Glauber rates");
    if (traj.switch_time * traj.alpha < t) throw std::invalid_argument("mild residual window crosses the voter switch");
    const double beta = traj.model.beta;
    const double alpha = traj.alpha;
    const double delta = s.delta;
    const double lin = (beta - 1.0) / alpha;
    const double cube = beta * beta * beta / 3.0;
    NoiseIntegrator integ(calc, 0.0);
    drive_forward(traj, kernel, delta, integ, {t}, [&](std::size_t) {},
                  [&](const SpinConfiguration& c, std::size_t k, const RateModel& m) {
                      const double X = c.h[k] / delta;
                      const double G = -cube * X * X * X + lin * X + error_term(X, s, m.beta);
                      return G + compensator_density(c, k, m, delta, alpha);
                  });
    const Field Z = integ.field([](double k, std::size_t) { return k; });
    Field X0(traj.lattice.size());
    {
        const Field h0 = averaged_field(traj.initial, kernel);
        for (std::size_t k = 0; k < X0.size(); ++k) X0[k] = h0[k] / delta;
    }
    const Field P0 = calc.heat(X0, t);
    const Field ht = averaged_field(traj.state_at(t / alpha), kernel);
    MildResidual out;
    out.time = t;
    out.residual.resize(X0.size());
    for (std::size_t k = 0; k < X0.size(); ++k) {
        const double X = ht[k] / delta;
        out.residual[k] = X - P0[k] - Z[k];
        out.max_abs = std::max(out.max_abs, std::abs(out.residual[k]));
        out.scale = std::max(out.scale, std::abs(X));
    }
    return out;
}

namespace {

RemainderResult remainder_attempt(const FieldPath& Y, const Field& X0, const SpectralCalculus& calc,
                                  const RemainderParameters& p, double T, double step,
                                  double tolerance, int max_iterations) {
    const ScalingParameters& s = calc.scaling();
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(T / step - 1e-9)));
    const double h = T / static_cast<double>(n);
    const std::size_t M = X0.size();
    const FftPlan& plan = calc.plan();
    const std::size_t H = plan.half_size();
    const auto& khat = calc.spectrum().half;
    std::vector<double> eh(H);
    for (std::size_t i = 0; i < H; ++i) eh[i] = heat_symbol(khat[i], h, s);

    RemainderResult out;
    out.step = h;
    out.times.resize(n + 1);
    std::vector<Field> ys(n + 1), base(n + 1);
    for (std::size_t m = 0; m <= n; ++m) {
        out.times[m] = h * static_cast<double>(m);
        Field y = Y ? Y(out.times[m]) : Field{};
        if (y.empty()) y.assign(M, 0.0);
        if (y.size() != M) throw std::invalid_argument("Y path does not match the lattice");
        ys[m] = std::move(y);
        base[m] = calc.heat(X0, out.times[m]);
    }
    const double cubic = -p.beta * p.beta * p.beta / 3.0 + p.B;
    const double linear = p.C + p.A;
    auto source = [&](const Field& v, const Field& y, Field& f) {
        for (std::size_t k = 0; k < M; ++k) {
            const double u = v[k] + std::numbers::sqrt2 * y[k];
            f[k] = cubic * u * u * u + linear * u + (p.error_term ? error_term(u, s, p.beta) : 0.0);
        }
    };
    std::vector<Field> v = base;
    Field f(M);
    std::vector<Complex> fprev(H), fcur(H), acc(H);
    for (int it = 1; it <= max_iterations; ++it) {
        std::vector<Field> w(n + 1);
        w[0] = base[0];
        std::fill(acc.begin(), acc.end(), Complex(0.0, 0.0));
        source(v[0], ys[0], f);
        plan.forward(f.data(), fprev.data());
        for (std::size_t m = 1; m <= n; ++m) {
            source(v[m], ys[m], f);
            plan.forward(f.data(), fcur.data());
            for (std::size_t i = 0; i < H; ++i) {
                acc[i] = eh[i] * (acc[i] + 0.5 * h * khat[i] * fprev[i]) + 0.5 * h * khat[i] * fcur[i];
            }
            std::vector<Complex> tmp = acc;
            Field I = calc.inverse_scaled(tmp);
            w[m].resize(M);
            for (std::size_t k = 0; k < M; ++k) w[m][k] = base[m][k] + I[k];
            std::swap(fprev, fcur);
        }
        double diff = 0.0;
        for (std::size_t m = 0; m <= n; ++m) {
            for (std::size_t k = 0; k < M; ++k) {
                const double dv = std::abs(w[m][k] - v[m][k]);
                if (!std::isfinite(w[m][k])) throw NoConvergence("remainder iteration diverged");
                diff = std::max(diff, dv);
            }
        }
        v = std::move(w);
        out.iterations = it;
        out.last_difference = diff;
        if (diff < tolerance) {
            out.v = std::move(v);
            return out;
        }
    }
    throw NoConvergence("remainder iteration did not reach the tolerance");
}

}  // namespace

RemainderResult remainder_solve(const FieldPath& Y, const Field& X0, const SpectralCalculus& calc,
                                const RemainderParameters& p, double T, double step,
                                double tolerance, int max_iterations) {
    if (T < 0.0) throw std::invalid_argument("T must be >= 0");
    if (X0.size() != calc.plan().real_size()) throw std::invalid_argument("X0 does not match the lattice");
    double h = step > 0.0 ? step : calc.scaling().alpha / 10.0;
    for (int retry = 0; retry <= 4; ++retry) {
        try {
            RemainderResult r = remainder_attempt(Y, X0, calc, p, T, h, tolerance, max_iterations);
            r.retries = retry;
            return r;
        } catch (const NoConvergence&) {
            h *= 0.5;
        }
    }
    throw NoConvergence("remainder iteration failed after four step halvings");
}

void write_field_csv(const std::string& path, const CoarseField& f, const TorusLattice& L) {
    write_atomically(path, [&](std::ostream& out) {
        out << "# schema field v1 kernel=" << f.kernel << " seed=" << f.seed << '\n';
        out << "time,site";
        for (int a = 0; a < L.d; ++a) out << ",x" << a + 1;
        out << ",value\n";
        for (std::size_t t = 0; t < f.times.size(); ++t) {
            for (std::size_t k = 0; k < f.values[t].size(); ++k) {
                const auto x = L.position(k);
                out << f.times[t] << ',' << k;
                for (int a = 0; a < L.d; ++a) out << ',' << x[a];
                out << ',' << f.values[t][k] << '\n';
            }
        }
    });
}

void write_besov_csv(const std::string& path, const BesovEstimate& e) {
    write_atomically(path, [&](std::ostream& out) {
        out << "# schema besov-estimator v1 eta=" << e.eta << " estimate=" << e.value
            << " above=" << e.above << " below=" << e.below << '\n';
        out << "lambda,member,site,pairing,weighted_estimate\n";
        for (const auto& r : e.table) {
            out << r.lambda << ',' << r.member << ',' << r.site << ',' << r.pairing << ','
                << r.weighted << '\n';
        }
    });
}

}  // namespace isingkac
