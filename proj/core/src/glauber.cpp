#include "isingkac/glauber.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "isingkac/binary_io.hpp"

namespace isingkac {

double glauber_rate(const SpinConfiguration& config, std::size_t j, const RateModel& model) {
    return flip_rate(model.variant, model.beta, config.spin[j], config.h[j]);
}

std::vector<std::int8_t> Trajectory::state_at(double micro_time) const {
    std::vector<std::int8_t> s = initial;
    for (const Event& e : events) {
        if (e.time > micro_time) break;
        s[e.site] = static_cast<std::int8_t>(-s[e.site]);
    }
    return s;
}

namespace {

// Complete binary tree of partial sums over site rates.
class SumTree {
public:
    explicit SumTree(std::size_t n) : leaves_(1) {
        while (leaves_ < n) leaves_ *= 2;
        node_.assign(2 * leaves_, 0.0);
    }
    void set(std::size_t i, double v) {
        std::size_t p = i + leaves_;
        node_[p] = v;
        for (p /= 2; p >= 1; p /= 2) node_[p] = node_[2 * p] + node_[2 * p + 1];
    }
    double total() const { return node_[1]; }
    std::size_t find(double u) const {
        std::size_t p = 1;
        while (p < leaves_) {
            if (u < node_[2 * p] || node_[2 * p + 1] <= 0.0) {
                p = 2 * p;
            } else {
                u -= node_[2 * p];
                p = 2 * p + 1;
            }
        }
        return p - leaves_;
    }

private:
    std::size_t leaves_;
    std::vector<double> node_;
};

StreamResult stream_thinning(SpinConfiguration& config, const KacKernel& kernel,
                             const RateModel& model, double t0, double t_end, Rng& rng,
                             const FlipObserver& observer, std::uint64_t max_events) {
    StreamResult res;
    const std::size_t M = config.size();
    const double rate = static_cast<double>(M);
    KahanSum clock(t0);
    std::uint64_t rejected = 0;
    while (max_events == 0 || res.events < max_events) {
        clock += rng.exponential(rate);
        const double t = clock.value();
        if (t > t_end) break;
        const std::size_t j = rng.index(M);
        const double c = glauber_rate(config, j, model);
        if (rng.uniform() < c) {
            update_field_after_flip(config, j, kernel);
            ++res.events;
            rejected = 0;
            res.end_time = t;
            if (observer) observer(t, j, config);
        } else if (++rejected > 64 * M) {
            rejected = 0;
            double total = 0.0;
            for (std::size_t k = 0; k < M; ++k) total += glauber_rate(config, k, model);
            if (total <= 0.0) {
                res.rate_underflow = true;
                break;
            }
        }
    }
    if (!res.rate_underflow && (max_events == 0 || res.events < max_events)) res.end_time = t_end;
    return res;
}

StreamResult stream_sum_tree(SpinConfiguration& config, const KacKernel& kernel,
                             const RateModel& model, double t0, double t_end, Rng& rng,
                             const FlipObserver& observer, std::uint64_t max_events) {
    StreamResult res;
    const std::size_t M = config.size();
    const TorusLattice& L = config.lattice;
    SumTree tree(M);
    for (std::size_t k = 0; k < M; ++k) tree.set(k, glauber_rate(config, k, model));
    KahanSum clock(t0);
    while (max_events == 0 || res.events < max_events) {
        const double total = tree.total();
        if (total <= 0.0) {
            res.rate_underflow = true;
            break;
        }
        clock += rng.exponential(total);
        const double t = clock.value();
        if (t > t_end) break;
        const std::size_t j = std::min(tree.find(rng.uniform() * total), M - 1);
        update_field_after_flip(config, j, kernel);
        tree.set(j, glauber_rate(config, j, model));
        for (const Coord& off : kernel.offsets) {
            const std::size_t k = L.shifted(j, off);
            tree.set(k, glauber_rate(config, k, model));
        }
        ++res.events;
        res.end_time = t;
        if (observer) observer(t, j, config);
    }
    if (!res.rate_underflow && (max_events == 0 || res.events < max_events)) res.end_time = t_end;
    return res;
}

}  // namespace

StreamResult simulate_stream(SpinConfiguration& config, const KacKernel& kernel,
                             const RateModel& model, double t0, double t_end, Rng& rng,
                             const FlipObserver& observer, const SimulationOptions& options) {
    if (model.variant == RateVariant::Frozen) return {t0, 0, true};
    if (options.sampler == Sampler::SumTree) {
        return stream_sum_tree(config, kernel, model, t0, t_end, rng, observer, options.max_events);
    }
    return stream_thinning(config, kernel, model, t0, t_end, rng, observer, options.max_events);
}

Trajectory simulate(const SpinConfiguration& initial, const KacKernel& kernel,
                    const RateModel& model, double horizon, double alpha, std::uint64_t seed,
                    const SimulationOptions& options) {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    Trajectory traj;
    traj.lattice = initial.lattice;
    traj.gamma = kernel.gamma;
    traj.alpha = alpha;
    traj.initial = initial.spin;
    traj.horizon = horizon / alpha;
    traj.seed = seed;
    traj.model = model;
    SpinConfiguration config = initial;
    Rng rng(seed);
    const StreamResult res = simulate_stream(
        config, kernel, model, 0.0, traj.horizon, rng,
        [&](double t, std::size_t j, const SpinConfiguration&) {
            traj.events.push_back({t, static_cast<std::uint32_t>(j)});
        },
        options);
    traj.rate_underflow = res.rate_underflow;
    return traj;
}

Trajectory switch_to_voter(const Trajectory& traj, const KacKernel& kernel, double tau) {
    if (tau == kNever) return traj;
    if (tau < 0.0) throw std::invalid_argument("switch time must be nonnegative");
    const double micro = tau / traj.alpha;
    if (micro > traj.horizon) return traj;
    Trajectory out = traj;
    out.events.clear();
    for (const Event& e : traj.events) {
        if (e.time > micro) break;
        out.events.push_back(e);
    }
    out.switch_time = micro;
    out.rate_underflow = false;
    SpinConfiguration config = SpinConfiguration::from_spins(out.state_at(micro), kernel);
    Rng rng(derive_seed(traj.seed, 0x766f746572ULL));
    const StreamResult res = simulate_stream(
        config, kernel, {RateVariant::Voter, traj.model.beta}, micro, traj.horizon, rng,
        [&](double t, std::size_t j, const SpinConfiguration&) {
            out.events.push_back({t, static_cast<std::uint32_t>(j)});
        });
    out.rate_underflow = res.rate_underflow;
    return out;
}

namespace {

// Replays a trajectory and integrates c(sigma(s), k) and sigma(s,k) c(sigma(s), k)
// exactly between events for a set of monitored sites.
class Replay {
public:
    Replay(const Trajectory& traj, const KacKernel& kernel, std::vector<std::size_t> sites)
        : traj_(traj), kernel_(kernel), L_(traj.lattice), spin_(traj.initial) {
        all_ = sites.empty();
        if (all_) {
            sites.resize(L_.size());
            for (std::size_t k = 0; k < sites.size(); ++k) sites[k] = k;
            config_ = SpinConfiguration::from_spins(traj.initial, kernel);
        } else {
            for (std::size_t k : sites) {
                if (k >= L_.size()) throw std::out_of_range("monitored site outside the lattice");
            }
            const Field h = averaged_field(traj.initial, kernel);
            for (std::size_t k : sites) {
                h_.push_back(h[k]);
                coords_.push_back(L_.coords(k));
            }
        }
        sites_ = std::move(sites);
        const std::size_t n = sites_.size();
        last_.assign(n, 0.0);
        c_.assign(n, 0.0);
        int_c_.assign(n, 0.0);
        int_sc_.assign(n, 0.0);
        model_ = traj.model_at(0.0);
        for (std::size_t i = 0; i < n; ++i) c_[i] = rate(i);
    }

    const std::vector<std::size_t>& sites() const { return sites_; }

    // Applies all events with time <= t, then integrates every site up to t.
    void advance_to(double t) {
        while (next_ < traj_.events.size() && traj_.events[next_].time <= t) {
            const Event& e = traj_.events[next_];
            if (!switched_ && e.time >= traj_.switch_time) do_switch();
            apply(e);
            ++next_;
        }
        if (!switched_ && t >= traj_.switch_time) do_switch();
        for (std::size_t i = 0; i < sites_.size(); ++i) integrate(i, t);
    }

    double martingale(std::size_t i) const {
        const std::size_t k = sites_[i];
        return spin_[k] - traj_.initial[k] + 2.0 * int_sc_[i];
    }
    double int_rate(std::size_t i) const { return int_c_[i]; }

private:
    double field(std::size_t i) const { return all_ ? config_.h[sites_[i]] : h_[i]; }
    double rate(std::size_t i) const {
        return flip_rate(model_.variant, model_.beta, spin_[sites_[i]], field(i));
    }
    void integrate(std::size_t i, double t) {
        const double dt = t - last_[i];
        if (dt <= 0.0) return;
        int_c_[i] += c_[i] * dt;
        int_sc_[i] += spin_[sites_[i]] * c_[i] * dt;
        last_[i] = t;
    }
    void do_switch() {
        const double ts = traj_.switch_time;
        for (std::size_t i = 0; i < sites_.size(); ++i) integrate(i, ts);
        model_ = traj_.model_at(ts);
        for (std::size_t i = 0; i < sites_.size(); ++i) c_[i] = rate(i);
        switched_ = true;
    }
    void apply(const Event& e) {
        const std::size_t j = e.site;
        const double old = spin_[j];
        if (all_) {
            integrate(j, e.time);
            for (const Coord& off : kernel_.offsets) integrate(L_.shifted(j, off), e.time);
            update_field_after_flip(config_, j, kernel_);
            spin_[j] = config_.spin[j];
            c_[j] = rate(j);
            for (const Coord& off : kernel_.offsets) {
                const std::size_t k = L_.shifted(j, off);
                c_[k] = rate(k);
            }
            return;
        }
        const Coord cj = L_.coords(j);
        touched_.clear();
        for (std::size_t i = 0; i < sites_.size(); ++i) {
            Coord diff{0, 0, 0};
            for (int a = 0; a < L_.d; ++a) diff[a] = coords_[i][a] - cj[a];
            const double w = kernel_.dense[L_.index(diff)];
            if (w == 0.0 && sites_[i] != j) continue;
            integrate(i, e.time);
            h_[i] += -2.0 * old * w;
            touched_.push_back(i);
        }
        spin_[j] = static_cast<std::int8_t>(-spin_[j]);
        for (std::size_t i : touched_) c_[i] = rate(i);
    }

    const Trajectory& traj_;
    const KacKernel& kernel_;
    TorusLattice L_;
    std::vector<std::int8_t> spin_;
    SpinConfiguration config_;
    bool all_ = false;
    std::vector<std::size_t> sites_;
    std::vector<double> h_;
    std::vector<Coord> coords_;
    std::vector<double> last_, c_, int_c_, int_sc_;
    std::vector<std::size_t> touched_;
    RateModel model_;
    bool switched_ = false;
    std::size_t next_ = 0;
};

}  // namespace

MartingaleAndBracket martingale_and_bracket(const Trajectory& traj, const KacKernel& kernel,
                                            double delta, const std::vector<double>& grid,
                                            std::vector<std::size_t> sites) {
    if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("grid must be sorted");
    Replay replay(traj, kernel, std::move(sites));
    MartingaleAndBracket out;
    out.martingale.times = grid;
    out.martingale.sites = replay.sites();
    out.martingale.delta = delta;
    out.bracket.times = grid;
    out.bracket.sites = replay.sites();
    const std::size_t n = replay.sites().size();
    out.martingale.micro.reserve(grid.size() * n);
    out.bracket.values.reserve(grid.size() * n);
    const double scale = 4.0 / (delta * delta);
    for (double g : grid) {
        if (g < 0.0) throw std::invalid_argument("grid times must be nonnegative");
        const double micro = g / traj.alpha;
        if (micro > traj.horizon * (1.0 + 1e-12)) throw std::invalid_argument("grid exceeds horizon");
        replay.advance_to(micro);
        for (std::size_t i = 0; i < n; ++i) {
            out.martingale.micro.push_back(replay.martingale(i));
            out.bracket.values.push_back(scale * replay.int_rate(i));
        }
    }
    return out;
}

MartingalePath martingale_path(const Trajectory& traj, const KacKernel& kernel, double delta,
                               const std::vector<double>& grid, std::vector<std::size_t> sites) {
    return martingale_and_bracket(traj, kernel, delta, grid, std::move(sites)).martingale;
}

BracketPath bracket_path(const Trajectory& traj, const KacKernel& kernel, double delta,
                         const std::vector<double>& grid, std::vector<std::size_t> sites) {
    return martingale_and_bracket(traj, kernel, delta, grid, std::move(sites)).bracket;
}

double stopping_time_tau1(const std::vector<double>& times, const std::vector<Field>& X,
                          double threshold, const std::function<double(const Field&)>& seminorm) {
    if (threshold == kNever) return kNever;
    for (std::size_t i = 0; i < times.size() && i < X.size(); ++i) {
        if (seminorm(X[i]) >= threshold) return times[i];
    }
    return kNever;
}

double stopping_time_tau2(const std::vector<double>& times, const std::vector<Field>& X_under,
                          const std::vector<Field>& X, double c_under, double threshold,
                          double mesoscale, double exponent,
                          const std::function<double(const Field&)>& seminorm) {
    if (threshold == kNever) return kNever;
    const double level = threshold * std::pow(mesoscale, exponent);
    for (std::size_t i = 0; i < times.size() && i < X.size() && i < X_under.size(); ++i) {
        Field p(X[i].size());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = X_under[i][k] * X[i][k] - c_under;
        if (seminorm(p) >= level) return times[i];
    }
    return kNever;
}

std::vector<std::int8_t> decode_state(std::uint64_t code, std::size_t sites) {
    std::vector<std::int8_t> s(sites);
    for (std::size_t i = 0; i < sites; ++i) s[i] = ((code >> i) & 1U) ? 1 : -1;
    return s;
}

std::uint64_t encode_state(const std::vector<std::int8_t>& spins) {
    std::uint64_t code = 0;
    for (std::size_t i = 0; i < spins.size(); ++i) {
        if (spins[i] > 0) code |= std::uint64_t{1} << i;
    }
    return code;
}

namespace {

void check_enumerable(const KacKernel& kernel) {
    if (kernel.lattice.size() > 24) throw std::invalid_argument("lattice too large to enumerate");
}

}  // namespace

std::vector<double> gibbs_distribution(const KacKernel& kernel, double beta) {
    check_enumerable(kernel);
    const std::size_t M = kernel.lattice.size();
    const std::uint64_t count = std::uint64_t{1} << M;
    std::vector<double> logw(count);
    for (std::uint64_t c = 0; c < count; ++c) logw[c] = -beta * hamiltonian(decode_state(c, M), kernel);
    const double top = *std::max_element(logw.begin(), logw.end());
    std::vector<double> p(count);
    for (std::uint64_t c = 0; c < count; ++c) p[c] = std::exp(logw[c] - top);
    const double z = pairwise_sum(p);
    for (double& v : p) v /= z;
    return p;
}

double detailed_balance_residual(const KacKernel& kernel, const RateModel& model) {
    check_enumerable(kernel);
    const std::size_t M = kernel.lattice.size();
    const std::uint64_t count = std::uint64_t{1} << M;
    std::vector<double> weight(count);
    std::vector<Field> fields(count);
    for (std::uint64_t c = 0; c < count; ++c) {
        const auto s = decode_state(c, M);
        fields[c] = averaged_field(s, kernel);
        weight[c] = std::exp(-model.beta * hamiltonian(s, kernel));
    }
    double worst = 0.0;
    for (std::uint64_t c = 0; c < count; ++c) {
        for (std::size_t j = 0; j < M; ++j) {
            const std::uint64_t f = c ^ (std::uint64_t{1} << j);
            const int sc = ((c >> j) & 1U) ? 1 : -1;
            const double lhs = flip_rate(model.variant, model.beta, sc, fields[c][j]) * weight[c];
            const double rhs = flip_rate(model.variant, model.beta, -sc, fields[f][j]) * weight[f];
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

StationarityReport stationarity_check(const KacKernel& kernel, const RateModel& model,
                                      std::uint64_t min_events, std::uint64_t seed,
                                      Sampler sampler) {
    check_enumerable(kernel);
    const std::vector<double> pi = gibbs_distribution(kernel, model.beta);
    const std::size_t M = kernel.lattice.size();
    Rng rng(seed);
    std::vector<std::int8_t> start(M);
    for (auto& s : start) s = rng.uniform() < 0.5 ? 1 : -1;
    SpinConfiguration config = SpinConfiguration::from_spins(start, kernel);
    std::uint64_t code = encode_state(start);
    std::vector<KahanSum> occupancy(pi.size());
    double last = 0.0;
    SimulationOptions options{sampler, min_events};
    const StreamResult res = simulate_stream(
        config, kernel, model, 0.0, kNever, rng,
        [&](double t, std::size_t j, const SpinConfiguration&) {
            occupancy[code] += t - last;
            last = t;
            code ^= std::uint64_t{1} << j;
        },
        options);
    StationarityReport report;
    report.events = res.events;
    report.elapsed_micro = last;
    if (!(last > 0.0)) throw std::runtime_error("no events simulated");
    double tv = 0.0;
    for (std::size_t c = 0; c < pi.size(); ++c) tv += std::abs(occupancy[c].value() / last - pi[c]);
    report.total_variation = 0.5 * tv;
    return report;
}

void write_event_log(const std::string& path, const Trajectory& traj) {
    BinaryWriter w(path);
    w.magic("KGE1");
    w.u32(static_cast<std::uint32_t>(traj.lattice.d));
    w.u32(static_cast<std::uint32_t>(traj.lattice.side));
    w.f64(traj.gamma);
    w.f64(traj.alpha);
    w.f64(traj.model.beta);
    w.u32(static_cast<std::uint32_t>(traj.model.variant));
    w.f64(traj.horizon);
    w.f64(traj.switch_time);
    w.u64(traj.seed);
    w.u64(traj.initial.size());
    w.raw(traj.initial.data(), traj.initial.size());
    for (const Event& e : traj.events) {
        w.f64(e.time);
        w.u32(e.site);
    }
    w.commit();
}

Trajectory read_event_log(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("KGE1");
    Trajectory t;
    t.lattice.d = static_cast<int>(r.u32());
    t.lattice.side = static_cast<int>(r.u32());
    t.gamma = r.f64();
    t.alpha = r.f64();
    t.model.beta = r.f64();
    const std::uint32_t variant = r.u32();
    if (variant > 2) throw std::runtime_error("unknown rate variant in event log");
    t.model.variant = static_cast<RateVariant>(variant);
    t.horizon = r.f64();
    t.switch_time = r.f64();
    t.seed = r.u64();
    const std::uint64_t n = r.u64();
    if (n != t.lattice.size()) throw std::runtime_error("event log initial state has wrong size");
    t.initial.resize(n);
    for (auto& s : t.initial) s = r.i8();
    while (!r.at_end()) {
        Event e;
        e.time = r.f64();
        e.site = r.u32();
        t.events.push_back(e);
    }
    return t;
}

void write_martingale_csv(const std::string& path, const MartingaleAndBracket& mb) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        out << "# schema martingale v1\n";
        out << "time,site,m_micro,M_rescaled,bracket\n";
        out << std::setprecision(17);
        const auto& m = mb.martingale;
        const std::size_t n = m.sites.size();
        for (std::size_t t = 0; t < m.times.size(); ++t) {
            for (std::size_t s = 0; s < n; ++s) {
                out << m.times[t] << ',' << m.sites[s] << ',' << m.micro[t * n + s] << ','
                    << m.rescaled(t, s) << ',' << mb.bracket.at(t, s) << '\n';
            }
        }
        if (!out) throw std::runtime_error("failed to write " + path);
    }
    std::rename(tmp.c_str(), path.c_str());
}

}  // namespace isingkac
