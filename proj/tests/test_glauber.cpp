#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "isingkac/glauber.hpp"

using namespace isingkac;

namespace {

KacKernel mini_kernel() {
    return build_kac_kernel(KacProfile::calibrated_bump(1), 0.7, TorusLattice{1, 8}, false);
}

struct OneD {
    ScalingParameters s = ScalingParameters::physical(1, 0.05);
    KacKernel k = build_kac_kernel(KacProfile::calibrated_bump(1), 0.05, s.lattice);
};

SpinConfiguration random_config(const KacKernel& k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int8_t> s(k.lattice.size());
    for (auto& v : s) v = rng.uniform() < 0.5 ? 1 : -1;
    return SpinConfiguration::from_spins(s, k);
}

}  // namespace

TEST_CASE("flip rates") {
    CHECK(flip_rate(RateVariant::Glauber, 1.0, 1, 0.0) == 0.5);
    CHECK(flip_rate(RateVariant::Glauber, 1.0, -1, 0.0) == 0.5);
    CHECK(flip_rate(RateVariant::Glauber, 1e6, 1, 1.0) < 1e-12);
    CHECK(flip_rate(RateVariant::Voter, 1.0, 1, 1.0) == 0.0);
    CHECK(flip_rate(RateVariant::Voter, 1.0, -1, 1.0) == 1.0);
    for (double h = -1.0; h <= 1.0; h += 0.125) {
        for (int s : {-1, 1}) {
            for (RateVariant v : {RateVariant::Glauber, RateVariant::Voter}) {
                const double c = flip_rate(v, 1.3, s, h);
                CHECK(c >= 0.0);
                CHECK(c <= 1.0);
            }
        }
    }
}

TEST_CASE("detailed balance on the 8-site lattice") {
    const KacKernel k = mini_kernel();
    for (double beta : {0.5, 1.0, 2.0}) {
        CHECK(detailed_balance_residual(k, {RateVariant::Glauber, beta}) < 1e-12);
    }
    CHECK(detailed_balance_residual(k, {RateVariant::Voter, 1.0}) > 1e-3);
}

TEST_CASE("stationarity on the 8-site lattice") {
    const KacKernel k = mini_kernel();
    for (Sampler s : {Sampler::Thinning, Sampler::SumTree}) {
        const StationarityReport r = stationarity_check(k, {RateVariant::Glauber, 1.0}, 2'000'000, 5, s);
        CHECK(r.events >= 2'000'000u);
        CHECK(r.total_variation < 0.02);
    }
}

TEST_CASE("simulation is deterministic and replayable") {
    OneD d;
    const SpinConfiguration c = random_config(d.k, 2);
    const RateModel m{RateVariant::Glauber, 1.0};
    const Trajectory a = simulate(c, d.k, m, 0.5, d.s.alpha, 17);
    const Trajectory b = simulate(c, d.k, m, 0.5, d.s.alpha, 17);
    REQUIRE(a.events.size() == b.events.size());
    bool same = true;
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        same = same && a.events[i].time == b.events[i].time && a.events[i].site == b.events[i].site;
    }
    CHECK(same);
    bool increasing = true;
    for (std::size_t i = 1; i < a.events.size(); ++i) increasing = increasing && a.events[i].time > a.events[i - 1].time;
    CHECK(increasing);
    auto state = a.initial;
    for (const Event& e : a.events) state[e.site] = static_cast<std::int8_t>(-state[e.site]);
    CHECK(state == a.final_state());
    CHECK(a.horizon == doctest::Approx(0.5 / d.s.alpha));

    const Trajectory frozen = simulate(c, d.k, {RateVariant::Frozen, 1.0}, 0.5, d.s.alpha, 1);
    CHECK(frozen.events.empty());
}

TEST_CASE("infinite temperature flips are uniform over sites") {
    const KacKernel k = mini_kernel();
    const SpinConfiguration c = SpinConfiguration::all_plus(k.lattice, k);
    const double horizon = 20000.0;
    const Trajectory t = simulate(c, k, {RateVariant::Glauber, 0.0}, horizon, 1.0, 3);
    std::vector<double> counts(8, 0.0);
    for (const Event& e : t.events) counts[e.site] += 1.0;
    const double mean = 0.5 * horizon;
    for (double n : counts) CHECK(std::abs(n - mean) < 3.0 * std::sqrt(mean));
}

TEST_CASE("martingale jumps and bracket") {
    OneD d;
    Trajectory t;
    t.lattice = d.s.lattice;
    t.gamma = 0.05;
    t.alpha = d.s.alpha;
    t.initial.assign(d.s.lattice.size(), 1);
    t.horizon = 2.0;
    t.model = {RateVariant::Glauber, 1.0};
    t.events.push_back({1.0, 5});
    const double a = t.alpha;
    const auto mb = martingale_and_bracket(t, d.k, d.s.delta, {0.0, (1.0 - 1e-12) * a, a, 2.0 * a}, {5, 6});
    const double jump = mb.martingale.micro[2 * 2] - mb.martingale.micro[1 * 2];
    CHECK(jump == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(mb.martingale.rescaled(2, 0) - mb.martingale.rescaled(1, 0) == doctest::Approx(-2.0 / d.s.delta).epsilon(1e-9));
    CHECK(mb.bracket.at(0, 0) == 0.0);
    CHECK(mb.martingale.micro[0] == 0.0);

    // beta = 0: rates are 1/2, bracket = 4/delta^2 * 0.5 * t/alpha
    SpinConfiguration c = random_config(d.k, 4);
    const Trajectory free = simulate(c, d.k, {RateVariant::Glauber, 0.0}, 0.3, a, 8);
    const auto br = bracket_path(free, d.k, d.s.delta, {0.0, 0.1, 0.2, 0.3}, {0, 10});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(br.at(i, 1) == doctest::Approx(2.0 * br.times[i] / (d.s.delta * d.s.delta * a)).epsilon(1e-12));
    }
}

TEST_CASE("bracket agrees with a fine Riemann sum") {
    OneD d;
    const SpinConfiguration c = random_config(d.k, 6);
    const RateModel m{RateVariant::Glauber, 1.0};
    const double T = 0.2;
    const Trajectory t = simulate(c, d.k, m, T, d.s.alpha, 12);
    const std::size_t site = 7;
    const auto br = bracket_path(t, d.k, d.s.delta, {T}, {site});
    // midpoint sum with step 1e-4 alpha over the replayed configuration
    SpinConfiguration cur = SpinConfiguration::from_spins(t.initial, d.k);
    const double step = 1e-4;
    const double horizon = T / d.s.alpha;
    double sum = 0.0;
    std::size_t next = 0;
    for (double s = 0.5 * step; s < horizon; s += step) {
        while (next < t.events.size() && t.events[next].time <= s) update_field_after_flip(cur, t.events[next++].site, d.k);
        sum += glauber_rate(cur, site, m) * step;
    }
    const double riemann = 4.0 / (d.s.delta * d.s.delta) * sum;
    CHECK(std::abs(riemann - br.at(0, 0)) / br.at(0, 0) < 1e-3);
}

TEST_CASE("martingale mean over replicas") {
    OneD d;
    const RateModel m{RateVariant::Glauber, 1.0};
    const int R = 400;
    std::vector<double> mv, qv;
    for (int i = 0; i < R; ++i) {
        const SpinConfiguration c = random_config(d.k, 100 + i);
        const Trajectory t = simulate(c, d.k, m, 0.1, d.s.alpha, 1000 ^ static_cast<std::uint64_t>(i));
        const auto mb = martingale_and_bracket(t, d.k, d.s.delta, {0.1}, {3});
        const double M = mb.martingale.rescaled(0, 0);
        mv.push_back(M);
        qv.push_back(M * M - mb.bracket.at(0, 0));
    }
    const MeanSe a = mean_and_se(mv);
    const MeanSe b = mean_and_se(qv);
    CHECK(std::abs(a.mean) < 4.0 * a.se);
    CHECK(std::abs(b.mean) < 4.0 * b.se);
}

TEST_CASE("voter switch") {
    OneD d;
    const SpinConfiguration c = random_config(d.k, 3);
    const Trajectory t = simulate(c, d.k, {RateVariant::Glauber, 1.0}, 0.2, d.s.alpha, 4);
    const Trajectory same = switch_to_voter(t, d.k, kNever);
    CHECK(same.events.size() == t.events.size());
    CHECK(same.switch_time == kNever);

    const Trajectory v = switch_to_voter(t, d.k, 0.0);
    CHECK(v.switch_time == 0.0);
    CHECK(v.model_at(0.0).variant == RateVariant::Voter);
    SpinConfiguration cur = SpinConfiguration::from_spins(v.initial, d.k);
    bool in_range = true;
    std::size_t checked = 0;
    for (const Event& e : v.events) {
        const double r = flip_rate(RateVariant::Voter, 1.0, cur.spin[e.site], cur.h[e.site]);
        in_range = in_range && r > 0.0 && r <= 1.0;
        update_field_after_flip(cur, e.site, d.k);
        if (++checked == 10000) break;
    }
    CHECK(in_range);

    const Trajectory mid = switch_to_voter(t, d.k, 0.1);
    bool prefix = true;
    for (std::size_t i = 0; i < t.events.size() && t.events[i].time <= 0.1 / d.s.alpha; ++i) {
        prefix = prefix && mid.events[i].time == t.events[i].time && mid.events[i].site == t.events[i].site;
    }
    CHECK(prefix);
}

TEST_CASE("stopping times") {
    const std::vector<double> times{0.0, 0.1, 0.2};
    auto sup = [](const Field& f) {
        double m = 0.0;
        for (double v : f) m = std::max(m, std::abs(v));
        return m;
    };
    const std::vector<Field> zero(3, Field(4, 0.0));
    const std::vector<Field> ramp{Field(4, 1.0), Field(4, 2.0), Field(4, 3.0)};
    CHECK(stopping_time_tau1(times, ramp, kNever, sup) == kNever);
    CHECK(stopping_time_tau1(times, zero, 0.5, sup) == kNever);
    CHECK(stopping_time_tau1(times, ramp, 0.5, sup) == 0.0);
    CHECK(stopping_time_tau1(times, ramp, 2.5, sup) == 0.2);
    CHECK(stopping_time_tau2(times, zero, zero, 0.0, kNever, 0.1, -0.9, sup) == kNever);
    CHECK(stopping_time_tau2(times, zero, zero, 0.0, 1.0, 0.1, -0.9, sup) == kNever);
    CHECK(stopping_time_tau2(times, ramp, ramp, 0.0, 0.01, 0.1, -0.9, sup) == 0.0);
}

TEST_CASE("event log round trip") {
    OneD d;
    const Trajectory t = simulate(random_config(d.k, 1), d.k, {RateVariant::Glauber, 1.2}, 0.05, d.s.alpha, 21);
    const auto path = (std::filesystem::temp_directory_path() / "isingkac_events_test.kge").string();
    write_event_log(path, t);
    const Trajectory r = read_event_log(path);
    CHECK(r.initial == t.initial);
    REQUIRE(r.events.size() == t.events.size());
    CHECK(r.events.back().time == t.events.back().time);
    CHECK(r.model.beta == 1.2);
    CHECK(r.seed == 21u);
    std::filesystem::remove(path);
}
