#include <benchmark/benchmark.h>

#include <vector>

#include "isingkac/field.hpp"
#include "isingkac/glauber.hpp"
#include "isingkac/regstruct.hpp"
#include "isingkac/renorm.hpp"
#include "isingkac/spectral.hpp"

using namespace isingkac;

namespace {

struct Physical {
    ScalingParameters s;
    KacKernel k;
    SpectralKernel spec;
    SpectralCalculus calc;

    explicit Physical(double g)
        : s(ScalingParameters::physical(3, g)),
          k(build_kac_kernel(KacProfile::calibrated_bump(3), g, s.lattice)),
          spec(kernel_spectrum(k)),
          calc(s, spec) {}
};

// gamma indexed by benchmark argument: 0 -> 0.5, 1 -> 0.45, 2 -> 0.4
const Physical& physical(int i) {
    static const Physical p[] = {Physical(0.5), Physical(0.45), Physical(0.4)};
    return p[i];
}

SpinConfiguration random_config(const KacKernel& k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int8_t> s(k.lattice.size());
    for (auto& v : s) v = rng.uniform() < 0.5 ? 1 : -1;
    return SpinConfiguration::from_spins(s, k);
}

void BM_Simulate(benchmark::State& state) {
    const Physical& p = physical(0);
    const SpinConfiguration c0 = random_config(p.k, 1);
    const Sampler sampler = state.range(0) == 0 ? Sampler::Thinning : Sampler::SumTree;
    std::uint64_t seed = 0, events = 0;
    for (auto _ : state) {
        const Trajectory t = simulate(c0, p.k, {RateVariant::Glauber, 1.0}, 0.005, p.s.alpha, ++seed, {sampler, 0});
        events += t.events.size();
        benchmark::DoNotOptimize(t.events.data());
    }
    state.counters["events/s"] = benchmark::Counter(static_cast<double>(events), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Simulate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Convolve(benchmark::State& state) {
    const Physical& p = physical(static_cast<int>(state.range(0)));
    Field f(p.s.lattice.size());
    Rng rng(2);
    for (double& v : f) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(p.calc.convolve(f).data());
    state.SetLabel("side " + std::to_string(p.s.lattice.side));
}
BENCHMARK(BM_Convolve)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_TildeHeat(benchmark::State& state) {
    const Physical& p = physical(0);
    Field f(p.s.lattice.size());
    Rng rng(3);
    for (double& v : f) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(p.calc.tilde_heat(f, 0.01).data());
}
BENCHMARK(BM_TildeHeat)->Unit(benchmark::kMicrosecond);

void BM_CoarseField(benchmark::State& state) {
    const Physical& p = physical(0);
    const Trajectory t = simulate(random_config(p.k, 4), p.k, {RateVariant::Glauber, 1.0}, 0.01, p.s.alpha, 5);
    for (auto _ : state) benchmark::DoNotOptimize(coarse_field(t, p.k, p.s.delta, {0.0, 0.005, 0.01}).values.data());
    state.SetLabel(std::to_string(t.events.size()) + " events");
}
BENCHMARK(BM_CoarseField)->Unit(benchmark::kMillisecond);

void BM_C2Main(benchmark::State& state) {
    const Physical& p = physical(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(c2_main(p.spec, p.s));
}
BENCHMARK(BM_C2Main)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_C1Main(benchmark::State& state) {
    const Physical& p = physical(0);
    for (auto _ : state) benchmark::DoNotOptimize(c1_main(p.spec, p.s).value);
}
BENCHMARK(BM_C1Main)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_LiftPiHat(benchmark::State& state) {
    const Physical& p = physical(0);
    LiftConfig config;
    config.cutoff = 0.01;
    config.substeps = 16;
    config.times = {0.02, 0.03};
    LiftConstants constants;
    constants.c = c_gamma(p.spec, p.s, config.cutoff);
    const Trajectory traj = simulate(random_config(p.k, 6), p.k, {RateVariant::Glauber, 1.0}, 0.03, p.s.alpha, 7);
    const Trajectory ext = simulate(random_config(p.k, 8), p.k, {RateVariant::Glauber, 1.0}, 0.02, p.s.alpha, 9);
    for (auto _ : state) {
        const PiHatCache cache = lift_pi_hat(traj, ext, p.k, p.calc, config, constants);
        benchmark::DoNotOptimize(cache.value(Symbol::I5, 1, 0));
    }
}
BENCHMARK(BM_LiftPiHat)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_GroupAction(benchmark::State& state) {
    const GroupElement g{{0.1, -0.2, 0.3}, 0.4, -0.5};
    for (auto _ : state) {
        for (Symbol s : all_symbols()) benchmark::DoNotOptimize(group_act(g, s).coefficients.size());
    }
}
BENCHMARK(BM_GroupAction);

void BM_Besov(benchmark::State& state) {
    const Physical& p = physical(0);
    Field f(p.s.lattice.size());
    Rng rng(10);
    for (double& v : f) v = rng.normal();
    const TestFunctionDictionary dict = TestFunctionDictionary::standard(p.s, -0.5);
    for (auto _ : state) benchmark::DoNotOptimize(besov_seminorm(f, p.s.lattice, -0.5, dict).value);
}
BENCHMARK(BM_Besov)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
