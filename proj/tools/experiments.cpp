#include "experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "isingkac/field.hpp"
#include "isingkac/glauber.hpp"
#include "isingkac/regstruct.hpp"
#include "isingkac/renorm.hpp"
#include "isingkac/spectral.hpp"

#ifndef ISINGKAC_VERSION
#define ISINGKAC_VERSION "unknown"
#endif

namespace isingkac::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifestSchema = "isingkac-manifest/1";
// Stream offset for initial configurations, far from the replica range.
constexpr std::uint64_t kInitialStream = std::uint64_t{1} << 63;

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

// One physical setup at a given gamma.
struct Setup {
    ScalingParameters s;
    KacKernel k;
    SpectralKernel spec;
    SpectralCalculus calc;

    Setup(const RunConfig& c, double gamma)
        : s(c.scaling(gamma)),
          k(build_kac_kernel(c.profile(), gamma, s.lattice, c.mode == Mode::Physics)),
          spec(kernel_spectrum(k)),
          calc(s, spec) {}
};

std::vector<std::int8_t> random_spins(std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kInitialStream));
    std::vector<std::int8_t> out(n);
    for (auto& v : out) v = rng.uniform() < 0.5 ? 1 : -1;
    return out;
}

Trajectory run_dynamics(const Setup& p, const RunConfig& c, std::uint64_t seed, double horizon) {
    const SpinConfiguration c0 = SpinConfiguration::from_spins(random_spins(p.s.lattice.size(), seed), p.k);
    return simulate(c0, p.k, {RateVariant::Glauber, c.beta}, horizon, p.s.alpha, seed, {c.sampler, 0});
}

std::vector<double> effective_grid(const RunConfig& c) {
    std::vector<double> g = c.grid;
    if (g.empty()) g = {0.0, 0.5 * c.horizon, c.horizon};
    return g;
}

json scaling_json(const ScalingParameters& s) {
    return {{"gamma", s.gamma},     {"side", s.lattice.side}, {"eps", s.eps},
            {"alpha", s.alpha},     {"delta", s.delta},       {"mesoscale", s.mesoscale},
            {"kappa2", s.kappa2},   {"kappa3", s.kappa3},     {"mini", s.mini}};
}

double relative_spread(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double lo = v.front(), hi = v.front(), sum = 0.0;
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    return mean != 0.0 ? (hi - lo) / std::abs(mean) : 0.0;
}

class Run {
public:
    Run(const RunConfig& c, fs::path dir) : c_(c), dir_(std::move(dir)) {}

    const RunConfig& config() const { return c_; }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    // Outputs are listed in a fixed order by the experiments, independent of the worker pool.
    void output(const std::string& name) { outputs_.push_back(name); }
    const std::vector<std::string>& outputs() const { return outputs_; }
    void text(const std::string& name, const std::string& body) {
        write_text_atomic(dir_ / name, body);
        output(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

private:
    const RunConfig& c_;
    fs::path dir_;
    std::vector<std::string> outputs_;
};

json simulate_experiment(Run& run) {
    const RunConfig& c = run.config();
    const Setup p(c, c.gammas.front());
    const std::vector<double> grid = effective_grid(c);
    const auto n = static_cast<std::size_t>(c.replicas);
    std::vector<json> rows(n);
    parallel_for(n, c.workers, [&](std::size_t r) {
        const std::uint64_t seed = c.replica_seed(static_cast<int>(r));
        const Trajectory traj = run_dynamics(p, c, seed, c.horizon);
        const std::string tag = "replica" + std::to_string(r);
        write_event_log(run.path("events_" + tag + ".kge"), traj);
        const std::vector<std::int8_t> last = traj.final_state();
        write_snapshot(run.path("final_" + tag + ".kpl"), p.s.lattice, p.s.gamma, last);
        const CoarseField X = coarse_field(traj, p.k, p.s.delta, grid);
        write_field_csv(run.path("field_" + tag + ".csv"), X, p.s.lattice);
        double m = 0.0;
        for (std::int8_t v : last) m += v;
        rows[r] = {{"replica", r},
                   {"seed", seed},
                   {"events", traj.events.size()},
                   {"magnetisation", m / static_cast<double>(last.size())}};
    });
    for (std::size_t r = 0; r < n; ++r) {
        const std::string tag = "replica" + std::to_string(r);
        run.output("events_" + tag + ".kge");
        run.output("final_" + tag + ".kpl");
        run.output("field_" + tag + ".csv");
    }
    return {{"scaling", scaling_json(p.s)}, {"replicas", rows}};
}

json renorm_table_experiment(Run& run) {
    const RunConfig& c = run.config();
    std::vector<RenormConstants> rows(c.gammas.size());
    parallel_for(rows.size(), c.workers, [&](std::size_t i) {
        const double g = c.gammas[i];
        const ScalingParameters s = c.scaling(g);
        const KacKernel k = build_kac_kernel(c.profile(), g, s.lattice, c.mode == Mode::Physics);
        RenormOptions o;
        o.cutoff = c.cutoff;
        o.kappa_under = c.kappa_under;
        o.A = c.A;
        rows[i] = total_C(kernel_spectrum(k), s, o);
    });
    const RenormFits fits = rows.size() >= 2 ? fit_rates(rows) : RenormFits{};
    write_renorm_csv(run.path("renorm.csv"), rows, fits);
    run.output("renorm.csv");
    std::vector<double> d2, d1;
    for (const auto& r : rows) {
        d2.push_back(r.c - 0.5 * r.c2);
        d1.push_back(r.c_double_prime - 0.25 * r.c1);
    }
    const json f = {{"c2_slope", fits.c2_slope},
                    {"c1_slope", fits.c1_slope},
                    {"e_c2_ratio", fits.e_c2_ratio},
                    {"c1_log_ratio", fits.c1_log_ratio},
                    {"c_minus_half_c2_spread", relative_spread(d2)},
                    {"cpp_minus_quarter_c1_spread", relative_spread(d1)}};
    run.json_file("fits.json", f);
    return f;
}

json kernel_bounds_experiment(Run& run) {
    const RunConfig& c = run.config();
    const std::vector<double> times = log_spaced(1e-5, 1.0, 12);
    std::vector<KernelBoundsReport> reports(c.gammas.size());
    std::vector<HeatSupnormScan> scans(c.gammas.size());
    parallel_for(reports.size(), c.workers, [&](std::size_t i) {
        const Setup p(c, c.gammas[i]);
        reports[i] = verify_kernel_bounds(p.spec, p.k, p.s, static_cast<std::size_t>(c.kernel_samples));
        scans[i] = heat_supnorm_scan(p.calc, times);
    });
    std::ostringstream b;
    b << "# schema kernel-bounds v1\n"
      << "gamma,max_abs_khat,max_abs_khat_offgrid,c4,c4_offgrid,c2_m2,c2_m4,c2_m8,heat_constant,pass\n";
    std::ostringstream h;
    h << "# schema heat-supnorm v1\ngamma,t,supnorm,scaled\n";
    std::vector<double> c4, heat;
    bool bounded = true;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const KernelBoundsReport& r = reports[i];
        b << fmt(r.gamma) << ',' << fmt(r.max_abs_khat) << ',' << fmt(r.max_abs_khat_offgrid) << ','
          << fmt(r.c4) << ',' << fmt(r.c4_offgrid);
        for (double v : r.c2) b << ',' << fmt(v);
        b << ',' << fmt(r.heat_constant) << ',' << (r.pass ? 1 : 0) << '\n';
        for (std::size_t t = 0; t < scans[i].times.size(); ++t) {
            h << fmt(r.gamma) << ',' << fmt(scans[i].times[t]) << ',' << fmt(scans[i].supnorm[t]) << ','
              << fmt(scans[i].scaled[t]) << '\n';
        }
        c4.push_back(std::min(r.c4, r.c4_offgrid));
        heat.push_back(r.heat_constant);
        bounded = bounded && r.max_abs_khat <= 1.0 + 1e-12 && r.max_abs_khat_offgrid <= 1.0 + 1e-12;
    }
    run.text("kernel_bounds.csv", b.str());
    run.text("heat_scan.csv", h.str());
    return {{"khat_bounded", bounded}, {"c4", c4}, {"c4_spread", relative_spread(c4)},
            {"heat_constant", heat}, {"heat_spread", relative_spread(heat)}};
}

json model_check_experiment(Run& run) {
    const RunConfig& c = run.config();
    const Setup p(c, c.gammas.front());
    LiftConfig lc;
    lc.cutoff = c.lift_cutoff;
    lc.substeps = c.lift_substeps;
    lc.times = c.lift_times;
    LiftConstants k;
    k.c = c_gamma(p.spec, p.s, lc.cutoff);
    k.c_double_prime = c_double_prime(p.spec, p.s, lc.cutoff).value;
    const SpectralKernel under = under_kernel_spectrum(p.s, c.kappa_under);
    k.c_prime = c_prime(c_under(p.spec, under, p.s), k.c, p.s, c.beta);

    Trajectory traj, ext;
    parallel_for(2, c.workers, [&](std::size_t i) {
        if (i == 0) traj = run_dynamics(p, c, c.replica_seed(0), lc.times.back());
        else ext = run_dynamics(p, c, c.replica_seed(1), 2.0 * lc.cutoff);
    });
    const PiHatCache cache = lift_pi_hat(traj, ext, p.k, p.calc, lc, k);
    const NumericModel model(cache);
    const std::vector<BasePoint> base = base_point_grid(cache, c.per_axis);
    const ModelCheck mc = check_model(model, base, base);
    const std::vector<ModelBoundRow> bounds = model_bound_constants(model, base, base, c.kappa);

    std::ostringstream b;
    b << "# schema model-bounds v1 kappa=" << fmt(c.kappa) << "\nsymbol,homogeneity,constant\n";
    for (const auto& r : bounds) b << symbol_name(r.symbol) << ',' << fmt(r.homogeneity) << ',' << fmt(r.constant) << '\n';
    run.text("model_bounds.csv", b.str());
    for (Symbol s : {Symbol::I1, Symbol::I2, Symbol::I3, Symbol::I20, Symbol::I30}) {
        const std::string name = "pihat_" + symbol_name(s) + ".kpl";
        write_pi_hat_snapshot(run.path(name), cache, s, 0);
        run.output(name);
    }
    const json j = {{"scaling", scaling_json(p.s)},
                    {"constants", {{"c", k.c}, {"c_prime", k.c_prime}, {"c_double_prime", k.c_double_prime}}},
                    {"base_points", base.size()},
                    {"comparisons", mc.comparisons},
                    {"max_relative", mc.max_relative},
                    {"max_abs", mc.max_abs},
                    {"gamma_identity", mc.gamma_identity},
                    {"recentering", mc.recentering},
                    {"chain", mc.chain},
                    {"group_law", mc.group_law}};
    run.json_file("model_check.json", j);
    return j;
}

json mild_residual_experiment(Run& run) {
    const RunConfig& c = run.config();
    const Setup p(c, c.gammas.front());
    const Trajectory traj = run_dynamics(p, c, c.replica_seed(0), c.horizon);
    const auto n = static_cast<std::size_t>(c.octaves) + 1;
    std::vector<double> steps(n), residuals(n), scales(n);
    MildResidual exact, form;
    parallel_for(n + 2, c.workers, [&](std::size_t i) {
        if (i == n) {
            exact = mild_residual(traj, p.k, p.calc, c.horizon, 0.0);
        } else if (i == n + 1) {
            form = mild_form_residual(traj, p.k, p.calc, c.horizon);
        } else {
            steps[i] = c.residual_step / std::ldexp(1.0, static_cast<int>(i));
            const MildResidual r = mild_residual(traj, p.k, p.calc, c.horizon, steps[i]);
            residuals[i] = r.max_abs;
            scales[i] = r.scale;
        }
    });
    std::vector<double> lh, lr;
    std::ostringstream o;
    o << "# schema mild-residual v1 T=" << fmt(c.horizon) << "\nstep,max_abs,scale\n";
    o << "0," << fmt(exact.max_abs) << ',' << fmt(exact.scale) << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        o << fmt(steps[i]) << ',' << fmt(residuals[i]) << ',' << fmt(scales[i]) << '\n';
        lh.push_back(std::log(steps[i]));
        lr.push_back(std::log(std::max(residuals[i], 1e-300)));
    }
    run.text("mild_residual.csv", o.str());
    return {{"scaling", scaling_json(p.s)},
            {"events", traj.events.size()},
            {"exact_residual", exact.max_abs},
            {"semigroup_form_residual", form.max_abs},
            {"scale", exact.scale},
            {"steps", steps},
            {"residuals", residuals},
            {"slope", n >= 2 ? linear_fit(lh, lr).slope : 0.0}};
}

json stationary_check_experiment(Run& run) {
    const RunConfig& c = run.config();
    const KacProfile profile = c.r_star > 0.0 ? KacProfile::bump_with_radius(c.r_star) : KacProfile::calibrated_bump(1);
    const KacKernel k = build_kac_kernel(profile, c.stationary_gamma, TorusLattice{1, c.stationary_side}, false);
    const RateModel m{RateVariant::Glauber, c.beta};
    const double db = detailed_balance_residual(k, m);
    const StationarityReport r = stationarity_check(k, m, c.min_events, c.replica_seed(0), c.sampler);
    const json j = {{"sites", c.stationary_side},
                    {"gamma", c.stationary_gamma},
                    {"beta", c.beta},
                    {"detailed_balance_residual", db},
                    {"total_variation", r.total_variation},
                    {"events", r.events},
                    {"elapsed_micro", r.elapsed_micro},
                    {"pass", r.total_variation < 0.01 && db < 1e-12}};
    run.json_file("stationarity.json", j);
    return j;
}

json besov_scan_experiment(Run& run) {
    const RunConfig& c = run.config();
    const Setup p(c, c.gammas.front());
    const std::vector<double> grid = effective_grid(c);
    const Trajectory traj = run_dynamics(p, c, c.replica_seed(0), c.horizon);
    const CoarseField X = coarse_field(traj, p.k, p.s.delta, grid);
    const TestFunctionDictionary dict = TestFunctionDictionary::standard(p.s, c.eta, c.refinement);
    std::vector<BesovEstimate> est(grid.size());
    parallel_for(grid.size(), c.workers,
                 [&](std::size_t i) { est[i] = besov_seminorm(X.values[i], p.s.lattice, c.eta, dict); });
    std::ostringstream o;
    o << "# schema besov-scan v1 eta=" << fmt(c.eta) << " refinement=" << c.refinement
      << "\ntime,estimate,above,below\n";
    std::vector<double> values;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::string name = "besov_t" + std::to_string(i) + ".csv";
        write_besov_csv(run.path(name), est[i]);
        run.output(name);
        o << fmt(grid[i]) << ',' << fmt(est[i].value) << ',' << fmt(est[i].above) << ',' << fmt(est[i].below) << '\n';
        values.push_back(est[i].value);
    }
    run.text("besov_scan.csv", o.str());
    return {{"scaling", scaling_json(p.s)}, {"times", grid}, {"estimates", values}};
}

const std::map<std::string, std::function<json(Run&)>>& experiments() {
    static const std::map<std::string, std::function<json(Run&)>> table{
        {"simulate", simulate_experiment},
        {"renorm-table", renorm_table_experiment},
        {"kernel-bounds", kernel_bounds_experiment},
        {"model-check", model_check_experiment},
        {"mild-residual", mild_residual_experiment},
        {"stationary-check", stationary_check_experiment},
        {"besov-scan", besov_scan_experiment},
    };
    return table;
}

std::vector<std::uint64_t> used_seeds(const RunConfig& c) {
    int count = 1;
    if (c.experiment == "simulate") count = c.replicas;
    if (c.experiment == "model-check") count = 2;
    if (c.experiment == "renorm-table" || c.experiment == "kernel-bounds") count = 0;
    std::vector<std::uint64_t> out;
    for (int r = 0; r < count; ++r) out.push_back(c.replica_seed(r));
    return out;
}

}  // namespace

std::string code_version() { return ISINGKAC_VERSION; }

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

RunOutcome run(const RunConfig& config, const fs::path& out) {
    const auto it = experiments().find(config.experiment);
    if (it == experiments().end()) throw ConfigError("experiment", "unknown experiment '" + config.experiment + "'");
    fs::create_directories(out);
    Run r(config, out);

    json manifest = {{"schema", kManifestSchema},
                     {"version", code_version()},
                     {"experiment", config.experiment},
                     {"config_hash", config.hash()},
                     {"seed", config.seed},
                     {"replica_seeds", used_seeds(config)},
                     {"parameters", config.values},
                     {"outputs", json::array()},
                     {"incomplete", true}};
    write_text_atomic(out / "config.effective", config.canonical_text());
    write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");

    const auto start = std::chrono::steady_clock::now();
    try {
        json summary = it->second(r);
        manifest["summary"] = std::move(summary);
    } catch (const std::exception& e) {
        manifest["outputs"] = r.outputs();
        manifest["error"] = e.what();
        write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
        throw;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<std::string> outputs{"config.effective"};
    outputs.insert(outputs.end(), r.outputs().begin(), r.outputs().end());
    manifest["outputs"] = outputs;
    manifest["incomplete"] = false;
    manifest["wall_seconds"] = seconds;
    write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
    return {out, manifest};
}

json symbols_json() {
    json out = json::array();
    for (Symbol s : all_symbols()) {
        // homogeneities are a + b kappa with b an integer and a a multiple of 1/2
        const double h1 = homogeneity(s, 0.01), h2 = homogeneity(s, 0.05);
        const double b = std::round((h2 - h1) / 0.04);
        const double a = std::round(2.0 * (h1 - 0.01 * b)) / 2.0;
        json terms = json::array();
        if (s != Symbol::Xi) {
            for (const CoproductTerm& t : coproduct(s)) {
                terms.push_back({{"left", symbol_name(t.left)}, {"right", plus_name(t.right)}, {"coefficient", t.coefficient}});
            }
        }
        out.push_back({{"name", symbol_name(s)}, {"homogeneity", {{"constant", a}, {"kappa", b}}}, {"coproduct", terms}});
    }
    return out;
}

void load_manifest(ConfigLayers& layers, const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw ConfigError("--from-manifest", "cannot read " + manifest.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("--from-manifest", std::string("invalid JSON: ") + e.what());
    }
    if (j.value("schema", "") != kManifestSchema) throw ConfigError("--from-manifest", "unsupported manifest schema");
    for (const auto& [k, v] : j.at("parameters").items()) layers.set(k, v.get<std::string>(), manifest.string());
}

}  // namespace isingkac::cli
