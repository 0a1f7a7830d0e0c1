#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace isingkac::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

const OptionDoc* find_option(const std::string& key) {
    for (const OptionDoc& o : option_docs()) {
        if (o.key == key) return &o;
    }
    return nullptr;
}

double parse_double(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(out)) {
        throw ConfigError(key, "expected a number, got '" + v + "'");
    }
    return out;
}

long long parse_int(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        // allow integral values written in floating notation, e.g. 1e7
        const double d = parse_double(key, v);
        if (d != std::floor(d) || std::abs(d) > 9.0e18) throw ConfigError(key, "expected an integer, got '" + v + "'");
        return static_cast<long long>(d);
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        const long long i = parse_int(key, v);
        if (i < 0) throw ConfigError(key, "must be non-negative");
        return static_cast<std::uint64_t>(i);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    std::string t = trim(v);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(parse_double(key, item));
    }
    return out;
}

void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
}

std::string env_name(const std::string& key) {
    std::string out = "ISINGKAC_";
    for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

const std::vector<OptionDoc>& option_docs() {
    static const std::vector<OptionDoc> docs{
        {"experiment", "simulate", "one of simulate, renorm-table, kernel-bounds, model-check, mild-residual, stationary-check, besov-scan"},
        {"d", "3", "spatial dimension, 1 to 3"},
        {"mode", "physics", "physics: lattice from the gamma scalings; mini: free lattice side (needs unsafe_scaling)"},
        {"unsafe_scaling", "false", "must be true in mini mode"},
        {"gamma", "0.5", "interaction scale for single-gamma experiments"},
        {"gamma_grid", "0.5,0.45,0.4,0.35", "gamma values for renorm-table and kernel-bounds"},
        {"N", "", "lattice half width; in physics mode it must equal floor(gamma^(-4/(4-d)))"},
        {"side", "", "lattice side in mini mode"},
        {"beta", "1", "inverse temperature"},
        {"A", "0", "finite shift of the renormalisation constant"},
        {"kappa", "0.05", "homogeneity offset, in (0, 1/14)"},
        {"kappa_under", "0.05", "under-kernel exponent, in (0, 1/10) and at most kappa"},
        {"r_star", "", "profile radius; empty uses the calibrated value"},
        {"cutoff", "1", "time cutoff of the kernel surrogate for the renormalisation constants"},
        {"lift_cutoff", "0.01", "time cutoff of the kernel surrogate in model-check"},
        {"lift_substeps", "16", "time nodes per lift cutoff"},
        {"lift_times", "0.02,0.03", "evaluation times of model-check, on the lift_cutoff / lift_substeps lattice"},
        {"per_axis", "3", "base points per spatial axis in model-check"},
        {"seed", "1", "master seed; replica i uses seed xor i"},
        {"replicas", "1", "independent replicas for simulate"},
        {"horizon", "0.1", "macroscopic time horizon"},
        {"grid", "", "macroscopic sample times for simulate and besov-scan; empty means 0, horizon/2, horizon"},
        {"eta", "-0.5", "regularity exponent of the Besov estimator"},
        {"refinement", "0", "dictionary refinement level of the Besov estimator"},
        {"min_events", "10000000", "events in stationary-check"},
        {"stationary_gamma", "0.7", "gamma of the stationary-check kernel"},
        {"stationary_side", "8", "sites of the one-dimensional stationary-check lattice"},
        {"sampler", "thinning", "thinning or sum-tree"},
        {"residual_step", "0.001", "coarsest quadrature step of mild-residual"},
        {"octaves", "3", "step halvings in mild-residual"},
        {"kernel_samples", "500", "random off-grid frequencies in kernel-bounds"},
        {"workers", "1", "worker threads"},
    };
    return docs;
}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"simulate",      "renorm-table",     "kernel-bounds",
                                                "model-check",   "mild-residual",    "stationary-check",
                                                "besov-scan"};
    return names;
}

ConfigLayers::ConfigLayers() {
    for (const OptionDoc& o : option_docs()) set(o.key, o.fallback, "default");
}

void ConfigLayers::set(const std::string& key, const std::string& value, const std::string& origin) {
    if (!find_option(key)) throw ConfigError(key, "unknown key (from " + origin + ")");
    values_[key] = trim(value);
    origins_[key] = origin;
}

void ConfigLayers::load_text(const std::string& text, const std::string& origin) {
    std::stringstream ss(text);
    std::string line;
    int number = 0;
    while (std::getline(ss, line)) {
        ++number;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t sep = line.find_first_of("=:");
        if (sep == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(number), "expected 'key = value'");
        }
        set(trim(line.substr(0, sep)), line.substr(sep + 1), origin + ":" + std::to_string(number));
    }
}

void ConfigLayers::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path);
}

void ConfigLayers::load_environment() {
    for (const OptionDoc& o : option_docs()) {
        const std::string name = env_name(o.key);
        if (const char* v = std::getenv(name.c_str())) set(o.key, v, "environment " + name);
    }
}

std::string RunConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values) out += k + " = " + v + "\n";
    return out;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canonical_text()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ScalingParameters RunConfig::scaling(double gamma) const {
    if (mode == Mode::Mini) return ScalingParameters::mini_lattice(d, gamma, side);
    return ScalingParameters::physical(d, gamma);
}

KacProfile RunConfig::profile() const {
    return r_star > 0.0 ? KacProfile::bump_with_radius(r_star) : KacProfile::calibrated_bump(d);
}

RunConfig resolve(const ConfigLayers& layers) {
    const auto& v = layers.values();
    auto get = [&](const std::string& k) { return v.at(k); };
    RunConfig c;
    c.values = v;
    c.experiment = get("experiment");
    const auto& names = experiment_names();
    require(std::find(names.begin(), names.end(), c.experiment) != names.end(), "experiment",
            "unknown experiment '" + c.experiment + "'");
    c.d = static_cast<int>(parse_int("d", get("d")));
    require(c.d >= 1 && c.d <= 3, "d", "must be 1, 2 or 3");
    const std::string mode = get("mode");
    require(mode == "physics" || mode == "mini", "mode", "must be physics or mini");
    c.mode = mode == "mini" ? Mode::Mini : Mode::Physics;
    c.unsafe_scaling = parse_bool("unsafe_scaling", get("unsafe_scaling"));

    c.gammas = (c.experiment == "renorm-table" || c.experiment == "kernel-bounds")
                   ? parse_list("gamma_grid", get("gamma_grid"))
                   : std::vector<double>{parse_double("gamma", get("gamma"))};
    const std::string gkey = c.gammas.size() == 1 && c.experiment != "renorm-table" && c.experiment != "kernel-bounds"
                                 ? "gamma"
                                 : "gamma_grid";
    require(!c.gammas.empty(), gkey, "needs at least one value");
    for (double g : c.gammas) require(g > 0.0 && g < 1.0, gkey, "values must lie in (0, 1)");

    if (!get("N").empty()) c.half_width = static_cast<int>(parse_int("N", get("N")));
    if (!get("side").empty()) c.side = static_cast<int>(parse_int("side", get("side")));
    if (c.mode == Mode::Physics) {
        require(get("side").empty(), "side", "only valid in mini mode");
        if (c.half_width != 0) {
            for (double g : c.gammas) {
                const int n = ScalingParameters::physical(c.d, g).lattice.half_width();
                require(c.half_width == n, "N",
                        "physics mode derives N = " + std::to_string(n) + " from gamma; got " +
                            std::to_string(c.half_width) + " (use mode = mini with unsafe_scaling = true)");
            }
        }
    } else {
        require(c.unsafe_scaling, "unsafe_scaling", "mini mode requires unsafe_scaling = true");
        if (c.side == 0 && c.half_width > 0) c.side = 2 * c.half_width + 1;
        require(c.side >= 2, "side", "mini mode needs side >= 2 (or N)");
    }

    c.beta = parse_double("beta", get("beta"));
    require(c.beta >= 0.0, "beta", "must be non-negative");
    c.A = parse_double("A", get("A"));
    c.kappa = parse_double("kappa", get("kappa"));
    require(c.kappa > 0.0 && c.kappa < 1.0 / 14.0, "kappa", "must lie in (0, 1/14)");
    c.kappa_under = parse_double("kappa_under", get("kappa_under"));
    require(c.kappa_under > 0.0 && c.kappa_under < 0.1, "kappa_under", "must lie in (0, 1/10)");
    require(c.kappa_under <= c.kappa, "kappa_under", "must not exceed kappa");
    if (!get("r_star").empty()) {
        c.r_star = parse_double("r_star", get("r_star"));
        require(c.r_star > 0.0, "r_star", "must be positive");
    }
    c.cutoff = parse_double("cutoff", get("cutoff"));
    require(c.cutoff > 0.0, "cutoff", "must be positive");
    c.lift_cutoff = parse_double("lift_cutoff", get("lift_cutoff"));
    require(c.lift_cutoff > 0.0, "lift_cutoff", "must be positive");
    c.lift_substeps = static_cast<int>(parse_int("lift_substeps", get("lift_substeps")));
    require(c.lift_substeps >= 1, "lift_substeps", "must be at least 1");
    c.lift_times = parse_list("lift_times", get("lift_times"));
    require(!c.lift_times.empty(), "lift_times", "needs at least one time");
    require(std::is_sorted(c.lift_times.begin(), c.lift_times.end()), "lift_times", "must be ascending");
    require(c.lift_times.front() > 0.0, "lift_times", "must be positive");
    c.per_axis = static_cast<int>(parse_int("per_axis", get("per_axis")));
    require(c.per_axis >= 1, "per_axis", "must be at least 1");
    c.seed = parse_u64("seed", get("seed"));
    c.replicas = static_cast<int>(parse_int("replicas", get("replicas")));
    require(c.replicas >= 1, "replicas", "must be at least 1");
    c.horizon = parse_double("horizon", get("horizon"));
    require(c.horizon > 0.0, "horizon", "must be positive");
    c.grid = parse_list("grid", get("grid"));
    require(std::is_sorted(c.grid.begin(), c.grid.end()), "grid", "must be ascending");
    for (double t : c.grid) require(t >= 0.0 && t <= c.horizon, "grid", "times must lie in [0, horizon]");
    c.eta = parse_double("eta", get("eta"));
    require(c.eta < 0.0, "eta", "must be negative");
    c.refinement = static_cast<int>(parse_int("refinement", get("refinement")));
    require(c.refinement >= 0 && c.refinement <= 4, "refinement", "must lie in 0..4");
    c.min_events = parse_u64("min_events", get("min_events"));
    c.stationary_gamma = parse_double("stationary_gamma", get("stationary_gamma"));
    require(c.stationary_gamma > 0.0 && c.stationary_gamma < 1.0, "stationary_gamma", "must lie in (0, 1)");
    c.stationary_side = static_cast<int>(parse_int("stationary_side", get("stationary_side")));
    require(c.stationary_side >= 2 && c.stationary_side <= 16, "stationary_side",
            "must lie in 2..16 for exact enumeration");
    const std::string sampler = get("sampler");
    require(sampler == "thinning" || sampler == "sum-tree", "sampler", "must be thinning or sum-tree");
    c.sampler = sampler == "thinning" ? Sampler::Thinning : Sampler::SumTree;
    c.residual_step = parse_double("residual_step", get("residual_step"));
    require(c.residual_step > 0.0 && c.residual_step <= c.horizon, "residual_step", "must lie in (0, horizon]");
    c.octaves = static_cast<int>(parse_int("octaves", get("octaves")));
    require(c.octaves >= 1 && c.octaves <= 12, "octaves", "must lie in 1..12");
    c.kernel_samples = static_cast<int>(parse_int("kernel_samples", get("kernel_samples")));
    require(c.kernel_samples >= 0, "kernel_samples", "must be non-negative");
    c.workers = static_cast<int>(parse_int("workers", get("workers")));
    require(c.workers >= 1, "workers", "must be at least 1");
    return c;
}

std::string reference_page() {
    std::string out =
        "# isingkac configuration reference\n\n"
        "A config file holds one `key = value` (or `key: value`) pair per line; `#` starts a comment.\n"
        "Values are layered, later layers winning: built-in defaults, the `--config` file,\n"
        "`ISINGKAC_<KEY>` environment variables (key upper-cased), then command-line flags\n"
        "(`--experiment`, `--seed`, `--workers`, `--set key=value`).\n\n"
        "| key | default | meaning |\n|---|---|---|\n";
    for (const OptionDoc& o : option_docs()) {
        out += "| `" + o.key + "` | " + (o.fallback.empty() ? "(unset)" : "`" + o.fallback + "`") + " | " + o.help + " |\n";
    }
    return out;
}

}  // namespace isingkac::cli
