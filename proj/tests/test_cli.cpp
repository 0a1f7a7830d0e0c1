#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "experiments.hpp"
#include "isingkac/regstruct.hpp"

using namespace isingkac::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const char* root = std::getenv("ISINGKAC_TEST_TMP");
    const fs::path base = root ? fs::path(root) : fs::temp_directory_path() / "isingkac_cli_test";
    const fs::path p = base / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json manifest_of(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

RunConfig from_text(const std::string& text) {
    ConfigLayers l;
    l.load_text(text, "test");
    return resolve(l);
}

std::string error_key(const std::string& text) {
    try {
        from_text(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "";
}

}  // namespace

TEST_CASE("config text parsing") {
    const RunConfig c = from_text(
        "# comment line\n"
        "experiment = renorm-table\n"
        "gamma_grid = 0.5, 0.45   # trailing comment\n"
        "beta: 1.25\n"
        "\n"
        "seed = 42\n");
    CHECK(c.experiment == "renorm-table");
    CHECK(c.gammas == std::vector<double>{0.5, 0.45});
    CHECK(c.beta == 1.25);
    CHECK(c.seed == 42u);
    CHECK(c.replica_seed(3) == (42u ^ 3u));
    CHECK(c.min_events == 10'000'000u);

    ConfigLayers l;
    CHECK_THROWS_AS(l.load_text("nonsense = 1\n", "t"), ConfigError);
    CHECK_THROWS_AS(l.load_text("just words\n", "t"), ConfigError);
    CHECK(error_key("beta = abc\n") == "beta");
    CHECK(error_key("min_events = 1e7\n").empty());
    CHECK(error_key("replicas = 1.5\n") == "replicas");
}

TEST_CASE("layer precedence") {
    const fs::path dir = scratch("precedence");
    fs::create_directories(dir);
    const fs::path file = dir / "run.cfg";
    std::ofstream(file) << "seed = 5\nbeta = 0.5\nhorizon = 0.2\n";

    ConfigLayers l;
    CHECK(l.origins().at("seed") == "default");
    l.load_file(file.string());
    CHECK(resolve(l).seed == 5u);
    ::setenv("ISINGKAC_SEED", "6", 1);
    ::setenv("ISINGKAC_BETA", "0.75", 1);
    l.load_environment();
    ::unsetenv("ISINGKAC_SEED");
    ::unsetenv("ISINGKAC_BETA");
    l.set("seed", "7", "--seed");
    const RunConfig c = resolve(l);
    CHECK(c.seed == 7u);
    CHECK(c.beta == 0.75);
    CHECK(c.horizon == 0.2);
    CHECK(l.origins().at("seed") == "--seed");
    CHECK(l.origins().at("beta") == "environment ISINGKAC_BETA");
    CHECK(l.origins().at("horizon").rfind(file.string(), 0) == 0);
    CHECK_THROWS_AS(l.load_file((dir / "missing.cfg").string()), ConfigError);
}

TEST_CASE("validation names the offending key") {
    CHECK(error_key("kappa = 0.08\n") == "kappa");
    CHECK(error_key("kappa = 0\n") == "kappa");
    CHECK(error_key("kappa_under = 0.1\n") == "kappa_under");
    CHECK(error_key("kappa = 0.03\nkappa_under = 0.04\n") == "kappa_under");
    CHECK(error_key("experiment = nope\n") == "experiment");
    CHECK(error_key("d = 4\n") == "d");
    CHECK(error_key("gamma = 1.5\n") == "gamma");
    CHECK(error_key("experiment = renorm-table\ngamma_grid = 0.5, 0\n") == "gamma_grid");
    CHECK(error_key("grid = 0, 0.5\nhorizon = 0.1\n") == "grid");
    CHECK(error_key("eta = 0.5\n") == "eta");
    CHECK(error_key("sampler = gibbs\n") == "sampler");
    CHECK(error_key("lift_times = 0.03, 0.02\n") == "lift_times");
    // physics mode derives N = floor(gamma^-4) = 16 at gamma = 0.5 in d = 3
    CHECK(error_key("N = 16\n").empty());
    CHECK(error_key("N = 10\n") == "N");
    CHECK(error_key("side = 9\n") == "side");
    CHECK(error_key("mode = mini\nside = 9\n") == "unsafe_scaling");
    CHECK(error_key("mode = mini\nunsafe_scaling = true\n") == "side");
    const RunConfig mini = from_text("mode = mini\nunsafe_scaling = true\nN = 4\n");
    CHECK(mini.side == 9);
    CHECK(mini.scaling(0.5).lattice.side == 9);
    CHECK(mini.scaling(0.5).mini);
}

TEST_CASE("canonical text, hash and reference page") {
    const RunConfig a = from_text("seed = 3\n");
    const RunConfig b = from_text("seed=3 # same value\n");
    const RunConfig c = from_text("seed = 4\n");
    CHECK(a.canonical_text() == b.canonical_text());
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    CHECK(a.hash().size() == 16);
    CHECK(a.canonical_text().find("seed = 3\n") != std::string::npos);
    const std::string page = reference_page();
    for (const OptionDoc& o : option_docs()) CHECK(page.find("`" + o.key + "`") != std::string::npos);
}

TEST_CASE("stationary-check run and manifest") {
    const fs::path dir = scratch("stationary");
    const RunConfig c = from_text("experiment = stationary-check\nmin_events = 400000\nseed = 9\n");
    const RunOutcome r = run(c, dir);
    const json m = manifest_of(dir);
    CHECK(m == r.manifest);
    CHECK(m["incomplete"] == false);
    CHECK(m["config_hash"] == c.hash());
    CHECK(m["version"] == code_version());
    CHECK(m["seed"] == 9);
    CHECK(m["replica_seeds"] == json::array({9}));
    CHECK(m["parameters"]["min_events"] == "400000");
    CHECK(m["parameters"].size() == option_docs().size());
    CHECK(m["summary"]["detailed_balance_residual"].get<double>() < 1e-12);
    CHECK(m["summary"]["total_variation"].get<double>() < 0.03);
    CHECK(m["summary"]["events"].get<std::uint64_t>() >= 400000u);
    CHECK(slurp(dir / "config.effective") == c.canonical_text());
    for (const auto& o : m["outputs"]) CHECK(fs::exists(dir / o.get<std::string>()));

    // the manifest alone reproduces the configuration
    ConfigLayers l;
    load_manifest(l, dir / "manifest.json");
    CHECK(resolve(l).hash() == c.hash());
}

TEST_CASE("simulate is deterministic across worker counts") {
    const std::string text =
        "experiment = simulate\nd = 1\nmode = mini\nunsafe_scaling = true\nside = 64\ngamma = 0.3\n"
        "replicas = 3\nhorizon = 0.05\ngrid = 0, 0.025, 0.05\nseed = 21\n";
    const fs::path a = scratch("simulate_a"), b = scratch("simulate_b");
    run(from_text(text + "workers = 1\n"), a);
    run(from_text(text + "workers = 3\n"), b);
    for (int r = 0; r < 3; ++r) {
        const std::string tag = "replica" + std::to_string(r);
        for (const std::string& f : {"field_" + tag + ".csv", "events_" + tag + ".kge", "final_" + tag + ".kpl"}) {
            REQUIRE(fs::exists(a / f));
            CHECK(slurp(a / f) == slurp(b / f));
        }
    }
    CHECK(slurp(a / "field_replica0.csv") != slurp(a / "field_replica1.csv"));
    CHECK(manifest_of(a)["replica_seeds"] == json::array({21, 21 ^ 1, 21 ^ 2}));
    CHECK(manifest_of(a)["summary"] == manifest_of(b)["summary"]);
}

TEST_CASE("failed runs stay flagged incomplete") {
    const fs::path dir = scratch("failed");
    const RunConfig c = from_text(
        "experiment = model-check\nmode = mini\nunsafe_scaling = true\nside = 9\ngamma = 0.95\n"
        "lift_cutoff = 0.5\nlift_substeps = 8\nlift_times = 0.5, 0.53\n");
    CHECK_THROWS(run(c, dir));
    const json m = manifest_of(dir);
    CHECK(m["incomplete"] == true);
    CHECK(m.contains("error"));
}

TEST_CASE("model-check on a mini lattice") {
    const fs::path dir = scratch("model");
    const RunConfig c = from_text(
        "experiment = model-check\nmode = mini\nunsafe_scaling = true\nside = 9\ngamma = 0.95\n"
        "lift_cutoff = 0.5\nlift_substeps = 8\nlift_times = 0.5, 0.75\nworkers = 2\n");
    const json s = run(c, dir).manifest["summary"];
    CHECK(s["max_relative"].get<double>() < 1e-8);
    CHECK(s["chain"].get<double>() < 1e-12);
    CHECK(s["base_points"] == 2 * 27);
    CHECK(fs::exists(dir / "model_bounds.csv"));
    CHECK(fs::exists(dir / "pihat_<1>.kpl"));
}

TEST_CASE("table experiments on mini lattices") {
    const std::string mini = "mode = mini\nunsafe_scaling = true\nside = 11\nworkers = 2\n";
    const fs::path r = scratch("renorm");
    const json fits = run(from_text(mini + "experiment = renorm-table\ngamma_grid = 0.95, 0.85\n"), r).manifest["summary"];
    CHECK(fits.contains("c2_slope"));
    CHECK(slurp(r / "renorm.csv").rfind("#", 0) == 0);
    CHECK(fs::exists(r / "fits.json"));

    const fs::path k = scratch("kernel");
    const json kb = run(from_text(mini + "experiment = kernel-bounds\ngamma_grid = 0.95, 0.85\nkernel_samples = 50\n"), k)
                        .manifest["summary"];
    CHECK(kb["khat_bounded"] == true);
    CHECK(kb["c4"].size() == 2);
    CHECK(slurp(k / "kernel_bounds.csv").rfind("# schema kernel-bounds v1", 0) == 0);
}

TEST_CASE("mild-residual and besov-scan on mini lattices") {
    const fs::path m = scratch("mild");
    const json s = run(from_text("experiment = mild-residual\nd = 1\nmode = mini\nunsafe_scaling = true\nside = 64\n"
                                 "gamma = 0.3\nhorizon = 0.05\nresidual_step = 0.005\noctaves = 2\nworkers = 2\n"),
                       m)
                       .manifest["summary"];
    CHECK(s["residuals"].size() == 3);
    CHECK(s["exact_residual"].get<double>() < 1e-10 * std::max(1.0, s["scale"].get<double>()));
    CHECK(s["semigroup_form_residual"].get<double>() < 1e-8 * std::max(1.0, s["scale"].get<double>()));

    const fs::path b = scratch("besov");
    const json e = run(from_text("experiment = besov-scan\nd = 2\nmode = mini\nunsafe_scaling = true\nside = 16\n"
                                 "gamma = 0.5\nhorizon = 0.05\ngrid = 0, 0.05\n"),
                       b)
                       .manifest["summary"];
    CHECK(e["estimates"].size() == 2);
    CHECK(fs::exists(b / "besov_t1.csv"));
}

TEST_CASE("symbol table export") {
    const json j = symbols_json();
    REQUIRE(j.size() == isingkac::kSymbolCount);
    bool found = false;
    for (const auto& s : j) {
        if (s["name"] == isingkac::symbol_name(isingkac::Symbol::I22)) {
            CHECK(s["coproduct"].size() == 2);
            for (const auto& t : s["coproduct"]) {
                if (t["right"] == isingkac::plus_name(isingkac::PlusSymbol::I20)) {
                    found = true;
                    CHECK(t["left"] == isingkac::symbol_name(isingkac::Symbol::I2));
                }
            }
        }
        if (s["name"] == isingkac::symbol_name(isingkac::Symbol::Xi)) {
            CHECK(s["homogeneity"]["constant"] == -2.5);
            CHECK(s["homogeneity"]["kappa"] == -1.0);
        }
    }
    CHECK(found);
}
