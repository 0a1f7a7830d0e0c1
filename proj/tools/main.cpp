#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config.hpp"
#include "experiments.hpp"

using namespace isingkac::cli;

int main(int argc, char** argv) {
    CLI::App app{"Glauber dynamics of the Ising-Kac model and its coarse-grained field"};
    app.set_version_flag("--version", code_version());

    std::string config_path, experiment, out_dir, manifest_path, symbols_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::vector<std::string> overrides;
    bool print_defaults = false;

    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--experiment", experiment, "experiment kind");
    app.add_option("--out", out_dir, "run directory (default run-<experiment>-<config hash>)");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--workers", workers, "worker threads");
    app.add_option("--set", overrides, "override one key, key=value (repeatable)");
    app.add_option("--from-manifest", manifest_path, "rerun with the parameters of a manifest.json");
    app.add_option("--symbols-json", symbols_path, "write the symbol table as JSON and exit");
    app.add_flag("--print-defaults", print_defaults, "print the configuration reference and exit");
    CLI11_PARSE(app, argc, argv);

    if (print_defaults) {
        std::cout << reference_page();
        return 0;
    }
    try {
        if (!symbols_path.empty()) {
            write_text_atomic(symbols_path, symbols_json().dump(2) + "\n");
            return 0;
        }

        ConfigLayers layers;
        if (!manifest_path.empty()) load_manifest(layers, manifest_path);
        if (!config_path.empty()) layers.load_file(config_path);
        layers.load_environment();
        if (!experiment.empty()) layers.set("experiment", experiment, "--experiment");
        if (seed) layers.set("seed", std::to_string(*seed), "--seed");
        if (workers) layers.set("workers", std::to_string(*workers), "--workers");
        for (const std::string& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set", "expected key=value, got '" + kv + "'");
            layers.set(kv.substr(0, eq), kv.substr(eq + 1), "--set");
        }
        const RunConfig config = resolve(layers);
        if (out_dir.empty()) out_dir = "run-" + config.experiment + "-" + config.hash();

        const RunOutcome result = run(config, out_dir);
        std::cout << result.manifest["summary"].dump(2) << '\n' << "run directory: " << result.dir.string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
