#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "isingkac/glauber.hpp"
#include "isingkac/lattice.hpp"

namespace isingkac::cli {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& message)
        : std::runtime_error(key + ": " + message), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct OptionDoc {
    std::string key;
    std::string fallback;
    std::string help;
};

// Every recognised key with its default and one-line description.
const std::vector<OptionDoc>& option_docs();
const std::vector<std::string>& experiment_names();

// Raw key/value pairs with their origin; later layers override earlier ones:
// defaults < config file < ISINGKAC_<KEY> environment < command line.
class ConfigLayers {
public:
    ConfigLayers();

    void load_text(const std::string& text, const std::string& origin);
    void load_file(const std::string& path);
    void load_environment();
    void set(const std::string& key, const std::string& value, const std::string& origin);

    const std::map<std::string, std::string>& values() const { return values_; }
    const std::map<std::string, std::string>& origins() const { return origins_; }

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> origins_;
};

enum class Mode { Physics, Mini };

struct RunConfig {
    std::string experiment;
    int d = 3;
    Mode mode = Mode::Physics;
    bool unsafe_scaling = false;
    std::vector<double> gammas;  // gamma_grid for table experiments, {gamma} otherwise
    int half_width = 0;          // 0: derived from gamma
    int side = 0;                // mini lattice side
    double beta = 1.0;
    double A = 0.0;
    double kappa = 0.05;
    double kappa_under = 0.05;
    double r_star = 0.0;         // 0: calibrated
    double cutoff = 1.0;
    double lift_cutoff = 0.01;
    int lift_substeps = 16;
    std::vector<double> lift_times;
    int per_axis = 3;
    std::uint64_t seed = 1;
    int replicas = 1;
    double horizon = 0.1;
    std::vector<double> grid;
    double eta = -0.5;
    int refinement = 0;
    std::uint64_t min_events = 10'000'000;
    double stationary_gamma = 0.7;
    int stationary_side = 8;
    Sampler sampler = Sampler::Thinning;
    double residual_step = 1e-3;
    int octaves = 3;
    int kernel_samples = 500;
    int workers = 1;
    std::map<std::string, std::string> values;  // effective raw values of every key

    // Canonical key=value text of the effective parameters, sorted by key.
    std::string canonical_text() const;
    // FNV-1a 64 of the canonical text, as 16 hex digits.
    std::string hash() const;

    ScalingParameters scaling(double gamma) const;
    KacProfile profile() const;
    std::uint64_t replica_seed(int replica) const { return seed ^ static_cast<std::uint64_t>(replica); }
};

// Parses and validates; throws ConfigError naming the offending key.
RunConfig resolve(const ConfigLayers& layers);

// Markdown reference of all keys and their defaults.
std::string reference_page();

}  // namespace isingkac::cli
