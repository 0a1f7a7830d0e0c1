#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "config.hpp"

namespace isingkac::cli {

std::string code_version();

// Writes `path.tmp` and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Runs f(0), ..., f(n-1) on up to `workers` threads. Tasks share nothing, so results do not
// depend on scheduling; the exception of the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto body = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t extra = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < extra; ++t) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct RunOutcome {
    std::filesystem::path dir;
    nlohmann::json manifest;
};

// Runs the configured experiment into `out`. manifest.json is written first with
// "incomplete": true and rewritten on success; on failure it keeps the flag and records
// the error before the exception propagates.
RunOutcome run(const RunConfig& config, const std::filesystem::path& out);

// Every basis symbol with its homogeneity a + b kappa and its coproduct.
nlohmann::json symbols_json();

// Loads the effective parameters of a previous run into `layers`.
void load_manifest(ConfigLayers& layers, const std::filesystem::path& manifest);

}  // namespace isingkac::cli
