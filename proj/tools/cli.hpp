#pragma once

#include "dynabench/error.hpp"
#include "dynabench/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dynabench::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Protocol {
    AttractorNoise,
    AttractorCompose,
    AttractorMotifs,
    DsaSearch,
    RnnBattery,
    RnnCompare,
    RnnAccuracy,
    RnnOverlap,
    Report
};
enum class Scale { Desk, Paper };

std::string_view to_string(Protocol p) noexcept;
Protocol protocol_from_string(std::string_view s);
std::string_view to_string(Scale s) noexcept;
Scale scale_from_string(std::string_view s);

// Bad flags, keys or values. Maps to exit status 1.
class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// --help or --version; the text is meant for stdout.
struct InfoRequest {
    std::string text;
};

struct RunConfig {
    Protocol protocol = Protocol::AttractorNoise;
    Scale scale = Scale::Desk;
    std::uint64_t seed = 0;
    std::vector<Metric> metrics{Metric::Cka, Metric::Procrustes, Metric::Dsa};
    std::filesystem::path out = "results";
    std::size_t workers = 1;
    bool resume = false;

    DsaConfig dsa;
    std::size_t attractor_samples = 0;  // 0: scale default
    std::size_t search_rounds = 0;      // 0: scale default
    std::size_t search_samples = 0;     // 0: scale default
    std::filesystem::path battery;      // empty: <out>/battery
    bool include_unconverged = false;
    std::size_t epoch_budget = 0;
    std::filesystem::path report_input;  // empty: <out>

    std::size_t noise_samples() const;
    std::size_t compose_samples() const;
    std::size_t rounds() const;
    std::size_t samples_per_candidate() const;
    std::filesystem::path battery_dir() const;
    std::filesystem::path input_dir() const;

    nlohmann::json to_json() const;
};

// Precedence: flags, then the --config file, then `env_seed` (seed only).
// Throws UsageError or returns InfoRequest text through `info`.
RunConfig parse_config(const std::vector<std::string>& args, const char* env_seed,
                       std::optional<InfoRequest>* info = nullptr);

// Reads `[section]` / `key = value` text into the config; returns the keys set.
std::vector<std::string> apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

struct RunResult {
    int status = 0;  // 0 ok, 2 excluded networks, 1 error
    nlohmann::json manifest;
};

// Runs the protocol, writing outputs and `manifest_<protocol>.json` under
// cfg.out. Errors are reported in the manifest and through `log`.
RunResult execute(const RunConfig& cfg, std::ostream& log);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace dynabench::cli
