#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jspma/power.hpp"

namespace jspma {

/// Invalid configuration; field() names the offending key.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
    [[nodiscard]] const std::string& field() const { return field_; }

  private:
    std::string field_;
};

/// How bits of active users that were never verified enter the BER.
enum class MissedBerRule {
    Half,     // count payload_bits / 2 errors (random guessing)
    All,      // count every bit wrong
    Exclude,  // leave them out of numerator and denominator
};

/// What counts as a successful detection in UDSR.
enum class UdsrRule {
    Verified,  // verified with the exact payload
    Selected,  // index appears in the receiver's selected support
};

[[nodiscard]] std::string_view to_string(MissedBerRule rule);
[[nodiscard]] std::string_view to_string(UdsrRule rule);

struct SystemConfig {
    std::string name = "experiment";
    int M = 4;
    int N = 128;
    int Na = 16;
    int d = 32;
    int T = 160;
    int K = 4;
    double delta = 0.14;
    std::vector<double> rho0_db{0, 2, 4, 6, 8, 10, 12};
    std::vector<PowerMode> modes{PowerMode::Distributed};
    int trials = 500;
    std::uint64_t master_seed = 1;
    int max_iters = 0;  // 0 selects Na
    int crc_bits = 16;
    MissedBerRule missed_user_ber_rule = MissedBerRule::Half;
    UdsrRule udsr_rule = UdsrRule::Verified;
    int na_estimate_offset = 0;
    int eviction_retries = 0;
    double residual_floor_eps = 0.05;
    std::vector<double> delta_grid{0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
    std::optional<double> tune_rho0_db;

    [[nodiscard]] int effective_max_iters() const { return max_iters > 0 ? max_iters : Na; }
    /// rho0 (dB) used by the delta tuner: tune_rho0_db or the middle of the sweep.
    [[nodiscard]] double tuning_rho0_db() const;
    /// Throws ConfigError naming the first violated constraint.
    void validate() const;
};

/// Parses a JSON document. Unknown keys are rejected.
[[nodiscard]] SystemConfig parse_config(const std::string& json_text);
/// Reads and parses a config file; a missing file is a ConfigError.
[[nodiscard]] SystemConfig load_config(const std::filesystem::path& path);
[[nodiscard]] std::string to_json(const SystemConfig& config);

/// Simultaneous users per orthogonal resource: Na / (M T / d).
[[nodiscard]] double overloading_factor(int Na, int M, int T, int d);

}  // namespace jspma
