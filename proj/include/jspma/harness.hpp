#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

#include "jspma/config.hpp"
#include "jspma/receiver.hpp"

namespace jspma {

/// Raw counts from one or more trials. Bit errors are fractional because the
/// half rule charges payload_bits / 2 per missed user.
struct TrialCounters {
    long trials = 0;
    long active = 0;          // sum of Na
    long successes = 0;       // users counted as detected under the UDSR rule
    long exact_frames = 0;    // active users verified with the exact payload
    long selected_active = 0; // active users present in the selected support
    long false_alarms = 0;
    long crc_false_pass = 0;  // verified with a wrong payload
    long infeasible_stops = 0;
    double bit_errors = 0.0;
    double bits = 0.0;
    long iterations = 0;
    double rx_energy = 0.0;        // ||Y||^2
    double expected_energy = 0.0;  // sum rho ||h||^2 d + M T noise_var

    TrialCounters& operator+=(const TrialCounters& o);
    friend bool operator==(const TrialCounters&, const TrialCounters&) = default;
};

struct MetricsPoint {
    double rho0_db = 0.0;
    double ber = 0.0;
    double fer = 0.0;
    double udsr = 0.0;
    long trials = 0;
    double ber_ci = 0.0;  // Wilson 95% half-widths
    double fer_ci = 0.0;
    double udsr_ci = 0.0;
    TrialCounters counters;
};

/// State shared by every trial of one experiment: the config and the
/// precoders (identical for all trials and modes).
class Experiment {
  public:
    explicit Experiment(SystemConfig config);

    [[nodiscard]] const SystemConfig& config() const { return config_; }
    [[nodiscard]] const PrecoderSet& precoders() const { return precoders_; }
    [[nodiscard]] PacketSpec packet() const { return {config_.d, config_.crc_bits}; }

  private:
    SystemConfig config_;
    PrecoderSet precoders_;
};

/// Everything one trial produced, for tests and trace dumps.
struct TrialOutcome {
    TrialCounters counters;
    ChannelRealization realization;
    std::vector<double> powers;  // transmit power per online user
    DetectionReport report;
};

/// One full draw at rho0_db: channel, powers, frames, received signal and
/// ICBOMP. Determined by (master_seed, trial_index); rho0 and mode do not
/// change the random draws.
[[nodiscard]] TrialOutcome run_trial_detailed(const Experiment& experiment, PowerMode mode, double rho0_db,
                                              std::uint64_t trial_index);
[[nodiscard]] TrialCounters run_trial(const Experiment& experiment, PowerMode mode, double rho0_db,
                                      std::uint64_t trial_index);

[[nodiscard]] MetricsPoint compute_metrics(const TrialCounters& counters, double rho0_db);

struct RunOptions {
    unsigned workers = 0;  // 0 = hardware concurrency
    std::filesystem::path out_dir;  // empty = do not write files
    bool overwrite = false;
    const std::atomic<bool>* stop = nullptr;  // cooperative interruption
    std::ostream* log = nullptr;
};

struct ExperimentResult {
    std::map<PowerMode, std::vector<MetricsPoint>> points;
    bool complete = true;
    std::vector<std::filesystem::path> files;
};

/// Sweeps rho0 for every configured mode. Trials are reduced in ascending
/// index order. With an output directory each (experiment, mode) table is
/// streamed to `<name>_<mode>.csv.partial` and renamed to `.csv` once
/// complete; an interrupted run leaves the `.partial` file behind.
[[nodiscard]] ExperimentResult run_experiment(const SystemConfig& config, const RunOptions& options = {});

/// Header `rho0_db,ber,fer,udsr,trials,ber_ci,fer_ci,udsr_ci`.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsPoint& p);

/// Entry point of the command-line tool. Exit codes: 0 success, 1 invalid
/// configuration or usage, 2 runtime failure.
int cli(int argc, const char* const* argv);

}  // namespace jspma
