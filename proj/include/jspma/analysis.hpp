#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "jspma/config.hpp"
#include "jspma/phy.hpp"
#include "jspma/power.hpp"

namespace jspma {

/// Stuck users fill the measurement space (N' d >= M T); the SINR model is undefined.
class SaturationError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

struct LinkDims {
    int M = 4;
    int T = 160;
    int d = 32;
    [[nodiscard]] double MT() const { return static_cast<double>(M) * T; }
};

// ---------------------------------------------------------------------------
// FER as a function of per-symbol SNR for one user on AWGN.

class FerCurve {
  public:
    FerCurve() = default;
    /// snr_db strictly increasing, fer in (0, 1] and nonincreasing.
    FerCurve(std::vector<double> snr_db, std::vector<double> fer);

    /// FER at a linear SNR. Below the first point the curve is clamped to 1;
    /// beyond the last it continues log-linearly with a floor of 1e-8.
    [[nodiscard]] double operator()(double snr_linear) const;
    [[nodiscard]] double at_db(double snr_db) const;

    /// SNR (dB) where the curve first drops to target; NaN if it never does
    /// inside the tabulated range.
    [[nodiscard]] double crossing_db(double target) const;

    [[nodiscard]] const std::vector<double>& snr_db() const { return snr_db_; }
    [[nodiscard]] const std::vector<double>& fer() const { return fer_; }
    [[nodiscard]] bool empty() const { return snr_db_.empty(); }

    /// `snr_db,fer` with a header line.
    void write_csv(std::ostream& out) const;
    [[nodiscard]] static FerCurve read_csv(std::istream& in);
    [[nodiscard]] static FerCurve load(const std::filesystem::path& path);

  private:
    std::vector<double> snr_db_;
    std::vector<double> fer_;
};

struct CalibrationPoint {
    double snr_db = 0.0;
    long trials = 0;
    long errors = 0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool wide_interval = false;  // Wilson bounds more than a decade apart
};

struct Calibration {
    FerCurve curve;
    std::vector<CalibrationPoint> points;
};

/// Single-user AWGN link: payload -> CRC -> code -> QPSK -> noise -> soft
/// Viterbi -> CRC, at each grid SNR. Monotone regression is applied before
/// the curve is built; points with no observed errors are left to the
/// log-linear extrapolation.
[[nodiscard]] Calibration calibrate_fer_curve(const PacketSpec& packet, const std::vector<double>& snr_db_grid,
                                              int trials_per_point, std::uint64_t seed, unsigned workers = 1);

/// Wilson score interval (z = 1.96) for successes out of n.
struct Interval {
    double low = 0.0;
    double high = 0.0;
};
[[nodiscard]] Interval wilson_interval(double successes, double n, double z = 1.96);

// ---------------------------------------------------------------------------
// SINR, BER and aggregation

/// Which later users contribute interference to user (l, k).
enum class InterferenceIndexing {
    NotYetDetected,  // every user ranked after (l, k)
    Literal,         // l0 > l and k0 > k only, as the double sum is printed
};

/// SINR of the k-th user of group l (both 1-based) after perfect SIC with
/// `stuck` users still in the joint estimate. ranked_gains are in descending
/// order (actual gains or ordered means).
[[nodiscard]] double sinr_group(int l, int k, std::span<const double> ranked_gains, const PowerProfile& profile,
                                double stuck, const LinkDims& dims,
                                InterferenceIndexing indexing = InterferenceIndexing::NotYetDetected);

/// ((MT - N'd)/MT) * signal / ((d/MT) * interference + 1).
[[nodiscard]] double sinr_after_sic(double signal, double interference, double stuck, const LinkDims& dims);

/// Uncoded QPSK bit error probability Q(sqrt(sinr)).
[[nodiscard]] double ber_qpsk(double sinr);

/// Arithmetic mean over the active users.
[[nodiscard]] double aggregate(std::span<const double> per_user);

// ---------------------------------------------------------------------------
// Theoretical FER by iterated decoding attempts

struct TheoreticalOptions {
    /// N2 sums OKRate over users visited before n (true) or through n (false).
    bool causal_n2 = true;
    double stuck_threshold = 1e-6;  // visited users with OKRate < 1 - threshold are stuck
    bool record_history = false;
};

struct OkRateUpdate {
    int user = 0;  // rank, 0-based
    double value = 0.0;
};

struct TheoreticalRun {
    std::vector<double> fer;      // per rank, last evaluation
    std::vector<double> okrate;   // per rank
    std::vector<double> sinr;     // per rank, last evaluation
    std::vector<double> stuck;    // fractional N' seen at each step n
    std::vector<OkRateUpdate> history;
    double fer_mean = 0.0;
    double ber_mean = 0.0;
};

using FerFunction = std::function<double(double)>;

/// Users are visited in descending-gain order; ranked_powers[i] is the power
/// of the user with ranked_gains[i]. Throws SaturationError when N'd >= MT.
[[nodiscard]] TheoreticalRun theoretical_fer(std::span<const double> ranked_gains,
                                             std::span<const double> ranked_powers, const FerFunction& q2,
                                             const LinkDims& dims, const TheoreticalOptions& options = {});

/// Convenience: powers from the profile's mode; with use_ordered_means the
/// gains are replaced by their order-statistic means.
[[nodiscard]] TheoreticalRun theoretical_fer(const ChannelRealization& realization, const PowerProfile& profile,
                                             const SplitPoints& splits, const FerFunction& q2, const LinkDims& dims,
                                             bool use_ordered_means = false, const TheoreticalOptions& options = {});

/// Theoretical FER averaged over `trials` random realizations of the config.
/// A saturated realization counts as FER 1.
struct TheoreticalAverage {
    double fer = 0.0;
    double ber = 0.0;
    int saturated = 0;
};
[[nodiscard]] TheoreticalAverage average_theoretical_fer(const SystemConfig& config, PowerMode mode, double delta,
                                                         double rho0_db, const FerFunction& q2, int trials,
                                                         unsigned workers = 1);

struct DeltaRow {
    double delta = 0.0;
    double mean_fer = 0.0;
    int saturated = 0;
};

struct DeltaSearch {
    std::vector<DeltaRow> table;
    std::size_t best = 0;
    [[nodiscard]] double best_delta() const { return table.at(best).delta; }
};

/// Monte-Carlo search over delta; ties go to the smaller delta. All grid
/// points share the same channel draws.
[[nodiscard]] DeltaSearch tune_delta(const SystemConfig& config, const std::vector<double>& grid, int trials,
                                     double rho0_db, const FerFunction& q2, unsigned workers = 1);

/// `delta,mean_fer,best` (best marked with '*').
void write_csv(std::ostream& out, const DeltaSearch& search);

}  // namespace jspma
