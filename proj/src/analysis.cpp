#include "jspma/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "jspma/channel.hpp"
#include "jspma/parallel.hpp"

namespace jspma {

namespace {

constexpr double kFerFloor = 1e-8;
constexpr std::uint64_t kCalibrationTag = 0x63616c69;  // "cali"
constexpr std::uint64_t kAnalysisTag = 0x616e6c79;     // "anly"

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace

// ---------------------------------------------------------------------------
// FerCurve

FerCurve::FerCurve(std::vector<double> snr_db, std::vector<double> fer) : snr_db_(std::move(snr_db)), fer_(std::move(fer)) {
    if (snr_db_.size() != fer_.size()) throw std::invalid_argument("FerCurve: column lengths differ");
    if (snr_db_.empty()) throw std::invalid_argument("FerCurve: no points");
    for (std::size_t i = 0; i < fer_.size(); ++i) {
        if (!(fer_[i] > 0.0 && fer_[i] <= 1.0)) throw std::invalid_argument("FerCurve: fer must lie in (0, 1]");
        if (i > 0 && !(snr_db_[i] > snr_db_[i - 1])) throw std::invalid_argument("FerCurve: snr must increase");
        if (i > 0 && fer_[i] > fer_[i - 1]) throw std::invalid_argument("FerCurve: fer must not increase");
    }
}

double FerCurve::at_db(double x) const {
    if (snr_db_.empty()) throw std::logic_error("FerCurve: empty curve");
    if (x < snr_db_.front()) return 1.0;
    const std::size_t n = snr_db_.size();
    if (x >= snr_db_.back()) {
        if (n < 2) return std::max(kFerFloor, fer_.back());
        const double slope = (std::log10(fer_[n - 1]) - std::log10(fer_[n - 2])) / (snr_db_[n - 1] - snr_db_[n - 2]);
        const double lf = std::log10(fer_[n - 1]) + std::min(slope, 0.0) * (x - snr_db_[n - 1]);
        return std::max(kFerFloor, std::pow(10.0, lf));
    }
    const auto it = std::upper_bound(snr_db_.begin(), snr_db_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - snr_db_.begin()) - 1;
    const double w = (x - snr_db_[i]) / (snr_db_[i + 1] - snr_db_[i]);
    const double lf = (1.0 - w) * std::log10(fer_[i]) + w * std::log10(fer_[i + 1]);
    return std::max(kFerFloor, std::pow(10.0, lf));
}

double FerCurve::operator()(double snr_linear) const {
    if (!(snr_linear > 0.0)) return 1.0;
    return at_db(10.0 * std::log10(snr_linear));
}

double FerCurve::crossing_db(double target) const {
    if (snr_db_.empty() || !(target > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (fer_.front() <= target) return snr_db_.front();
    const double lt = std::log10(target);
    for (std::size_t i = 1; i < fer_.size(); ++i) {
        if (fer_[i] <= target) {
            const double a = std::log10(fer_[i - 1]);
            const double b = std::log10(fer_[i]);
            return snr_db_[i - 1] + (lt - a) / (b - a) * (snr_db_[i] - snr_db_[i - 1]);
        }
    }
    const std::size_t n = fer_.size();
    if (n < 2 || target < kFerFloor) return std::numeric_limits<double>::quiet_NaN();
    const double slope = (std::log10(fer_[n - 1]) - std::log10(fer_[n - 2])) / (snr_db_[n - 1] - snr_db_[n - 2]);
    if (!(slope < 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return snr_db_[n - 1] + (lt - std::log10(fer_[n - 1])) / slope;
}

void FerCurve::write_csv(std::ostream& out) const {
    out << "snr_db,fer\n" << std::setprecision(12);
    for (std::size_t i = 0; i < snr_db_.size(); ++i) out << snr_db_[i] << ',' << fer_[i] << '\n';
}

FerCurve FerCurve::read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("snr_db,fer", 0) != 0) {
        throw std::invalid_argument("FerCurve: expected header 'snr_db,fer'");
    }
    std::vector<double> snr;
    std::vector<double> fer;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("FerCurve: malformed row '" + line + "'");
        snr.push_back(std::stod(line.substr(0, comma)));
        fer.push_back(std::stod(line.substr(comma + 1)));
    }
    return FerCurve(std::move(snr), std::move(fer));
}

FerCurve FerCurve::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open FER curve '" + path.string() + "'");
    return read_csv(in);
}

Interval wilson_interval(double successes, double n, double z) {
    if (!(n > 0.0)) return {0.0, 1.0};
    const double p = successes / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

Calibration calibrate_fer_curve(const PacketSpec& packet, const std::vector<double>& snr_db_grid,
                                int trials_per_point, std::uint64_t seed, unsigned workers) {
    packet.validate();
    if (snr_db_grid.empty()) throw std::invalid_argument("calibrate_fer_curve: empty grid");
    for (std::size_t i = 1; i < snr_db_grid.size(); ++i) {
        if (!(snr_db_grid[i] > snr_db_grid[i - 1])) {
            throw std::invalid_argument("calibrate_fer_curve: grid must be strictly increasing");
        }
    }
    if (trials_per_point < 1) throw std::invalid_argument("calibrate_fer_curve: trials must be positive");

    const std::size_t points = snr_db_grid.size();
    const std::size_t per = static_cast<std::size_t>(trials_per_point);
    std::vector<std::uint8_t> failed(points * per, 0);
    const RandomStream root(seed);

    parallel_for(points * per, workers, [&](std::size_t cell) {
        const std::size_t p = cell / per;
        const std::size_t t = cell % per;
        Sampler draw(root.derive(kCalibrationTag, p, t));
        Bits payload(packet.payload_bits());
        for (auto& b : payload) b = draw.bit();
        const auto symbols = qpsk_map(conv_encode(crc_attach(payload, packet.payload_bits())));
        const double noise_var = 1.0 / db_to_linear(snr_db_grid[p]);
        std::vector<cplx> rx(symbols.size());
        for (std::size_t i = 0; i < symbols.size(); ++i) rx[i] = symbols[i] + draw.complex_gaussian(noise_var);
        const Bits message = viterbi_decode(qpsk_soft_demap(rx, noise_var));
        const bool ok = crc_check(message) && std::equal(payload.begin(), payload.end(), message.begin());
        failed[cell] = ok ? 0 : 1;
    });

    Calibration result;
    std::vector<double> rate(points);
    std::vector<double> weight(points, static_cast<double>(per));
    for (std::size_t p = 0; p < points; ++p) {
        CalibrationPoint cp;
        cp.snr_db = snr_db_grid[p];
        cp.trials = trials_per_point;
        cp.errors = std::accumulate(failed.begin() + p * per, failed.begin() + (p + 1) * per, 0L);
        const auto ci = wilson_interval(static_cast<double>(cp.errors), static_cast<double>(cp.trials));
        cp.ci_low = ci.low;
        cp.ci_high = ci.high;
        cp.wide_interval = !(ci.low > 0.0) || ci.high / ci.low > 10.0;
        rate[p] = static_cast<double>(cp.errors) / cp.trials;
        result.points.push_back(cp);
    }

    // Pool-adjacent-violators for a nonincreasing fit.
    struct Block {
        double value;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t p = 0; p < points; ++p) {
        blocks.push_back({rate[p], weight[p], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value < blocks.back().value) {
            auto last = blocks.back();
            blocks.pop_back();
            auto& prev = blocks.back();
            prev.value = (prev.value * prev.weight + last.value * last.weight) / (prev.weight + last.weight);
            prev.weight += last.weight;
            prev.count += last.count;
        }
    }
    std::vector<double> fitted;
    for (const auto& b : blocks) fitted.insert(fitted.end(), b.count, b.value);

    std::vector<double> snr;
    std::vector<double> fer;
    for (std::size_t p = 0; p < points; ++p) {
        if (fitted[p] <= 0.0) break;
        snr.push_back(snr_db_grid[p]);
        fer.push_back(std::min(1.0, fitted[p]));
    }
    if (snr.empty()) throw std::runtime_error("calibrate_fer_curve: no frame errors observed at any grid point");
    result.curve = FerCurve(std::move(snr), std::move(fer));
    return result;
}

// ---------------------------------------------------------------------------
// SINR and aggregation

double sinr_after_sic(double signal, double interference, double stuck, const LinkDims& dims) {
    const double MT = dims.MT();
    double prefactor = 1.0;
    try {
        prefactor = 1.0 / mean_inverse_eigenvalue(MT, stuck * dims.d);
    } catch (const std::domain_error& e) {
        throw SaturationError(e.what());
    }
    return prefactor * signal / (dims.d / MT * interference + 1.0);
}

double sinr_group(int l, int k, std::span<const double> ranked_gains, const PowerProfile& profile, double stuck,
                  const LinkDims& dims, InterferenceIndexing indexing) {
    const int Na = static_cast<int>(ranked_gains.size());
    if (l < 1 || l > profile.L || k < 1 || k > profile.K) throw std::invalid_argument("sinr_group: (l, k) out of range");
    const int n = (l - 1) * profile.K + k;  // 1-based rank
    if (n > Na) throw std::invalid_argument("sinr_group: user index beyond the ranked gains");
    const auto group_of = [&](int rank) { return std::min((rank - 1) / profile.K + 1, profile.L); };

    double interference = 0.0;
    if (indexing == InterferenceIndexing::NotYetDetected) {
        for (int j = n + 1; j <= Na; ++j) interference += profile.beta_of(group_of(j)) * ranked_gains[j - 1];
    } else {
        for (int l0 = l + 1; l0 <= profile.L; ++l0) {
            double inner = 0.0;
            for (int k0 = k + 1; k0 <= profile.K; ++k0) {
                const int j = (l0 - 1) * profile.K + k0;
                if (j <= Na) inner += ranked_gains[j - 1];
            }
            interference += profile.beta_of(l0) * inner;
        }
    }
    return sinr_after_sic(profile.beta_of(l) * ranked_gains[n - 1], interference, stuck, dims);
}

double ber_qpsk(double sinr) {
    if (sinr < 0.0) throw std::invalid_argument("ber_qpsk: negative SINR");
    return q_function(std::sqrt(sinr));
}

double aggregate(std::span<const double> per_user) {
    if (per_user.empty()) throw std::invalid_argument("aggregate: no users");
    return std::accumulate(per_user.begin(), per_user.end(), 0.0) / static_cast<double>(per_user.size());
}

// ---------------------------------------------------------------------------
// Theoretical FER

TheoreticalRun theoretical_fer(std::span<const double> ranked_gains, std::span<const double> ranked_powers,
                               const FerFunction& q2, const LinkDims& dims, const TheoreticalOptions& options) {
    const std::size_t Na = ranked_gains.size();
    if (ranked_powers.size() != Na) throw std::invalid_argument("theoretical_fer: gains and powers differ in length");
    for (std::size_t i = 1; i < Na; ++i) {
        if (ranked_gains[i] > ranked_gains[i - 1]) {
            throw std::invalid_argument("theoretical_fer: users must be in descending gain order");
        }
    }

    TheoreticalRun run;
    run.fer.assign(Na, 0.0);
    run.okrate.assign(Na, 0.0);
    run.sinr.assign(Na, 0.0);
    run.stuck.assign(Na, 0.0);
    if (Na == 0) return run;

    // Received power rho_j g_j of all users ranked after n.
    std::vector<double> tail(Na + 1, 0.0);
    for (std::size_t j = Na; j-- > 0;) tail[j] = tail[j + 1] + ranked_powers[j] * ranked_gains[j];

    const double MT = dims.MT();
    for (std::size_t n = 0; n < Na; ++n) {
        double n2 = 0.0;
        const std::size_t upto = options.causal_n2 ? n : n + 1;
        for (std::size_t i = 0; i < upto; ++i) n2 += run.okrate[i];
        const double stuck = std::max(0.0, static_cast<double>(n) - n2);
        run.stuck[n] = stuck;
        if (stuck * dims.d >= MT) {
            throw SaturationError("theoretical_fer: " + std::to_string(stuck) + " stuck users fill M*T at rank " +
                                  std::to_string(n + 1));
        }

        std::vector<std::size_t> visit;
        for (std::size_t m = 0; m < n; ++m) {
            if (run.okrate[m] < 1.0 - options.stuck_threshold) visit.push_back(m);
        }
        visit.push_back(n);

        const double interference = tail[n + 1];
        for (std::size_t m : visit) {
            const double sinr =
                (1.0 - stuck * dims.d / MT) * ranked_powers[m] * ranked_gains[m] / (dims.d / MT * interference + 1.0);
            run.sinr[m] = sinr;
            run.fer[m] = std::clamp(q2(sinr), 0.0, 1.0);
            run.okrate[m] += (1.0 - run.okrate[m]) * (1.0 - run.fer[m]);
            if (options.record_history) run.history.push_back({static_cast<int>(m), run.okrate[m]});
        }
    }

    run.fer_mean = aggregate(run.fer);
    std::vector<double> ber(Na);
    for (std::size_t i = 0; i < Na; ++i) ber[i] = ber_qpsk(run.sinr[i]);
    run.ber_mean = aggregate(ber);
    return run;
}

TheoreticalRun theoretical_fer(const ChannelRealization& realization, const PowerProfile& profile,
                               const SplitPoints& splits, const FerFunction& q2, const LinkDims& dims,
                               bool use_ordered_means, const TheoreticalOptions& options) {
    const auto assignment = assign_powers(realization, profile, splits);
    const auto& order = realization.descending_order;
    std::vector<double> gains(order.size());
    std::vector<double> powers(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        gains[i] = realization.gains[order[i]];
        powers[i] = assignment.power[order[i]];
    }
    if (use_ordered_means && !order.empty()) {
        const auto& stats = ordered_gain_means(static_cast<int>(order.size()), realization.M);
        gains = stats.means;
    }
    return theoretical_fer(gains, powers, q2, dims, options);
}

TheoreticalAverage average_theoretical_fer(const SystemConfig& config, PowerMode mode, double delta, double rho0_db,
                                           const FerFunction& q2, int trials, unsigned workers) {
    if (trials < 1) throw std::invalid_argument("average_theoretical_fer: trials must be positive");
    const LinkDims dims{config.M, config.T, config.d};
    const double rho0 = db_to_linear(rho0_db);
    const int na_profile = mode == PowerMode::Distributed ? config.Na + config.na_estimate_offset : config.Na;
    const auto profile = ladder(config.K, na_profile, delta, rho0, mode);
    const auto splits = split_points(profile.L, config.M);
    const RandomStream root(config.master_seed);

    std::vector<double> fer(trials, 1.0);
    std::vector<double> ber(trials, 0.5);
    std::vector<std::uint8_t> saturated(trials, 0);
    parallel_for(static_cast<std::size_t>(trials), workers, [&](std::size_t t) {
        const auto realization = generate_channel(config.M, config.N, config.Na, root.derive(kAnalysisTag, t));
        try {
            const auto run = theoretical_fer(realization, profile, splits, q2, dims);
            fer[t] = run.fer_mean;
            ber[t] = run.ber_mean;
        } catch (const SaturationError&) {
            saturated[t] = 1;
        }
    });

    TheoreticalAverage avg;
    for (int t = 0; t < trials; ++t) {
        avg.fer += fer[t];
        avg.ber += ber[t];
        avg.saturated += saturated[t];
    }
    avg.fer /= trials;
    avg.ber /= trials;
    return avg;
}

DeltaSearch tune_delta(const SystemConfig& config, const std::vector<double>& grid, int trials, double rho0_db,
                       const FerFunction& q2, unsigned workers) {
    if (grid.empty()) throw std::invalid_argument("tune_delta: empty grid");
    PowerMode mode = PowerMode::Distributed;
    for (auto m : config.modes) {
        if (m != PowerMode::Uniform) {
            mode = m;
            break;
        }
    }
    DeltaSearch search;
    for (double delta : grid) {
        if (!(delta >= 0.0)) throw std::invalid_argument("tune_delta: delta must be >= 0");
        const auto avg = average_theoretical_fer(config, mode, delta, rho0_db, q2, trials, workers);
        search.table.push_back({delta, avg.fer, avg.saturated});
    }
    for (std::size_t i = 1; i < search.table.size(); ++i) {
        const auto& row = search.table[i];
        const auto& best = search.table[search.best];
        if (row.mean_fer < best.mean_fer || (row.mean_fer == best.mean_fer && row.delta < best.delta)) search.best = i;
    }
    return search;
}

void write_csv(std::ostream& out, const DeltaSearch& search) {
    out << "delta,mean_fer,best\n" << std::setprecision(10);
    for (std::size_t i = 0; i < search.table.size(); ++i) {
        out << search.table[i].delta << ',' << search.table[i].mean_fer << ',' << (i == search.best ? "*" : "")
            << '\n';
    }
}

}  // namespace jspma
