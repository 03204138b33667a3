#include "jspma/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "jspma/analysis.hpp"
#include "jspma/parallel.hpp"

namespace jspma {

namespace {

constexpr std::uint64_t kTrialTag = 0x7472696c;    // "tril"
constexpr std::uint64_t kChannelTag = 0x6368616e;  // "chan"
constexpr std::uint64_t kPayloadTag = 0x7061796c;  // "payl"
constexpr std::uint64_t kNoiseTag = 0x6e6f6973;    // "nois"
constexpr std::uint64_t kPrecoderSeedTag = 0x70726563;

}  // namespace

TrialCounters& TrialCounters::operator+=(const TrialCounters& o) {
    trials += o.trials;
    active += o.active;
    successes += o.successes;
    exact_frames += o.exact_frames;
    selected_active += o.selected_active;
    false_alarms += o.false_alarms;
    crc_false_pass += o.crc_false_pass;
    infeasible_stops += o.infeasible_stops;
    bit_errors += o.bit_errors;
    bits += o.bits;
    iterations += o.iterations;
    rx_energy += o.rx_energy;
    expected_energy += o.expected_energy;
    return *this;
}

Experiment::Experiment(SystemConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::uint64_t precoder_seed = RandomStream(config_.master_seed).derive(kPrecoderSeedTag).engine_seed();
    precoders_ = generate_precoders(config_.N, config_.T, config_.d, precoder_seed);
}

TrialOutcome run_trial_detailed(const Experiment& experiment, PowerMode mode, double rho0_db,
                                std::uint64_t trial_index) {
    const auto& cfg = experiment.config();
    const PacketSpec packet = experiment.packet();
    const RandomStream stream = RandomStream(cfg.master_seed).derive(kTrialTag, trial_index);
    const double rho0 = std::pow(10.0, rho0_db / 10.0);
    constexpr double noise_var = 1.0;

    TrialOutcome out;
    out.realization = generate_channel(cfg.M, cfg.N, cfg.Na, stream.derive(kChannelTag));
    const auto& real = out.realization;

    const int na_profile = mode == PowerMode::Distributed ? cfg.Na + cfg.na_estimate_offset : cfg.Na;
    const auto profile = ladder(cfg.K, na_profile, cfg.delta, rho0, mode);
    const auto splits = split_points(profile.L, cfg.M);
    const auto assignment = assign_powers(real, profile, splits);
    out.powers = assignment.power;

    // What the receiver assumes for every online user when rebuilding signals.
    std::vector<double> rx_powers(cfg.N, rho0);
    if (mode == PowerMode::Distributed) {
        for (int n = 0; n < cfg.N; ++n) rx_powers[n] = assign_distributed(real.gains[n], profile, splits).power;
    } else if (mode == PowerMode::Centralized) {
        for (int u : real.active_set) rx_powers[u] = assignment.power[u];
    }

    std::vector<UserFrame> frames;
    frames.reserve(real.active_set.size());
    double expected = static_cast<double>(cfg.M) * cfg.T * noise_var;
    for (int u : real.active_set) {
        Sampler bits(stream.derive(kPayloadTag, static_cast<std::uint64_t>(u)));
        Bits payload(packet.payload_bits());
        for (auto& b : payload) b = bits.bit();
        frames.push_back(build_frame(u, payload, packet, experiment.precoders().P[u], assignment.power[u]));
        expected += assignment.power[u] * real.gains[u] * cfg.d;
    }
    const auto rx = synthesize_received(frames, real, cfg.T, noise_var, stream.derive(kNoiseTag));

    ReceiverConfig rcfg;
    rcfg.packet = packet;
    rcfg.max_iters = cfg.effective_max_iters();
    rcfg.noise_var = noise_var;
    rcfg.residual_floor_eps = cfg.residual_floor_eps;
    rcfg.eviction_retries = cfg.eviction_retries;
    out.report = icbomp_detect(rx.Y, experiment.precoders(), real, rx_powers, rcfg);
    const auto& report = out.report;

    TrialCounters& c = out.counters;
    c.trials = 1;
    c.active = static_cast<long>(real.active_set.size());
    c.false_alarms = static_cast<long>(report.false_alarms.size());
    c.infeasible_stops = report.infeasible ? 1 : 0;
    c.iterations = report.iterations();
    c.rx_energy = rx.Y.squaredNorm();
    c.expected_energy = expected;

    const double payload_bits = packet.payload_bits();
    for (std::size_t i = 0; i < real.active_set.size(); ++i) {
        const int u = real.active_set[i];
        const Verdict v = report.verdicts[i];
        const bool selected = v != Verdict::Missed;
        if (selected) ++c.selected_active;
        if (v == Verdict::Verified) {
            const Bits& decoded = report.payloads.at(u);
            long errors = 0;
            for (std::size_t b = 0; b < frames[i].payload.size(); ++b) errors += decoded[b] != frames[i].payload[b];
            if (errors == 0) {
                ++c.exact_frames;
            } else {
                ++c.crc_false_pass;
            }
            c.bit_errors += static_cast<double>(errors);
            c.bits += payload_bits;
        } else {
            switch (cfg.missed_user_ber_rule) {
                case MissedBerRule::Half:
                    c.bit_errors += 0.5 * payload_bits;
                    c.bits += payload_bits;
                    break;
                case MissedBerRule::All:
                    c.bit_errors += payload_bits;
                    c.bits += payload_bits;
                    break;
                case MissedBerRule::Exclude: break;
            }
        }
    }
    // Inactive users that pass the CRC are false passes too.
    for (int u : report.false_alarms) {
        if (report.is_verified(u)) ++c.crc_false_pass;
    }
    c.successes = cfg.udsr_rule == UdsrRule::Verified ? c.exact_frames : c.selected_active;
    return out;
}

TrialCounters run_trial(const Experiment& experiment, PowerMode mode, double rho0_db, std::uint64_t trial_index) {
    return run_trial_detailed(experiment, mode, rho0_db, trial_index).counters;
}

MetricsPoint compute_metrics(const TrialCounters& c, double rho0_db) {
    if (c.trials < 1) throw std::invalid_argument("compute_metrics: need at least one trial");
    MetricsPoint p;
    p.rho0_db = rho0_db;
    p.trials = c.trials;
    p.counters = c;
    const double active = static_cast<double>(c.active);
    if (active > 0) {
        p.udsr = c.successes / active;
        p.fer = (active - static_cast<double>(c.exact_frames)) / active;
        const auto u = wilson_interval(static_cast<double>(c.successes), active);
        const auto f = wilson_interval(active - static_cast<double>(c.exact_frames), active);
        p.udsr_ci = 0.5 * (u.high - u.low);
        p.fer_ci = 0.5 * (f.high - f.low);
    } else {
        p.udsr = 1.0;
        p.fer = 0.0;
    }
    if (c.bits > 0.0) {
        p.ber = c.bit_errors / c.bits;
        const auto b = wilson_interval(c.bit_errors, c.bits);
        p.ber_ci = 0.5 * (b.high - b.low);
    } else {
        p.ber = std::nan("");
        p.ber_ci = std::nan("");
    }
    return p;
}

void write_metrics_header(std::ostream& out) { out << "rho0_db,ber,fer,udsr,trials,ber_ci,fer_ci,udsr_ci\n"; }

void write_metrics_row(std::ostream& out, const MetricsPoint& p) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%ld,%.6g,%.6g,%.6g\n", p.rho0_db, p.ber, p.fer, p.udsr,
                  p.trials, p.ber_ci, p.fer_ci, p.udsr_ci);
    out << buf;
}

ExperimentResult run_experiment(const SystemConfig& config, const RunOptions& options) {
    const Experiment experiment(config);
    ExperimentResult result;

    for (PowerMode mode : config.modes) {
        std::filesystem::path final_path;
        std::filesystem::path partial_path;
        std::ofstream csv;
        if (!options.out_dir.empty()) {
            std::filesystem::create_directories(options.out_dir);
            final_path = options.out_dir / (config.name + "_" + std::string(to_string(mode)) + ".csv");
            partial_path = final_path;
            partial_path += ".partial";
            if (std::filesystem::exists(final_path) && !options.overwrite) {
                throw ConfigError("--overwrite", "output '" + final_path.string() + "' exists");
            }
            csv.open(partial_path, std::ios::trunc);
            if (!csv) throw std::runtime_error("cannot write '" + partial_path.string() + "'");
            write_metrics_header(csv);
            csv.flush();
        }

        auto& points = result.points[mode];
        for (double rho0_db : config.rho0_db) {
            std::vector<TrialCounters> per_trial(config.trials);
            std::vector<std::uint8_t> done(config.trials, 0);
            parallel_for(static_cast<std::size_t>(config.trials), options.workers, [&](std::size_t t) {
                if (options.stop && options.stop->load()) return;
                per_trial[t] = run_trial(experiment, mode, rho0_db, t);
                done[t] = 1;
            });
            TrialCounters total;
            bool complete = true;
            for (int t = 0; t < config.trials; ++t) {
                if (!done[t]) {
                    complete = false;
                    break;
                }
                total += per_trial[t];
            }
            if (!complete) {
                result.complete = false;
                break;
            }
            const auto point = compute_metrics(total, rho0_db);
            points.push_back(point);
            if (csv.is_open()) {
                write_metrics_row(csv, point);
                csv.flush();
            }
            if (options.log) {
                char buf[200];
                std::snprintf(buf, sizeof buf, "%-18s rho0=%5.1f dB  udsr=%.4f  fer=%.4f  ber=%.3e\n",
                              std::string(to_string(mode)).c_str(), rho0_db, point.udsr, point.fer, point.ber);
                *options.log << buf << std::flush;
            }
        }

        if (csv.is_open()) {
            csv.close();
            if (result.complete) {
                std::filesystem::rename(partial_path, final_path);
                result.files.push_back(final_path);
            } else {
                result.files.push_back(partial_path);
            }
        }
        if (!result.complete) break;
    }
    return result;
}

}  // namespace jspma
