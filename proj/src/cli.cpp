#include <csignal>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jspma/analysis.hpp"
#include "jspma/harness.hpp"

namespace jspma {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop = true; }

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string mode;
    std::optional<int> trials;
    bool overwrite = false;
    unsigned workers = 0;
    std::string fer_curve;
};

SystemConfig resolve_config(const CommonFlags& f) {
    SystemConfig c = f.config_path.empty() ? SystemConfig{} : load_config(f.config_path);
    if (f.seed) c.master_seed = *f.seed;
    if (f.trials) c.trials = *f.trials;
    if (!f.mode.empty()) {
        try {
            c.modes = {parse_power_mode(f.mode)};
        } catch (const std::invalid_argument& e) {
            throw ConfigError("mode", e.what());
        }
    }
    c.validate();
    return c;
}

std::vector<double> default_calibration_grid() {
    std::vector<double> grid;
    for (double x = -4.0; x <= 8.0 + 1e-9; x += 0.5) grid.push_back(x);
    return grid;
}

FerCurve obtain_curve(const CommonFlags& f, const SystemConfig& c, std::ostream& log) {
    if (!f.fer_curve.empty()) return FerCurve::load(f.fer_curve);
    log << "# no --fer-curve given; calibrating a single-user curve for d=" << c.d << '\n';
    return calibrate_fer_curve(PacketSpec{c.d, c.crc_bits}, default_calibration_grid(), 4000, c.master_seed, f.workers)
        .curve;
}

void print_overview(const SystemConfig& c, std::ostream& out) {
    const double load = overloading_factor(c.Na, c.M, c.T, c.d);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "# M=%d N=%d Na=%d d=%d T=%d K=%d delta=%.4g | resources M*T/d=%.4g, load Na*d/(M*T)=%.4g "
                  "(overloading factor %.0f%%)\n",
                  c.M, c.N, c.Na, c.d, c.T, c.K, c.delta, static_cast<double>(c.M) * c.T / c.d, load, 100.0 * load);
    out << buf;
    const auto profile = ladder(c.K, c.Na, c.delta, 1.0);
    if (profile.flat_branch()) {
        out << "# delta = 0: flat ladder, beta_1 = rho0 (not the constant 1)\n";
    }
}

std::ofstream open_output(const std::string& out_dir, const std::string& file, bool overwrite,
                          std::filesystem::path& path) {
    std::filesystem::create_directories(out_dir);
    path = std::filesystem::path(out_dir) / file;
    if (std::filesystem::exists(path) && !overwrite) {
        throw ConfigError("--overwrite", "output '" + path.string() + "' exists");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

// Writes to --out/<file> when an output directory is set, else to stdout.
void emit(const CommonFlags& f, const std::string& file, const std::function<void(std::ostream&)>& body) {
    if (f.out_dir.empty()) {
        body(std::cout);
        return;
    }
    std::filesystem::path path;
    auto out = open_output(f.out_dir, file, f.overwrite, path);
    body(out);
    std::cout << "wrote " << path.string() << '\n';
}

int cmd_simulate(const CommonFlags& f) {
    const auto c = resolve_config(f);
    print_overview(c, std::cout);
    RunOptions opts;
    opts.workers = f.workers;
    opts.out_dir = f.out_dir;
    opts.overwrite = f.overwrite;
    opts.stop = &g_stop;
    opts.log = &std::cerr;
    std::signal(SIGINT, on_interrupt);
    const auto result = run_experiment(c, opts);
    std::signal(SIGINT, SIG_DFL);

    for (const auto& [mode, points] : result.points) {
        std::cout << "# mode " << to_string(mode) << '\n';
        write_metrics_header(std::cout);
        for (const auto& p : points) write_metrics_row(std::cout, p);
        TrialCounters total;
        for (const auto& p : points) total += p.counters;
        if (total.expected_energy > 0) {
            std::cout << "# energy audit: received/expected = " << total.rx_energy / total.expected_energy
                      << ", false alarms = " << total.false_alarms << ", crc false passes = " << total.crc_false_pass
                      << ", infeasible stops = " << total.infeasible_stops << '\n';
        }
    }
    for (const auto& file : result.files) std::cout << "wrote " << file.string() << '\n';
    if (!result.complete) {
        std::cerr << "interrupted: partial results kept in .partial files\n";
        return 2;
    }
    return 0;
}

int cmd_analyze(const CommonFlags& f, bool ordered_means) {
    const auto c = resolve_config(f);
    print_overview(c, std::cout);
    const auto curve = obtain_curve(f, c, std::cout);
    const LinkDims dims{c.M, c.T, c.d};
    for (PowerMode mode : c.modes) {
        emit(f, c.name + "_" + std::string(to_string(mode)) + "_theory.csv", [&](std::ostream& out) {
            out << "rho0_db,fer,ber,saturated\n" << std::setprecision(10);
            for (double rho0_db : c.rho0_db) {
                TheoreticalAverage avg;
                if (!ordered_means) {
                    avg = average_theoretical_fer(c, mode, c.delta, rho0_db, curve, c.trials, f.workers);
                } else {
                    // Single evaluation on the order-statistic means.
                    const double rho0 = std::pow(10.0, rho0_db / 10.0);
                    const auto& stats = ordered_gain_means(c.Na, c.M);
                    const auto profile = ladder(c.K, c.Na, c.delta, rho0, mode);
                    const auto splits = split_points(profile.L, c.M);
                    std::vector<double> powers(c.Na);
                    for (int r = 0; r < c.Na; ++r) {
                        powers[r] = mode == PowerMode::Distributed
                                        ? assign_distributed(stats.means[r], profile, splits).power
                                        : profile.beta_of(std::min(r / c.K + 1, profile.L));
                    }
                    try {
                        const auto run = theoretical_fer(stats.means, powers, curve, dims);
                        avg.fer = run.fer_mean;
                        avg.ber = run.ber_mean;
                    } catch (const SaturationError&) {
                        avg.fer = 1.0;
                        avg.ber = 0.5;
                        avg.saturated = 1;
                    }
                }
                out << rho0_db << ',' << avg.fer << ',' << avg.ber << ',' << avg.saturated << '\n';
            }
        });
    }
    return 0;
}

int cmd_tune(const CommonFlags& f, const std::vector<double>& grid_flag, std::optional<double> rho0_flag) {
    const auto c = resolve_config(f);
    print_overview(c, std::cout);
    const auto curve = obtain_curve(f, c, std::cout);
    const auto& grid = grid_flag.empty() ? c.delta_grid : grid_flag;
    const double rho0_db = rho0_flag ? *rho0_flag : c.tuning_rho0_db();
    std::cout << "# tuning at rho0 = " << rho0_db << " dB over " << c.trials << " realizations\n";
    const auto search = tune_delta(c, grid, c.trials, rho0_db, curve, f.workers);
    emit(f, c.name + "_delta.csv", [&](std::ostream& out) { write_csv(out, search); });
    std::cout << "# best delta = " << search.best_delta() << '\n';
    return 0;
}

int cmd_calibrate(const CommonFlags& f, double lo, double hi, double step, int trials) {
    const auto c = resolve_config(f);
    std::vector<double> grid;
    for (double x = lo; x <= hi + 1e-9; x += step) grid.push_back(x);
    const auto cal = calibrate_fer_curve(PacketSpec{c.d, c.crc_bits}, grid, trials, c.master_seed, f.workers);
    for (const auto& p : cal.points) {
        if (p.wide_interval) {
            std::cerr << "warning: snr " << p.snr_db << " dB: Wilson interval [" << p.ci_low << ", " << p.ci_high
                      << "] spans more than a decade (" << p.errors << "/" << p.trials << ")\n";
        }
    }
    emit(f, "fer_curve_d" + std::to_string(c.d) + ".csv", [&](std::ostream& out) { cal.curve.write_csv(out); });
    std::cout << "# FER = 1e-2 at " << cal.curve.crossing_db(1e-2) << " dB\n";
    return 0;
}

int cmd_orderstats(const CommonFlags& f, int Na, int M, int L) {
    const auto& stats = ordered_gain_means(Na, M);
    emit(f, "orderstats_Na" + std::to_string(Na) + "_M" + std::to_string(M) + ".csv",
         [&](std::ostream& out) { write_csv(out, stats); });
    const double total = std::accumulate(stats.means.begin(), stats.means.end(), 0.0);
    std::cout << "# sum of means = " << std::setprecision(10) << total << " (Na*M = " << Na * M << ")\n";
    if (L > 0) {
        emit(f, "splits_L" + std::to_string(L) + "_M" + std::to_string(M) + ".csv",
             [&](std::ostream& out) { write_csv(out, split_points(L, M)); });
    }
    return 0;
}

int cmd_check(const CommonFlags& f) {
    const auto c = resolve_config(f);
    print_overview(c, std::cout);
    int failed = 0;
    const auto report = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "PASS " : "FAIL ") << what << '\n';
        if (!ok) ++failed;
    };

    const auto& stats = ordered_gain_means(c.Na, c.M);
    const double total = std::accumulate(stats.means.begin(), stats.means.end(), 0.0);
    report(std::abs(total - c.Na * c.M) <= 1e-3 * c.Na * c.M, "ordered gain means sum to Na*M");
    bool decreasing = true;
    for (std::size_t i = 1; i < stats.means.size(); ++i) decreasing &= stats.means[i] < stats.means[i - 1];
    report(decreasing, "ordered gain means strictly decreasing");

    const auto profile = ladder(c.K, c.Na, c.delta, 1.0);
    double power = 0.0;
    for (int l = 1; l <= profile.L; ++l) power += profile.group_sizes[l - 1] * profile.beta_of(l);
    report(std::abs(power - c.Na) <= 1e-9 * c.Na, "ladder conserves total power");

    const auto splits = split_points(profile.L, c.M);
    bool equal_mass = true;
    for (int l = 1; l <= splits.L; ++l) {
        const double upper = l == 1 ? 1.0 : chi2_cdf(splits.x[l - 1], c.M);
        equal_mass &= std::abs(upper - chi2_cdf(splits.x[l], c.M) - 1.0 / splits.L) <= 1e-8;
    }
    report(equal_mass, "split points carry equal probability");

    const Experiment experiment(c);
    bool unit_columns = true;
    for (const auto& P : experiment.precoders().P)
        for (Eigen::Index j = 0; j < P.cols(); ++j) unit_columns &= std::abs(P.col(j).norm() - 1.0) <= 1e-10;
    report(unit_columns, "precoder columns have unit norm");

    const auto a = run_trial(experiment, c.modes.front(), c.rho0_db.back(), 0);
    const auto b = run_trial(experiment, c.modes.front(), c.rho0_db.back(), 0);
    report(a == b, "trial replay is deterministic");

    Sampler draw(RandomStream(c.master_seed).derive(99));
    Bits message(c.d - 6);
    for (auto& bit : message) bit = draw.bit();
    const auto coded = conv_encode(message);
    std::vector<double> llr(coded.size());
    for (std::size_t i = 0; i < coded.size(); ++i) llr[i] = coded[i] ? -1.0 : 1.0;
    report(viterbi_decode(llr) == message, "noiseless Viterbi round trip");

    return failed == 0 ? 0 : 2;
}

}  // namespace

int cli(int argc, const char* const* argv) {
    CLI::App app{"Monte-Carlo and analytical toolkit for joint power/code-domain grant-free uplink access"};
    app.require_subcommand(1);

    CommonFlags flags;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "JSON config file");
        sub->add_option("--seed", flags.seed, "Override master_seed");
        sub->add_option("--out", flags.out_dir, "Output directory");
        sub->add_option("--mode", flags.mode, "jspma-distributed | jspma-centralized | spma-uniform");
        sub->add_option("--trials", flags.trials, "Override trials");
        sub->add_flag("--overwrite", flags.overwrite, "Replace existing output files");
        sub->add_option("--workers", flags.workers, "Worker threads (0 = all cores)");
        sub->add_option("--fer-curve", flags.fer_curve, "FER calibration table (snr_db,fer)");
    };

    auto* simulate = app.add_subcommand("simulate", "Link-level Monte-Carlo simulation");
    add_common(simulate);

    auto* analyze = app.add_subcommand("analyze", "Theoretical FER by iterated decoding attempts");
    add_common(analyze);
    bool ordered_means = false;
    analyze->add_flag("--ordered-means", ordered_means, "Use order-statistic means instead of random draws");

    auto* tune = app.add_subcommand("tune-delta", "Monte-Carlo search for the ladder step delta");
    add_common(tune);
    std::vector<double> grid;
    std::optional<double> tune_rho0;
    tune->add_option("--grid", grid, "Delta values")->delimiter(',');
    tune->add_option("--rho0-db", tune_rho0, "Mean transmit power used for tuning");

    auto* calibrate = app.add_subcommand("calibrate-fer", "Single-user FER versus SNR table");
    add_common(calibrate);
    double snr_lo = -4.0;
    double snr_hi = 8.0;
    double snr_step = 0.5;
    int cal_trials = 20000;
    calibrate->add_option("--snr-min", snr_lo, "First grid point (dB)");
    calibrate->add_option("--snr-max", snr_hi, "Last grid point (dB)");
    calibrate->add_option("--snr-step", snr_step, "Grid spacing (dB)")->check(CLI::PositiveNumber);
    calibrate->add_option("--frames", cal_trials, "Frames per grid point")->check(CLI::PositiveNumber);

    auto* orderstats = app.add_subcommand("orderstats", "Export ordered gain means and split points");
    add_common(orderstats);
    int os_na = 16;
    int os_m = 4;
    int os_l = 0;
    orderstats->add_option("--Na", os_na, "Active users")->check(CLI::PositiveNumber);
    orderstats->add_option("--M", os_m, "Antennas")->check(CLI::PositiveNumber);
    orderstats->add_option("--L", os_l, "Also export split points for L groups");

    auto* check = app.add_subcommand("check", "Run the invariant checks");
    add_common(check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*simulate) return cmd_simulate(flags);
        if (*analyze) return cmd_analyze(flags, ordered_means);
        if (*tune) return cmd_tune(flags, grid, tune_rho0);
        if (*calibrate) return cmd_calibrate(flags, snr_lo, snr_hi, snr_step, cal_trials);
        if (*orderstats) return cmd_orderstats(flags, os_na, os_m, os_l);
        if (*check) return cmd_check(flags);
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace jspma
