// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [--trials N] [--skip-sim]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "jspma/analysis.hpp"
#include "jspma/harness.hpp"

using namespace jspma;

namespace {

using Clock = std::chrono::steady_clock;

int g_failed = 0;

void report(int id, bool ok, const std::string& name, const std::string& detail, Clock::time_point start,
            double limit_s = 0.0) {
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = limit_s <= 0.0 || secs < limit_s;
    const bool pass = ok && in_time;
    if (!pass) ++g_failed;
    std::printf("%s %2d %-28s %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), secs,
                in_time ? "" : ", over time limit");
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// dB where a decreasing metric first reaches target, log-linear between points.
double crossing(const std::vector<MetricsPoint>& pts, double target) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].ber <= target) {
            if (i == 0) return pts[0].rho0_db;
            const double a = std::log10(pts[i - 1].ber);
            const double b = std::log10(std::max(pts[i].ber, 1e-300));
            return pts[i - 1].rho0_db + (std::log10(target) - a) / (b - a) * (pts[i].rho0_db - pts[i - 1].rho0_db);
        }
    }
    return std::nan("");
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void criterion_rmt() {
    const auto t0 = Clock::now();
    const int MT = 200;
    const int cols = 100;
    double acc = 0.0;
    long count = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Sampler draw(RandomStream(1001).derive(trial));
        ComplexMatrix G(MT, cols);
        for (auto& z : G.reshaped()) z = draw.complex_gaussian(1.0 / MT);
        for (double ev : hermitian_eigenvalues(G.adjoint() * G)) {
            acc += 1.0 / ev;
            ++count;
        }
    }
    const double mean = acc / count;
    const double closed = mean_inverse_eigenvalue(MT, cols);
    report(1, std::abs(mean / closed - 1.0) <= 0.05, "rmt-mean-inverse-eigenvalue",
           fmt("empirical %.4f vs closed form %.4f", mean, closed), t0, 30.0);
}

void criterion_order_stats() {
    const auto t0 = Clock::now();
    const int Na = 16;
    const int M = 4;
    const int trials = 100000;
    std::vector<double> acc(Na, 0.0);
    for (int t = 0; t < trials; ++t) {
        const auto r = generate_channel(M, Na, Na, RandomStream(1002).derive(t));
        for (int i = 0; i < Na; ++i) acc[i] += r.gains[r.descending_order[i]];
    }
    const auto& s = ordered_gain_means(Na, M);
    double worst = 0.0;
    for (int i = 0; i < Na; ++i) worst = std::max(worst, std::abs(acc[i] / trials / s.means[i] - 1.0));
    const double total = std::accumulate(s.means.begin(), s.means.end(), 0.0);
    const double sum_err = std::abs(total / (Na * M) - 1.0);
    report(2, worst <= 0.01 && sum_err <= 0.001, "ordered-gain-means",
           fmt("worst rank deviation %.3f%%, sum %.4f (rel err %.2e)", 100 * worst, total, sum_err), t0, 60.0);
}

void criterion_ladder() {
    const auto t0 = Clock::now();
    bool ok = ladder(10, 80, 0.12, 1.0).L == 8;
    double worst_sum = 0.0;
    double worst_ratio = 0.0;
    for (double delta : {0.0, 0.12, 0.14, 0.16}) {
        for (double rho0 : {1.0, 3.98}) {
            const auto p = ladder(10, 80, delta, rho0);
            double s = 0.0;
            for (int l = 1; l <= p.L; ++l) s += p.group_sizes[l - 1] * p.beta_of(l);
            worst_sum = std::max(worst_sum, std::abs(s / (80 * rho0) - 1.0));
            for (int l = 1; l < p.L; ++l) {
                worst_ratio = std::max(worst_ratio, std::abs(p.beta_of(l + 1) / p.beta_of(l) - std::pow(10.0, -delta)));
            }
        }
    }
    ok = ok && worst_sum <= 1e-9 && worst_ratio <= 1e-14;
    report(3, ok, "power-ladder-exactness",
           fmt("L=%d, total power rel err %.1e, ratio err %.1e", ladder(10, 80, 0.12, 1.0).L, worst_sum, worst_ratio),
           t0);
}

void criterion_codec() {
    const auto t0 = Clock::now();
    const PacketSpec packet{32, 16};
    long round_trip_fail = 0;
    long crc_missed = 0;
    long crc_checked = 0;
    for (int t = 0; t < 10000; ++t) {
        Sampler draw(RandomStream(1004).derive(t));
        Bits payload(packet.payload_bits());
        for (auto& b : payload) b = draw.bit();
        const Bits framed = crc_attach(payload, packet.payload_bits());
        const auto symbols = qpsk_map(conv_encode(framed));
        const Bits decoded = viterbi_decode(qpsk_soft_demap(symbols, 0.1));
        if (decoded != framed || !crc_check(decoded)) ++round_trip_fail;
        Bits flipped = framed;
        for (auto& b : flipped) {
            b ^= 1;
            ++crc_checked;
            if (crc_check(flipped)) ++crc_missed;
            b ^= 1;
        }
    }

    Sampler draw(RandomStream(1004).derive(99999));
    Bits message(50);
    for (auto& b : message) b = draw.bit();
    const Bits coded = conv_encode(message);
    std::vector<double> clean(coded.size());
    for (std::size_t i = 0; i < coded.size(); ++i) clean[i] = coded[i] ? -1.0 : 1.0;
    long patterns = 0;
    long uncorrected = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        for (std::size_t j = i + 1; j < clean.size(); ++j) {
            auto llr = clean;
            llr[i] = -llr[i];
            llr[j] = -llr[j];
            ++patterns;
            if (viterbi_decode(llr) != message) ++uncorrected;
        }
    }
    report(4, round_trip_fail == 0 && crc_missed == 0 && uncorrected == 0, "codec-properties",
           fmt("round trip failures %ld/10000, crc misses %ld/%ld, uncorrected 2-bit patterns %ld/%ld",
               round_trip_fail, crc_missed, crc_checked, uncorrected, patterns),
           t0, 300.0);
}

void criterion_kronecker() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Sampler draw(RandomStream(1005).derive(t));
        const int M = 1 + t % 4;
        const int d = 2 + t % 5;
        const int T = d + 1 + t % 7;
        const double rho = 0.1 + draw.uniform01() * 10.0;
        ComplexMatrix P(T, d);
        for (auto& z : P.reshaped()) z = draw.complex_gaussian();
        ComplexVector h(M);
        for (auto& z : h) z = draw.complex_gaussian();
        ComplexVector s(d);
        for (auto& z : s) z = draw.complex_gaussian();
        const ComplexMatrix X = h * (std::sqrt(rho) * P * s).transpose();
        const ComplexVector lhs = X.reshaped();
        const ComplexVector rhs = Eigen::kroneckerProduct(P, ComplexMatrix(h)).eval() * s * std::sqrt(rho);
        worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
    }
    report(5, worst <= 1e-9, "kronecker-identity", fmt("worst relative error %.2e over 100 instances", worst), t0);
}

void criterion_single_user() {
    const auto t0 = Clock::now();
    SystemConfig c;
    c.name = "single_user";
    c.M = 4;
    c.N = 128;
    c.Na = 1;
    c.K = 1;
    c.d = 32;
    c.T = 160;
    c.master_seed = 6;
    const Experiment e(c);
    TrialCounters total;
    for (int t = 0; t < 1000; ++t) total += run_trial(e, PowerMode::Distributed, 12.0, t);
    const auto m = compute_metrics(total, 12.0);
    report(6, m.udsr >= 0.99 && m.fer <= 1e-2, "single-user-sanity",
           fmt("UDSR %.4f, FER %.4f over %ld trials", m.udsr, m.fer, m.trials), t0);
}

SystemConfig headline_config(int trials) {
    SystemConfig c;
    c.name = "headline_na16";
    c.M = 4;
    c.N = 128;
    c.Na = 16;
    c.d = 32;
    c.T = 160;
    c.K = 4;
    c.delta = 0.14;
    c.rho0_db = {0, 2, 4, 6, 8, 10, 12};
    c.modes = {PowerMode::Distributed, PowerMode::Centralized, PowerMode::Uniform};
    c.trials = trials;
    c.master_seed = 2024;
    return c;
}

void print_table(const std::vector<MetricsPoint>& pts, PowerMode mode) {
    std::printf("     # %s\n", std::string(to_string(mode)).c_str());
    for (const auto& p : pts) {
        std::printf("     #   rho0=%4.1f  udsr=%.4f  fer=%.4f  ber=%.3e\n", p.rho0_db, p.udsr, p.fer, p.ber);
    }
}

void criteria_headline(int trials) {
    const auto base = std::filesystem::temp_directory_path() / "jspma_acceptance";
    std::filesystem::remove_all(base);
    const auto c = headline_config(trials);

    const auto t7 = Clock::now();
    RunOptions first;
    first.workers = 1;
    first.out_dir = base / "workers1";
    const auto r = run_experiment(c, first);
    const double run_seconds = std::chrono::duration<double>(Clock::now() - t7).count();
    const auto& J = r.points.at(PowerMode::Distributed);
    const auto& C = r.points.at(PowerMode::Centralized);
    const auto& S = r.points.at(PowerMode::Uniform);
    for (auto mode : c.modes) print_table(r.points.at(mode), mode);

    // (a)
    int ahead = 0;
    bool never_behind = true;
    for (std::size_t i = 0; i < J.size(); ++i) {
        never_behind &= J[i].udsr >= S[i].udsr;
        ahead += J[i].udsr - S[i].udsr >= 0.2;
    }
    // (b) sweep points 6 dB and 12 dB are indices 3 and 6
    const bool floor = S[6].ber >= 0.3 * S[3].ber;
    const bool below = J[6].ber * 10.0 <= S[6].ber;
    // (c)
    bool spma_saturated = true;
    for (const auto& p : S) spma_saturated &= p.fer >= 0.9;
    const bool jspma_decays = J.back().fer < 0.1;
    const bool ok7 = r.complete && never_behind && ahead >= 3 && floor && below && spma_saturated && jspma_decays;
    report(7, ok7, "directional-headline",
           fmt("(a) JSPMA>=SPMA everywhere: %s, +0.2 at %d points; (b) SPMA floor %s (%.2e vs %.2e), JSPMA 10x "
               "lower %s (%.2e); (c) SPMA FER>=0.9 %s, JSPMA FER@12dB %.4f",
               never_behind ? "yes" : "no", ahead, floor ? "yes" : "no", S[6].ber, S[3].ber, below ? "yes" : "no",
               J[6].ber, spma_saturated ? "yes" : "no", J.back().fer),
           t7, 1800.0);

    const auto t8 = Clock::now();
    const double xd = crossing(J, 1e-2);
    const double xc = crossing(C, 1e-2);
    const bool ok8 = std::isfinite(xd) && std::isfinite(xc) && std::abs(xd - xc) <= 1.0;
    report(8, ok8, "centralized-vs-distributed",
           fmt("BER=1e-2 crossing distributed %.2f dB, centralized %.2f dB, gap %.2f dB", xd, xc, std::abs(xd - xc)),
           t8);

    const auto t10 = Clock::now();
    RunOptions second;
    second.workers = 3;
    second.out_dir = base / "workers3";
    const auto r2 = run_experiment(c, second);
    bool identical = r2.complete && r.files.size() == r2.files.size() && !r.files.empty();
    for (std::size_t i = 0; identical && i < r.files.size(); ++i) {
        identical = slurp(r.files[i]) == slurp(r2.files[i]) && !slurp(r.files[i]).empty();
    }
    report(10, identical, "determinism-across-workers",
           fmt("%zu CSV files byte-identical with 1 and 3 workers (first run %.0f s)", r.files.size(), run_seconds),
           t10);
    std::filesystem::remove_all(base);
}

void criterion_tuner() {
    const auto t0 = Clock::now();
    const auto q2 = FerCurve::load(std::filesystem::path(JSPMA_DATA_DIR) / "fer_curve_d32.csv");
    auto c = headline_config(2000);
    c.modes = {PowerMode::Distributed};
    const std::vector<double> grid{0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
    const auto search = tune_delta(c, grid, c.trials, c.tuning_rho0_db(), q2);
    std::ostringstream table;
    for (const auto& row : search.table) table << row.delta << ":" << row.mean_fer << " ";
    std::printf("     # delta table at %.1f dB: %s\n", c.tuning_rho0_db(), table.str().c_str());
    const double best = search.best_delta();
    const bool tuned = best > 0.0 && search.table[search.best].mean_fer < search.table[0].mean_fer;

    // one active user: the recursion reduces to the link curve
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const auto r = generate_channel(4, 128, 1, RandomStream(1009).derive(t));
        const double rho0 = std::pow(10.0, (t % 13) / 10.0);
        const auto p = ladder(1, 1, 0.14, rho0);
        const auto run = theoretical_fer(r, p, split_points(p.L, 4), q2, LinkDims{4, 160, 32});
        worst = std::max(worst, std::abs(run.fer[0] - q2(p.beta_of(1) * r.gains[r.active_set[0]])));
    }
    report(9, tuned && worst == 0.0, "delta-tuner",
           fmt("best delta %.2f (FER %.4g vs %.4g at delta=0); Na=1 max deviation %.1e", best,
               search.table[search.best].mean_fer, search.table[0].mean_fer, worst),
           t0);
}

}  // namespace

int main(int argc, char** argv) {
    int trials = 500;
    bool skip_sim = false;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--trials") == 0 && i + 1 < argc) trials = std::atoi(argv[++i]);
        if (std::strcmp(argv[i], "--skip-sim") == 0) skip_sim = true;
    }
    try {
        criterion_rmt();
        criterion_order_stats();
        criterion_ladder();
        criterion_codec();
        criterion_kronecker();
        criterion_single_user();
        criterion_tuner();
        if (!skip_sim) criteria_headline(trials);
    } catch (const std::exception& e) {
        std::printf("FAIL    aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d criteria failed\n", g_failed);
    return g_failed == 0 ? 0 : 1;
}
