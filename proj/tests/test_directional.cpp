#include <doctest.h>

#include "jspma/harness.hpp"

using namespace jspma;

namespace {

SystemConfig desk(int Na) {
    SystemConfig c;
    c.name = "desk";
    c.M = 4;
    c.N = 128;
    c.Na = Na;
    c.T = 160;
    c.d = 32;
    c.K = 4;
    c.delta = 0.14;
    c.master_seed = 11;
    return c;
}

TrialCounters sum_trials(const Experiment& e, PowerMode mode, double rho0_db, int trials) {
    TrialCounters total;
    for (int t = 0; t < trials; ++t) total += run_trial(e, mode, rho0_db, static_cast<std::uint64_t>(t));
    return total;
}

struct Paired {
    int trials = 0;
    int at_least = 0;  // trials where the ladder verifies at least as many users
    long jspma = 0;
    long spma = 0;
};

Paired paired_run(double rho0_db, int trials) {
    const Experiment e(desk(16));
    Paired p;
    p.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const auto j = run_trial(e, PowerMode::Distributed, rho0_db, t);
        const auto s = run_trial(e, PowerMode::Uniform, rho0_db, t);
        p.at_least += j.exact_frames >= s.exact_frames;
        p.jspma += j.exact_frames;
        p.spma += s.exact_frames;
    }
    MESSAGE("rho0 " << rho0_db << " dB: JSPMA >= SPMA in " << p.at_least << "/" << trials << " paired trials; verified "
                    << p.jspma << " vs " << p.spma);
    return p;
}

}  // namespace

// Overloaded: Na d = 512 > MT / 2 = 320.
TEST_CASE("ladder verifies at least as many users in most paired trials") {
    const auto p = paired_run(6.0, 200);
    CHECK(p.at_least >= 0.8 * p.trials);
}

TEST_CASE("ladder verifies strictly more users on average") {
    const auto p = paired_run(6.0, 200);
    CHECK(p.jspma > p.spma);
}

TEST_CASE("more power helps") {
    const Experiment e(desk(16));
    const auto lo = compute_metrics(sum_trials(e, PowerMode::Distributed, 0.0, 100), 0.0);
    const auto hi = compute_metrics(sum_trials(e, PowerMode::Distributed, 10.0, 100), 10.0);
    CHECK(hi.udsr > lo.udsr);
    CHECK(hi.fer < lo.fer);
    CHECK(hi.ber < lo.ber);
}

TEST_CASE("lighter load helps") {
    const auto heavy = compute_metrics(sum_trials(Experiment(desk(16)), PowerMode::Distributed, 4.0, 100), 4.0);
    const auto light = compute_metrics(sum_trials(Experiment(desk(4)), PowerMode::Distributed, 4.0, 100), 4.0);
    CHECK(light.fer < heavy.fer);
}

TEST_CASE("more antennas help") {
    auto c = desk(16);
    const auto four = compute_metrics(sum_trials(Experiment(c), PowerMode::Distributed, 4.0, 100), 4.0);
    c.M = 8;
    const auto eight = compute_metrics(sum_trials(Experiment(c), PowerMode::Distributed, 4.0, 100), 4.0);
    CHECK(eight.fer < four.fer);
}
