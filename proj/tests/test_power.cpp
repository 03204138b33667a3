#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "jspma/power.hpp"

using namespace jspma;

namespace {

double total_power(const PowerProfile& p) {
    double s = 0.0;
    for (int l = 1; l <= p.L; ++l) s += p.group_sizes[l - 1] * p.beta_of(l);
    return s;
}

// Realization whose users have exactly the given gains.
ChannelRealization with_gains(const std::vector<double>& gains, int M) {
    ComplexMatrix H = ComplexMatrix::Zero(M, static_cast<Eigen::Index>(gains.size()));
    for (std::size_t n = 0; n < gains.size(); ++n) H(0, static_cast<Eigen::Index>(n)) = std::sqrt(gains[n]);
    std::vector<int> active(gains.size());
    std::iota(active.begin(), active.end(), 0);
    return make_realization(H, active);
}

}  // namespace

TEST_CASE("ladder group count") {
    CHECK(ladder(10, 80, 0.12, 1.0).L == 8);
    CHECK(ladder(4, 16, 0.14, 1.0).L == 4);
    const auto odd = ladder(4, 18, 0.14, 1.0);
    CHECK(odd.L == 5);
    CHECK(odd.group_sizes == std::vector<int>{4, 4, 4, 4, 2});
}

TEST_CASE("ladder total power and ratio") {
    for (double delta : {0.0, 0.12, 0.14, 0.16, 0.3}) {
        for (double rho0 : {0.5, 1.0, 15.8}) {
            const auto p = ladder(10, 80, delta, rho0);
            CHECK(std::abs(total_power(p) - 80 * rho0) <= 1e-9 * 80 * rho0);
            for (int l = 1; l < p.L; ++l) {
                CHECK(std::abs(p.beta_of(l + 1) / p.beta_of(l) - std::pow(10.0, -delta)) <= 1e-14);
                CHECK(p.beta_of(l + 1) <= p.beta_of(l));
            }
        }
    }
    const auto odd = ladder(4, 18, 0.2, 2.0);
    CHECK(std::abs(total_power(odd) - 36.0) <= 1e-9 * 36.0);
}

TEST_CASE("ladder closed form for beta_1") {
    const auto p = ladder(10, 80, 0.14, 1.0);
    const double q = std::pow(10.0, -0.14);
    CHECK(p.beta_of(1) == doctest::Approx(8 * (1 - q) / (1 - std::pow(q, 8))).epsilon(1e-13));
    CHECK(std::abs(p.beta_of(1) - 2.3856) < 5e-4);
}

TEST_CASE("flat ladder uses rho0") {
    const auto p = ladder(4, 16, 0.0, 3.5);
    CHECK(p.flat_branch());
    for (double b : p.beta) CHECK(b == doctest::Approx(3.5).epsilon(1e-15));
    const auto u = ladder(4, 16, 0.2, 3.5, PowerMode::Uniform);
    CHECK(u.delta == 0.0);
    for (double b : u.beta) CHECK(b == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("mode names") {
    CHECK(to_string(PowerMode::Distributed) == "jspma-distributed");
    CHECK(to_string(PowerMode::Centralized) == "jspma-centralized");
    CHECK(to_string(PowerMode::Uniform) == "spma-uniform");
    CHECK(parse_power_mode("spma-uniform") == PowerMode::Uniform);
    CHECK(parse_power_mode("centralized") == PowerMode::Centralized);
    CHECK_THROWS_AS((void)parse_power_mode("noma"), std::invalid_argument);
}

TEST_CASE("assign_distributed by band") {
    const auto p = ladder(4, 16, 0.14, 1.0);
    const auto s = split_points(p.L, 4);
    const auto top = assign_distributed(s.x[1] + 0.5, p, s);
    CHECK(top.group == 1);
    CHECK(top.power == p.beta_of(1));
    const auto zero = assign_distributed(0.0, p, s);
    CHECK(zero.group == p.L);
    CHECK(zero.power == p.beta_of(p.L));

    const auto p2 = ladder(1, 2, 0.1, 1.0);
    const auto s2 = split_points(2, 1);
    CHECK(assign_distributed(0.7, p2, s2).group == 1);
    CHECK(assign_distributed(0.69, p2, s2).group == 2);
}

TEST_CASE("assign_centralized") {
    const auto p = ladder(4, 4, 0.2, 1.0, PowerMode::Centralized);
    const auto all = assign_centralized(with_gains({1.0, 3.0, 0.5, 2.0}, 2), p);
    for (int n = 0; n < 4; ++n) {
        CHECK(all.group[n] == 1);
        CHECK(all.power[n] == p.beta_of(1));
    }

    const auto p2 = ladder(2, 4, 0.2, 1.0, PowerMode::Centralized);
    const auto a = assign_centralized(with_gains({1.0, 3.0, 0.5, 2.0}, 2), p2);
    CHECK(a.power[1] == p2.beta_of(1));
    CHECK(a.power[3] == p2.beta_of(1));
    CHECK(a.power[0] == p2.beta_of(2));
    CHECK(a.power[2] == p2.beta_of(2));
    CHECK(a.intra[1] == 1);
    CHECK(a.intra[3] == 2);
    const double sum = std::accumulate(a.power.begin(), a.power.end(), 0.0);
    CHECK(std::abs(sum - 4.0) <= 1e-12);
}

TEST_CASE("centralized powers are label-invariant") {
    std::mt19937_64 rng(4);
    const auto p = ladder(3, 12, 0.15, 2.0, PowerMode::Centralized);
    for (int rep = 0; rep < 50; ++rep) {
        const auto r = generate_channel(4, 12, 12, RandomStream(44).derive(rep));
        std::vector<double> gains = r.gains;
        auto base = assign_centralized(r, p).power;
        std::shuffle(gains.begin(), gains.end(), rng);
        auto perm = assign_centralized(with_gains(gains, 4), p).power;
        std::sort(base.begin(), base.end());
        std::sort(perm.begin(), perm.end());
        for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == doctest::Approx(perm[i]).epsilon(1e-15));
    }
}

TEST_CASE("uniform mode") {
    const auto r = generate_channel(4, 32, 8, RandomStream(1));
    const auto a = assign_uniform(r, 2.5);
    for (int n = 0; n < r.N; ++n) {
        const bool active = std::binary_search(r.active_set.begin(), r.active_set.end(), n);
        CHECK(a.power[n] == (active ? 2.5 : 0.0));
    }
}

TEST_CASE("order preservation") {
    const auto pc = ladder(4, 16, 0.14, 1.0, PowerMode::Centralized);
    const auto flat = ladder(4, 16, 0.0, 1.0, PowerMode::Centralized);
    for (int rep = 0; rep < 200; ++rep) {
        const auto r = generate_channel(4, 64, 16, RandomStream(51).derive(rep));
        const auto rep_c = check_order_preservation(assign_centralized(r, pc), r);
        CHECK(rep_c.violations == 0);
        CHECK(rep_c.pairs_checked > 0);
        CHECK_FALSE(rep_c.flat_ladder);
        const auto rep_f = check_order_preservation(assign_centralized(r, flat), r);
        CHECK(rep_f.flat_ladder);
        CHECK(rep_f.violations == 0);
    }
}

TEST_CASE("distributed audit across band boundaries") {
    const auto p = ladder(10, 80, 0.14, 1.0);
    const auto s = split_points(p.L, 8);
    long pairs = 0;
    long violations = 0;
    double power = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const auto r = generate_channel(8, 80, 80, RandomStream(61).derive(t));
        const auto a = assign_distributed(r, p, s);
        const auto rep = check_order_preservation(a, r);
        pairs += rep.pairs_checked;
        violations += rep.violations;
        power += std::accumulate(a.power.begin(), a.power.end(), 0.0);
    }
    MESSAGE("distributed order audit: " << violations << " violations in " << pairs << " cross-group pairs");
    CHECK(violations == 0);
    CHECK(std::abs(power / trials - 80.0) <= 0.01 * 80.0);
}

TEST_CASE("distributed and centralized agree inside rank bands") {
    const int K = 3;
    const int L = 4;
    const int M = 4;
    const auto s = split_points(L, M);
    const auto pd = ladder(K, K * L, 0.1, 1.0, PowerMode::Distributed);
    const auto pc = ladder(K, K * L, 0.1, 1.0, PowerMode::Centralized);
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> gains;
        for (int l = 1; l <= L; ++l) {
            const double hi = std::isinf(s.x[l - 1]) ? s.x[l] + 20.0 : s.x[l - 1];
            std::uniform_real_distribution<double> inside(s.x[l] + 1e-9, hi - 1e-9);
            for (int k = 0; k < K; ++k) gains.push_back(inside(rng));
        }
        std::shuffle(gains.begin(), gains.end(), rng);
        const auto r = with_gains(gains, M);
        const auto d = assign_distributed(r, pd, s);
        const auto c = assign_centralized(r, pc);
        for (int n = 0; n < K * L; ++n) {
            CHECK(d.group[n] == c.group[n]);
            CHECK(d.power[n] == doctest::Approx(c.power[n]).epsilon(1e-15));
        }
    }
}

TEST_CASE("profile csv") {
    std::ostringstream out;
    write_csv(out, ladder(4, 8, 0.0, 1.0));
    CHECK(out.str() == "l,beta_l,beta_l_dB\n1,1,0\n2,1,0\n");
}
