#include "jspma/power.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace jspma {

std::string_view to_string(PowerMode mode) {
    switch (mode) {
        case PowerMode::Distributed: return "jspma-distributed";
        case PowerMode::Centralized: return "jspma-centralized";
        case PowerMode::Uniform: return "spma-uniform";
    }
    return "unknown";
}

PowerMode parse_power_mode(std::string_view text) {
    if (text == "jspma-distributed" || text == "distributed") return PowerMode::Distributed;
    if (text == "jspma-centralized" || text == "centralized") return PowerMode::Centralized;
    if (text == "spma-uniform" || text == "uniform" || text == "spma") return PowerMode::Uniform;
    throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

PowerProfile ladder(int K, int Na, double delta, double rho0, PowerMode mode) {
    if (K < 1 || Na < 1) throw std::invalid_argument("ladder: K and Na must be positive");
    if (!(delta >= 0.0)) throw std::invalid_argument("ladder: delta must be >= 0");
    if (!(rho0 > 0.0)) throw std::invalid_argument("ladder: rho0 must be positive");

    PowerProfile p;
    p.K = K;
    p.Na = Na;
    p.L = (Na + K - 1) / K;
    p.delta = mode == PowerMode::Uniform ? 0.0 : delta;
    p.rho0 = rho0;
    p.mode = mode;
    p.group_sizes.assign(p.L, K);
    p.group_sizes.back() = Na - (p.L - 1) * K;

    // Conservation with actual group sizes; for K | Na this is
    // beta_1 = L rho0 (1 - q) / (1 - q^L).
    const double q = std::pow(10.0, -p.delta);
    double weight = 0.0;
    double qpow = 1.0;
    for (int l = 0; l < p.L; ++l) {
        weight += p.group_sizes[l] * qpow;
        qpow *= q;
    }
    const double beta1 = p.delta == 0.0 ? rho0 : Na * rho0 / weight;
    p.beta.resize(p.L);
    for (int l = 0; l < p.L; ++l) p.beta[l] = beta1 * std::pow(10.0, -p.delta * l);
    return p;
}

GroupChoice assign_distributed(double gain, const PowerProfile& profile, const SplitPoints& splits) {
    if (splits.L != profile.L) throw std::invalid_argument("assign_distributed: split points built for another L");
    const int l = splits.band_of(gain);
    return {l, profile.beta_of(l)};
}

PowerAssignment assign_centralized(const ChannelRealization& realization, const PowerProfile& profile) {
    PowerAssignment a;
    a.power.assign(realization.N, 0.0);
    a.group.assign(realization.N, 0);
    a.intra.assign(realization.N, 0);
    const auto& order = realization.descending_order;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const int l = std::min(static_cast<int>(rank) / profile.K + 1, profile.L);
        const int u = order[rank];
        a.group[u] = l;
        a.intra[u] = static_cast<int>(rank) - (l - 1) * profile.K + 1;
        a.power[u] = profile.beta_of(l);
    }
    return a;
}

PowerAssignment assign_distributed(const ChannelRealization& realization, const PowerProfile& profile,
                                   const SplitPoints& splits) {
    PowerAssignment a;
    a.power.assign(realization.N, 0.0);
    a.group.assign(realization.N, 0);
    a.intra.assign(realization.N, 0);
    for (int u : realization.active_set) {
        const auto choice = assign_distributed(realization.gains[u], profile, splits);
        a.group[u] = choice.group;
        a.power[u] = choice.power;
    }
    return a;
}

PowerAssignment assign_uniform(const ChannelRealization& realization, double rho0) {
    PowerAssignment a;
    a.power.assign(realization.N, 0.0);
    a.group.assign(realization.N, 0);
    a.intra.assign(realization.N, 0);
    for (int u : realization.active_set) {
        a.group[u] = 1;
        a.power[u] = rho0;
    }
    return a;
}

PowerAssignment assign_powers(const ChannelRealization& realization, const PowerProfile& profile,
                              const SplitPoints& splits) {
    switch (profile.mode) {
        case PowerMode::Distributed: return assign_distributed(realization, profile, splits);
        case PowerMode::Centralized: return assign_centralized(realization, profile);
        case PowerMode::Uniform: return assign_uniform(realization, profile.rho0);
    }
    throw std::logic_error("assign_powers: unhandled mode");
}

OrderReport check_order_preservation(const PowerAssignment& assignment, const ChannelRealization& realization) {
    OrderReport report;
    report.flat_ladder = true;
    const auto& active = realization.active_set;
    for (std::size_t i = 0; i < active.size(); ++i) {
        for (std::size_t j = 0; j < active.size(); ++j) {
            const int u = active[i];
            const int v = active[j];
            if (assignment.power[u] != assignment.power[v]) report.flat_ladder = false;
            if (assignment.group[u] >= assignment.group[v]) continue;
            ++report.pairs_checked;
            if (assignment.power[u] * realization.gains[u] < assignment.power[v] * realization.gains[v]) {
                ++report.violations;
            }
        }
    }
    return report;
}

void write_csv(std::ostream& out, const PowerProfile& profile) {
    out << "l,beta_l,beta_l_dB\n" << std::setprecision(12);
    for (int l = 1; l <= profile.L; ++l) {
        out << l << ',' << profile.beta_of(l) << ',' << 10.0 * std::log10(profile.beta_of(l)) << '\n';
    }
}

}  // namespace jspma
