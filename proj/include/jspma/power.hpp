#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "jspma/channel.hpp"

namespace jspma {

enum class PowerMode {
    Distributed,  // each user picks its band from its own gain
    Centralized,  // BS ranks all active gains and hands out the ladder
    Uniform,      // every user transmits at rho0 (baseline without power domain)
};

[[nodiscard]] std::string_view to_string(PowerMode mode);
/// Accepts "jspma-distributed", "jspma-centralized", "spma-uniform" and the short forms.
[[nodiscard]] PowerMode parse_power_mode(std::string_view text);

/// Geometric power ladder beta_l = beta_1 * 10^(-delta (l-1)), groups numbered 1..L.
struct PowerProfile {
    int K = 1;
    int L = 1;
    int Na = 1;
    double delta = 0.0;
    double rho0 = 1.0;
    PowerMode mode = PowerMode::Distributed;
    std::vector<double> beta;     // beta[l-1]
    std::vector<int> group_sizes; // K except possibly the last group

    [[nodiscard]] double beta_of(int group) const { return beta.at(group - 1); }
    /// True when delta == 0 and beta_1 was set to rho0 rather than the literal constant 1.
    [[nodiscard]] bool flat_branch() const { return delta == 0.0; }
};

/// Builds the ladder for Na users in groups of K under sum |g_l| beta_l = Na rho0.
/// Uniform mode forces delta = 0.
[[nodiscard]] PowerProfile ladder(int K, int Na, double delta, double rho0,
                                  PowerMode mode = PowerMode::Distributed);

struct GroupChoice {
    int group = 0;
    double power = 0.0;
};

/// Band lookup from the user's own gain only.
[[nodiscard]] GroupChoice assign_distributed(double gain, const PowerProfile& profile, const SplitPoints& splits);

/// Per-user transmit powers for one realization. Inactive users carry power 0
/// and group 0.
struct PowerAssignment {
    std::vector<double> power;  // size N
    std::vector<int> group;     // size N, 1..L for active users
    std::vector<int> intra;     // size N, k within the group (centralized only, else 0)
};

[[nodiscard]] PowerAssignment assign_centralized(const ChannelRealization& realization, const PowerProfile& profile);
[[nodiscard]] PowerAssignment assign_distributed(const ChannelRealization& realization, const PowerProfile& profile,
                                                 const SplitPoints& splits);
[[nodiscard]] PowerAssignment assign_uniform(const ChannelRealization& realization, double rho0);

/// Dispatch on profile.mode.
[[nodiscard]] PowerAssignment assign_powers(const ChannelRealization& realization, const PowerProfile& profile,
                                            const SplitPoints& splits);

struct OrderReport {
    long pairs_checked = 0;
    long violations = 0;
    bool flat_ladder = false;  // every group shares the same power
};

/// Counts cross-group pairs (u in group i < j owning v) with rho_u g_u < rho_v g_v.
[[nodiscard]] OrderReport check_order_preservation(const PowerAssignment& assignment,
                                                   const ChannelRealization& realization);

/// `l,beta_l,beta_l_dB`
void write_csv(std::ostream& out, const PowerProfile& profile);

}  // namespace jspma
