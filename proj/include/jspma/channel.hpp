#pragma once

#include <iosfwd>
#include <vector>

#include "jspma/mathcore.hpp"

namespace jspma {

/// One draw of the uplink: channels of all N online users plus the active set.
struct ChannelRealization {
    int M = 0;
    int N = 0;
    ComplexMatrix H;                   // M x N, column n is h_n
    std::vector<double> gains;         // ||h_n||^2 for every online user
    std::vector<int> active_set;       // ascending user indices, size N_a
    std::vector<int> descending_order; // active users sorted by gain, strongest first

    [[nodiscard]] int active_count() const { return static_cast<int>(active_set.size()); }
};

/// Draws H with i.i.d. CN(0,1) entries and a uniformly random active set.
[[nodiscard]] ChannelRealization generate_channel(int M, int N, int Na, const RandomStream& stream);

/// Builds a realization from an explicit H and active set (gains and ordering derived).
[[nodiscard]] ChannelRealization make_realization(ComplexMatrix H, std::vector<int> active_set);

/// Active users sorted by descending gain; ties go to the lower index.
[[nodiscard]] std::vector<int> descending_by_gain(const std::vector<double>& gains, std::vector<int> users);

// ---------------------------------------------------------------------------
// Order statistics of the channel gains

/// Density of the rank-th largest of Na i.i.d. Gamma(M,1) gains (rank 1 = strongest).
[[nodiscard]] double ordered_gain_pdf(double x, int rank, int Na, int M);

struct OrderedGainStats {
    int Na = 0;
    int M = 0;
    std::vector<double> means;  // means[r-1] = E{gain of rank r}
};

/// Per-rank means by quadrature. Results are cached per (Na, M); safe to call
/// from several threads.
[[nodiscard]] const OrderedGainStats& ordered_gain_means(int Na, int M);

/// Equal-probability bands of the gain distribution.
///
/// x has L+1 entries: x[0] = +inf > x[1] > ... > x[L] = 0. Band l (1-based)
/// is [x[l], x[l-1]).
struct SplitPoints {
    int L = 0;
    int M = 0;
    std::vector<double> x;

    /// Band containing gain, 1..L.
    [[nodiscard]] int band_of(double gain) const;
};

[[nodiscard]] SplitPoints split_points(int L, int M);

// ---------------------------------------------------------------------------
// Random-matrix eigenvalue model

/// Marchenko-Pastur density with ratio eta in (0, 1).
[[nodiscard]] double mp_density(double x, double eta);

/// E{1/lambda} of the stuck-user Gram matrix: MT / (MT - stuck_dims).
/// Throws std::domain_error when stuck_dims >= MT.
[[nodiscard]] double mean_inverse_eigenvalue(double MT, double stuck_dims);

// CSV export: `rank,mean` and `l,x_l`.
void write_csv(std::ostream& out, const OrderedGainStats& stats);
void write_csv(std::ostream& out, const SplitPoints& splits);

}  // namespace jspma
