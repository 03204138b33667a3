#include "jspma/channel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>

namespace jspma {

namespace {

double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

std::vector<int> descending_by_gain(const std::vector<double>& gains, std::vector<int> users) {
    std::sort(users.begin(), users.end(), [&](int a, int b) {
        if (gains[a] != gains[b]) return gains[a] > gains[b];
        return a < b;
    });
    return users;
}

ChannelRealization make_realization(ComplexMatrix H, std::vector<int> active_set) {
    ChannelRealization r;
    r.M = static_cast<int>(H.rows());
    r.N = static_cast<int>(H.cols());
    r.gains.resize(r.N);
    for (int n = 0; n < r.N; ++n) r.gains[n] = H.col(n).squaredNorm();
    std::sort(active_set.begin(), active_set.end());
    if (std::adjacent_find(active_set.begin(), active_set.end()) != active_set.end()) {
        throw std::invalid_argument("make_realization: duplicate active user");
    }
    for (int u : active_set) {
        if (u < 0 || u >= r.N) throw std::invalid_argument("make_realization: active user out of range");
    }
    r.H = std::move(H);
    r.descending_order = descending_by_gain(r.gains, active_set);
    r.active_set = std::move(active_set);
    return r;
}

ChannelRealization generate_channel(int M, int N, int Na, const RandomStream& stream) {
    if (M < 1 || N < 1) throw std::invalid_argument("generate_channel: M and N must be positive");
    if (Na < 0 || Na > N) throw std::invalid_argument("generate_channel: require 0 <= Na <= N");

    Sampler fading(stream.derive(1));
    ComplexMatrix H(M, N);
    for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m) H(m, n) = fading.complex_gaussian(1.0);

    // Partial Fisher-Yates: first Na slots are a uniform sample without replacement.
    Sampler activity(stream.derive(2));
    std::vector<int> pool(N);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < Na; ++i) {
        const int j = activity.uniform_int(i, N - 1);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(Na);
    return make_realization(std::move(H), std::move(pool));
}

double ordered_gain_pdf(double x, int rank, int Na, int M) {
    if (rank < 1 || rank > Na) throw std::invalid_argument("ordered_gain_pdf: rank out of range");
    const double f = chi2_pdf(x, M);
    if (f == 0.0) return 0.0;
    const double F = chi2_cdf(x, M);
    const double upper = 1.0 - F;
    // n * C(Na, n) * F^(Na-n) * (1-F)^(n-1) * f
    double log_val = std::log(static_cast<double>(rank)) + log_binomial(Na, rank) + std::log(f);
    if (Na - rank > 0) {
        if (F <= 0.0) return 0.0;
        log_val += (Na - rank) * std::log(F);
    }
    if (rank - 1 > 0) {
        if (upper <= 0.0) return 0.0;
        log_val += (rank - 1) * std::log(upper);
    }
    return std::exp(log_val);
}

const OrderedGainStats& ordered_gain_means(int Na, int M) {
    if (Na < 1 || M < 1) throw std::invalid_argument("ordered_gain_means: Na and M must be positive");

    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::unique_ptr<OrderedGainStats>> cache;
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find({Na, M}); it != cache.end()) return *it->second;
    }

    auto stats = std::make_unique<OrderedGainStats>();
    stats->Na = Na;
    stats->M = M;
    stats->means.resize(Na);
    // The maximum of Na gains has a heavier right tail than one gain; widen the cutoff.
    const double upper = gamma_truncation(M) + 2.0 * std::log(static_cast<double>(Na)) + 10.0;
    for (int rank = 1; rank <= Na; ++rank) {
        const auto integrand = [&](double x) { return x * ordered_gain_pdf(x, rank, Na, M); };
        // Split at the mean so the bulk of each order statistic falls in one piece.
        const double mid = static_cast<double>(M);
        stats->means[rank - 1] = integrate(integrand, 0.0, mid) + integrate(integrand, mid, upper);
    }

    const double total = std::accumulate(stats->means.begin(), stats->means.end(), 0.0);
    if (std::abs(total - Na * M) > 1e-3 * Na * M) {
        throw NonConvergence("ordered_gain_means: sum of ranked means deviates from Na*M");
    }

    std::lock_guard lock(mutex);
    auto [it, inserted] = cache.try_emplace({Na, M}, std::move(stats));
    return *it->second;
}

int SplitPoints::band_of(double gain) const {
    for (int l = 1; l <= L; ++l) {
        if (gain >= x[l]) return l;
    }
    return L;
}

SplitPoints split_points(int L, int M) {
    if (L < 1) throw std::invalid_argument("split_points: L must be >= 1");
    SplitPoints s;
    s.L = L;
    s.M = M;
    s.x.resize(L + 1);
    s.x[0] = std::numeric_limits<double>::infinity();
    for (int l = 1; l < L; ++l) s.x[l] = chi2_inverse_cdf(1.0 - static_cast<double>(l) / L, M);
    s.x[L] = 0.0;
    return s;
}

double mp_density(double x, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("mp_density: eta must lie in (0, 1)");
    const double a = (1.0 - std::sqrt(eta)) * (1.0 - std::sqrt(eta));
    const double b = (1.0 + std::sqrt(eta)) * (1.0 + std::sqrt(eta));
    if (x <= a || x >= b) return 0.0;
    return std::sqrt((x - a) * (b - x)) / (2.0 * M_PI * eta * x);
}

double mean_inverse_eigenvalue(double MT, double stuck_dims) {
    if (stuck_dims < 0.0) throw std::invalid_argument("mean_inverse_eigenvalue: negative stuck dimension");
    if (stuck_dims >= MT) {
        throw std::domain_error("mean_inverse_eigenvalue: stuck dimension " + std::to_string(stuck_dims) +
                                " reaches measurement dimension " + std::to_string(MT));
    }
    return MT / (MT - stuck_dims);
}

void write_csv(std::ostream& out, const OrderedGainStats& stats) {
    out << "rank,mean\n" << std::setprecision(12);
    for (std::size_t r = 0; r < stats.means.size(); ++r) out << r + 1 << ',' << stats.means[r] << '\n';
}

void write_csv(std::ostream& out, const SplitPoints& splits) {
    out << "l,x_l\n" << std::setprecision(12);
    for (int l = 0; l <= splits.L; ++l) {
        out << l << ',';
        if (std::isinf(splits.x[l])) out << "inf"; else out << splits.x[l];
        out << '\n';
    }
}

}  // namespace jspma
