#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jspma/phy.hpp"

namespace jspma {

/// Thin QR factorization that grows by appending columns.
///
/// Columns are orthogonalized by classical Gram-Schmidt with one round of
/// re-orthogonalization, which keeps Q orthonormal to working precision
/// without re-factoring the existing support.
/// The existing support is never re-factored.
class IncrementalQr {
  public:
    explicit IncrementalQr(Eigen::Index rows) : rows_(rows) {}

    [[nodiscard]] Eigen::Index rows() const { return rows_; }
    [[nodiscard]] Eigen::Index cols() const { return cols_; }

    /// Appends the columns of A. Throws RankDeficient if a new column lies in
    /// the current span (relative tolerance 1e-10); the factorization is left
    /// unchanged in that case.
    void append(const ComplexMatrix& A);
    void clear() { cols_ = 0; }

    /// Coefficients x minimizing ||A x - y|| over all appended columns.
    [[nodiscard]] ComplexVector solve(const ComplexVector& y) const;
    /// y minus its projection onto the appended columns.
    [[nodiscard]] ComplexVector residual(const ComplexVector& y) const;

    [[nodiscard]] auto q() const { return Q_.leftCols(cols_); }
    [[nodiscard]] auto r() const { return R_.topLeftCorner(cols_, cols_); }

  private:
    void reserve(Eigen::Index cols);

    Eigen::Index rows_;
    Eigen::Index cols_ = 0;
    ComplexMatrix Q_;
    ComplexMatrix R_;
};

struct ReceiverConfig {
    PacketSpec packet;
    int max_iters = 1;
    double noise_var = 1.0;
    /// Stop once ||r||^2 <= M T noise_var (1 + eps).
    double residual_floor_eps = 0.05;
    /// Drop a stuck user from the joint estimate after this many failed
    /// decode attempts; 0 keeps stuck users forever.
    int eviction_retries = 0;
};

enum class Verdict { Verified, DetectedFailed, Missed };
[[nodiscard]] std::string_view to_string(Verdict v);

struct IterationRecord {
    int iter = 0;
    int selected_user = -1;
    double residual_before = 0.0;  // residual used for the selection
    double residual_norm = 0.0;    // after the joint refit, before cancellation
    int verified_count = 0;        // cumulative
};

struct DetectionReport {
    std::vector<int> selected;      // selection order
    std::vector<int> verified;      // verification order
    std::map<int, Bits> payloads;   // last decode of every selected user
    std::vector<int> active_users;  // copy of the active set, ascending
    std::vector<Verdict> verdicts;  // parallel to active_users
    std::vector<int> false_alarms;  // selected users outside the active set
    std::vector<int> evicted;
    std::vector<IterationRecord> trace;
    bool infeasible = false;  // stopped because the stuck support would fill M T
    std::string diagnostic;

    [[nodiscard]] int iterations() const { return static_cast<int>(trace.size()); }
    [[nodiscard]] bool is_verified(int user) const;
};

/// Normalized block correlation ||B~_n^H r|| for every user, with
/// B~_n = P_n kron h_n / ||h_n||, evaluated from the M x T residual R without
/// forming B~_n. Users flagged in `skip` (and users with a zero channel) score 0.
[[nodiscard]] std::vector<double> block_correlations(const ComplexMatrix& R, const PrecoderSet& precoders,
                                                     const ComplexMatrix& H, std::span<const std::uint8_t> skip = {});

/// The M T x d block P_n kron (h_n / ||h_n||).
[[nodiscard]] ComplexMatrix normalized_block(const ComplexMatrix& precoder, const ComplexVector& h);

struct Reconstruction {
    int user = -1;
    Bits payload;
    double power = 0.0;
};

/// y minus the re-encoded contributions of the given users (M x T form).
[[nodiscard]] ComplexMatrix cancellation_residual(const ComplexMatrix& Y, std::span<const Reconstruction> users,
                                                  const ComplexMatrix& H, const PrecoderSet& precoders,
                                                  const PacketSpec& packet);

/// ICBOMP: greedy block selection, joint least squares over the stuck
/// support, Viterbi + CRC verification and cancellation of verified users.
///
/// `powers` holds the receiver's knowledge of every online user's transmit
/// power (size N); it is used only to rebuild verified users' signals.
[[nodiscard]] DetectionReport icbomp_detect(const ComplexMatrix& Y, const PrecoderSet& precoders,
                                            const ChannelRealization& realization, std::span<const double> powers,
                                            const ReceiverConfig& config);

/// `iter,selected_user,residual_norm,verified_count`
void write_trace_csv(std::ostream& out, const DetectionReport& report);

}  // namespace jspma
