#include "jspma/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace jspma {

// ---------------------------------------------------------------------------
// IncrementalQr

namespace {
constexpr double kRankTolerance = 1e-10;
}

void IncrementalQr::reserve(Eigen::Index cols) {
    if (cols <= Q_.cols()) return;
    const Eigen::Index cap = std::max(cols, 2 * Q_.cols());
    ComplexMatrix Q(rows_, cap);
    ComplexMatrix R = ComplexMatrix::Zero(cap, cap);
    Q.leftCols(cols_) = Q_.leftCols(cols_);
    R.topLeftCorner(cols_, cols_) = R_.topLeftCorner(cols_, cols_);
    Q_ = std::move(Q);
    R_ = std::move(R);
}

void IncrementalQr::append(const ComplexMatrix& A) {
    if (A.rows() != rows_) throw std::invalid_argument("IncrementalQr::append: row count mismatch");
    if (cols_ + A.cols() > rows_) throw RankDeficient("IncrementalQr::append: more columns than rows");
    reserve(cols_ + A.cols());

    const Eigen::Index start = cols_;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        const Eigen::Index k = cols_;
        const auto Qk = Q_.leftCols(k);
        ComplexVector v = A.col(j);
        const double anorm = v.norm();
        ComplexVector h = Qk.adjoint() * v;
        v.noalias() -= Qk * h;
        const ComplexVector h2 = Qk.adjoint() * v;
        v.noalias() -= Qk * h2;
        h += h2;
        const double vnorm = v.norm();
        if (!(vnorm > kRankTolerance * anorm)) {
            cols_ = start;
            throw RankDeficient("IncrementalQr::append: column is linearly dependent on the current span");
        }
        Q_.col(k) = v / vnorm;
        R_.col(k).head(k) = h;
        R_(k, k) = vnorm;
        R_.col(k).tail(R_.rows() - k - 1).setZero();
        ++cols_;
    }
}

ComplexVector IncrementalQr::solve(const ComplexVector& y) const {
    if (cols_ == 0) return ComplexVector(0);
    const ComplexVector qty = q().adjoint() * y;
    return r().triangularView<Eigen::Upper>().solve(qty);
}

ComplexVector IncrementalQr::residual(const ComplexVector& y) const {
    if (cols_ == 0) return y;
    const ComplexVector qty = q().adjoint() * y;
    ComplexVector r = y;
    r.noalias() -= q() * qty;
    return r;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Verified: return "verified";
        case Verdict::DetectedFailed: return "detected-failed";
        case Verdict::Missed: return "missed";
    }
    return "unknown";
}

bool DetectionReport::is_verified(int user) const {
    return std::find(verified.begin(), verified.end(), user) != verified.end();
}

std::vector<double> block_correlations(const ComplexMatrix& R, const PrecoderSet& precoders, const ComplexMatrix& H,
                                       std::span<const std::uint8_t> skip) {
    const auto N = H.cols();
    if (R.rows() != H.rows() || R.cols() != precoders.T) {
        throw std::invalid_argument("block_correlations: residual must be M x T");
    }
    if (precoders.users() < N) throw std::invalid_argument("block_correlations: missing precoders");
    if (!skip.empty() && static_cast<Eigen::Index>(skip.size()) != N) {
        throw std::invalid_argument("block_correlations: skip mask size differs from N");
    }

    // Column n of W is (h_n^H R)^T; B~_n^H vec(R) = P_n^H W.col(n) / ||h_n||.
    const ComplexMatrix W = R.transpose() * H.conjugate();
    std::vector<double> scores(N, 0.0);
    for (Eigen::Index n = 0; n < N; ++n) {
        if (!skip.empty() && skip[n]) continue;
        const double hn = H.col(n).norm();
        if (hn == 0.0) continue;
        scores[n] = (precoders.P[n].adjoint() * W.col(n)).norm() / hn;
    }
    return scores;
}

ComplexMatrix normalized_block(const ComplexMatrix& precoder, const ComplexVector& h) {
    const Eigen::Index M = h.size();
    const Eigen::Index T = precoder.rows();
    const ComplexVector hn = h / h.norm();
    ComplexMatrix B(M * T, precoder.cols());
    for (Eigen::Index j = 0; j < precoder.cols(); ++j) {
        Eigen::Map<ComplexMatrix>(B.col(j).data(), M, T) = hn * precoder.col(j).transpose();
    }
    return B;
}

ComplexMatrix cancellation_residual(const ComplexMatrix& Y, std::span<const Reconstruction> users,
                                    const ComplexMatrix& H, const PrecoderSet& precoders, const PacketSpec& packet) {
    ComplexMatrix r = Y;
    for (const auto& u : users) {
        const auto symbols = remodulate(u.payload, packet);
        accumulate_user(r, H.col(u.user), precoders.P.at(u.user), u.power, symbols, -1.0);
    }
    return r;
}

namespace {

class Detector {
  public:
    Detector(const ComplexMatrix& Y, const PrecoderSet& precoders, const ChannelRealization& realization,
             std::span<const double> powers, const ReceiverConfig& config)
        : precoders_(precoders),
          realization_(realization),
          powers_(powers),
          config_(config),
          M_(Y.rows()),
          T_(Y.cols()),
          MT_(Y.size()),
          d_(config.packet.d),
          Yc_(Y),
          qr_(Y.size()),
          taken_(realization.N, 0),
          failures_(realization.N, 0) {}

    DetectionReport run() {
        const double y_energy = Yc_.squaredNorm();
        const double floor = std::max(static_cast<double>(MT_) * config_.noise_var * (1.0 + config_.residual_floor_eps),
                                      1e-20 * y_energy);

        for (int iter = 1; iter <= config_.max_iters; ++iter) {
            const ComplexVector r = qr_.residual(y());
            const double before = r.norm();
            if (before * before <= floor) break;
            if (static_cast<Eigen::Index>(stuck_.size() + 1) * d_ >= MT_) {
                report_.infeasible = true;
                report_.diagnostic = "stopped at iteration " + std::to_string(iter) + ": " +
                                     std::to_string(stuck_.size()) +
                                     " stuck users leave no room for another block in M*T = " + std::to_string(MT_);
                break;
            }

            const Eigen::Map<const ComplexMatrix> R(r.data(), M_, T_);
            const auto scores = block_correlations(R, precoders_, realization_.H, taken_);
            int best = -1;
            double best_score = 0.0;
            for (std::size_t n = 0; n < scores.size(); ++n) {
                if (scores[n] > best_score) {
                    best_score = scores[n];
                    best = static_cast<int>(n);
                }
            }
            if (best < 0) {
                report_.diagnostic = "no selectable user left at iteration " + std::to_string(iter);
                break;
            }

            taken_[best] = 1;
            report_.selected.push_back(best);
            ComplexMatrix block = normalized_block(precoders_.P[best], realization_.H.col(best));
            try {
                qr_.append(block);
            } catch (const RankDeficient&) {
                report_.diagnostic = "block of user " + std::to_string(best) + " is dependent on the stuck support";
                break;
            }
            stuck_.push_back(best);
            blocks_.emplace(best, std::move(block));

            IterationRecord rec;
            rec.iter = iter;
            rec.selected_user = best;
            rec.residual_before = before;
            rec.residual_norm = qr_.residual(y()).norm();

            decode_and_cancel();
            evict_exhausted();

            rec.verified_count = static_cast<int>(report_.verified.size());
            report_.trace.push_back(rec);
        }

        classify();
        return std::move(report_);
    }

  private:
    Eigen::Map<const ComplexVector> y() const { return {Yc_.data(), MT_}; }

    void rebuild() {
        qr_.clear();
        if (stuck_.empty()) return;
        ComplexMatrix support(MT_, static_cast<Eigen::Index>(stuck_.size()) * d_);
        for (std::size_t i = 0; i < stuck_.size(); ++i) {
            support.middleCols(static_cast<Eigen::Index>(i) * d_, d_) = blocks_.at(stuck_[i]);
        }
        qr_.append(support);
    }

    // Decode every stuck user from the joint estimate; cancel the ones whose
    // CRC passes and repeat while cancellations keep happening.
    void decode_and_cancel() {
        const PacketSpec& packet = config_.packet;
        const double noise = std::max(config_.noise_var, 1e-12);
        while (!stuck_.empty()) {
            const ComplexVector coef = qr_.solve(y());
            std::vector<int> passed;
            for (std::size_t i = 0; i < stuck_.size(); ++i) {
                const int u = stuck_[i];
                const double hn = realization_.gains[u] > 0.0 ? std::sqrt(realization_.gains[u]) : 1.0;
                const double amp = (powers_[u] > 0.0 ? std::sqrt(powers_[u]) : 1.0) * hn;
                std::vector<cplx> symbols(d_);
                for (Eigen::Index j = 0; j < d_; ++j) symbols[j] = coef(static_cast<Eigen::Index>(i) * d_ + j) / amp;
                const Bits message = viterbi_decode(qpsk_soft_demap(symbols, noise / (amp * amp)));
                report_.payloads[u] = Bits(message.begin(), message.begin() + packet.payload_bits());
                if (crc_check(message)) {
                    passed.push_back(u);
                } else {
                    ++failures_[u];
                }
            }
            if (passed.empty()) return;

            for (int u : passed) {
                const auto symbols = remodulate(report_.payloads[u], packet);
                accumulate_user(Yc_, realization_.H.col(u), precoders_.P[u], powers_[u], symbols, -1.0);
                report_.verified.push_back(u);
                blocks_.erase(u);
                std::erase(stuck_, u);
            }
            rebuild();
        }
    }

    void evict_exhausted() {
        if (config_.eviction_retries <= 0) return;
        bool changed = false;
        for (auto it = stuck_.begin(); it != stuck_.end();) {
            if (failures_[*it] >= config_.eviction_retries) {
                report_.evicted.push_back(*it);
                blocks_.erase(*it);
                it = stuck_.erase(it);
                changed = true;
            } else {
                ++it;
            }
        }
        if (changed) rebuild();
    }

    void classify() {
        report_.active_users = realization_.active_set;
        report_.verdicts.clear();
        for (int u : report_.active_users) {
            if (report_.is_verified(u)) {
                report_.verdicts.push_back(Verdict::Verified);
            } else if (taken_[u]) {
                report_.verdicts.push_back(Verdict::DetectedFailed);
            } else {
                report_.verdicts.push_back(Verdict::Missed);
            }
        }
        for (int u : report_.selected) {
            if (!std::binary_search(report_.active_users.begin(), report_.active_users.end(), u)) {
                report_.false_alarms.push_back(u);
            }
        }
    }

    const PrecoderSet& precoders_;
    const ChannelRealization& realization_;
    std::span<const double> powers_;
    const ReceiverConfig& config_;
    Eigen::Index M_;
    Eigen::Index T_;
    Eigen::Index MT_;
    Eigen::Index d_;

    ComplexMatrix Yc_;
    IncrementalQr qr_;
    std::vector<int> stuck_;
    std::map<int, ComplexMatrix> blocks_;
    std::vector<std::uint8_t> taken_;
    std::vector<int> failures_;
    DetectionReport report_;
};

}  // namespace

DetectionReport icbomp_detect(const ComplexMatrix& Y, const PrecoderSet& precoders,
                              const ChannelRealization& realization, std::span<const double> powers,
                              const ReceiverConfig& config) {
    if (config.max_iters < 1) throw std::invalid_argument("icbomp_detect: max_iters must be >= 1");
    config.packet.validate();
    if (Y.rows() != realization.M || Y.cols() != precoders.T) {
        throw std::invalid_argument("icbomp_detect: received matrix must be M x T");
    }
    if (precoders.d != config.packet.d) throw std::invalid_argument("icbomp_detect: precoder width differs from d");
    if (static_cast<int>(powers.size()) != realization.N) {
        throw std::invalid_argument("icbomp_detect: need one power per online user");
    }
    return Detector(Y, precoders, realization, powers, config).run();
}

void write_trace_csv(std::ostream& out, const DetectionReport& report) {
    out << "iter,selected_user,residual_norm,verified_count\n" << std::setprecision(10);
    for (const auto& rec : report.trace) {
        out << rec.iter << ',' << rec.selected_user << ',' << rec.residual_norm << ',' << rec.verified_count << '\n';
    }
}

}  // namespace jspma
