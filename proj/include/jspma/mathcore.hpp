#pragma once

// Numeric substrate shared by every other module: special functions, the
// Gamma(M,1) family that models ||h||^2 under Rayleigh fading, adaptive
// quadrature, dense complex linear algebra and seeded random streams.

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace jspma {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Raised when adaptive quadrature exhausts its refinement budget.
class NonConvergence : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised by least_squares when the system matrix is numerically rank deficient.
class RankDeficient : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Random streams

/// Immutable descriptor of a reproducible random substream.
///
/// A stream is named by (master_seed, stream_id). Consumers never share an
/// engine; they derive a child descriptor with derive() and build their own
/// Sampler from it, so results do not depend on execution order.
class RandomStream {
  public:
    constexpr RandomStream(std::uint64_t master_seed, std::uint64_t stream_id = 0) noexcept
        : master_seed_(master_seed), stream_id_(stream_id) {}

    [[nodiscard]] std::uint64_t master_seed() const noexcept { return master_seed_; }
    [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Child stream labelled by (a, b, c); the label is hashed into the id.
    [[nodiscard]] RandomStream derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept;

    /// 64-bit seed for an engine bound to this stream.
    [[nodiscard]] std::uint64_t engine_seed() const noexcept;

    friend bool operator==(const RandomStream&, const RandomStream&) = default;

  private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
};

/// SplitMix64 finalizer; used for stream-id hashing.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stateful draw source bound to one RandomStream.
class Sampler {
  public:
    explicit Sampler(const RandomStream& stream) : engine_(stream.engine_seed()) {}

    /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    cplx complex_gaussian(double variance = 1.0);
    double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    std::uint8_t bit() { return static_cast<std::uint8_t>(engine_() >> 63); }
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Special functions

/// Standard normal upper tail probability, Q(x) = P(N(0,1) > x).
[[nodiscard]] double q_function(double x);

/// Density of ||h||^2 for an M-antenna i.i.d. CN(0,1) channel: Gamma(M, 1).
[[nodiscard]] double chi2_pdf(double x, int M);

/// CDF matching chi2_pdf: 1 - exp(-x) sum_{k<M} x^k / k!.
[[nodiscard]] double chi2_cdf(double x, int M);

/// Right inverse of chi2_cdf, accurate to 1e-10 in probability. Requires 0 <= p < 1.
[[nodiscard]] double chi2_inverse_cdf(double p, int M);

/// Truncation point standing in for +infinity when integrating Gamma(M,1) integrands.
[[nodiscard]] double gamma_truncation(int M);

// ---------------------------------------------------------------------------
// Quadrature

/// Adaptive Gauss-Kronrod (7/15) integration of f over [a, b].
///
/// Targets a relative error of rel_tol; throws NonConvergence when the error
/// estimate is still above target after the refinement budget is spent.
[[nodiscard]] double integrate(const std::function<double(double)>& f, double a, double b,
                               double rel_tol = 1e-8);

// ---------------------------------------------------------------------------
// Linear algebra

/// argmin_x ||A x - y||_2 by Householder QR. Throws RankDeficient when
/// min |R_ii| < 1e-10 * max |R_ii|, std::invalid_argument on shape errors.
[[nodiscard]] ComplexVector least_squares(const ComplexMatrix& A, const ComplexVector& y);

/// Eigenvalues of a Hermitian matrix, ascending. Throws std::invalid_argument
/// when G is not square or deviates from Hermitian by more than 1e-10.
[[nodiscard]] std::vector<double> hermitian_eigenvalues(const ComplexMatrix& G);

}  // namespace jspma
