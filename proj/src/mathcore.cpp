#include "jspma/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace jspma {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RandomStream RandomStream::derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const noexcept {
    std::uint64_t h = mix64(stream_id_ ^ 0x5851f42d4c957f2dULL);
    h = mix64(h ^ a);
    h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
    return RandomStream(master_seed_, h);
}

std::uint64_t RandomStream::engine_seed() const noexcept {
    return mix64(mix64(master_seed_) ^ stream_id_);
}

cplx Sampler::complex_gaussian(double variance) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
}

double q_function(double x) {
    return 0.5 * std::erfc(x / std::sqrt(2.0));
}

double chi2_pdf(double x, int M) {
    if (M < 1) throw std::invalid_argument("chi2_pdf: M must be >= 1");
    if (x < 0.0) return 0.0;
    if (x == 0.0) return M == 1 ? 1.0 : 0.0;
    return std::exp(-x + (M - 1) * std::log(x) - std::lgamma(static_cast<double>(M)));
}

double chi2_cdf(double x, int M) {
    if (M < 1) throw std::invalid_argument("chi2_cdf: M must be >= 1");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double log_x = std::log(x);
    if (x < M) {
        // Lower tail directly: exp(-x) sum_{k>=M} x^k/k!, avoids cancellation near 0.
        const double lead = std::exp(-x + M * log_x - std::lgamma(M + 1.0));
        double term = 1.0;
        double sum = 1.0;
        for (int j = 1; j < 10000; ++j) {
            term *= x / (M + j);
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        return std::min(1.0, lead * sum);
    }
    double tail = 0.0;
    for (int k = 0; k < M; ++k) {
        tail += std::exp(-x + k * log_x - std::lgamma(k + 1.0));
    }
    return std::clamp(1.0 - tail, 0.0, 1.0);
}

double gamma_truncation(int M) {
    return M + 40.0 * std::sqrt(static_cast<double>(M)) + 40.0;
}

double chi2_inverse_cdf(double p, int M) {
    if (M < 1) throw std::invalid_argument("chi2_inverse_cdf: M must be >= 1");
    if (!(p >= 0.0 && p < 1.0)) {
        throw std::invalid_argument("chi2_inverse_cdf: p must lie in [0, 1), got " + std::to_string(p));
    }
    if (p == 0.0) return 0.0;

    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(M));
    while (chi2_cdf(hi, M) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) break;
    }

    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double err = chi2_cdf(x, M) - p;
        if (std::abs(err) <= 1e-13) return x;
        if (err > 0.0) hi = x; else lo = x;
        const double slope = chi2_pdf(x, M);
        double next = slope > 0.0 ? x - err / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return x;
        x = next;
    }
    return x;
}

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
    if (a == b) return 0.0;
    constexpr unsigned max_depth = 25;
    double error = 0.0;
    double l1 = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, rel_tol, &error, &l1);
    if (std::isfinite(value) && error <= 10.0 * rel_tol * std::max(std::abs(value), l1) + 1e-300) return value;

    // Bisection stalls on square-root endpoint behaviour; the double-exponential
    // rule clusters nodes at the ends instead.
    double ts_error = 0.0;
    double ts_l1 = 0.0;
    double ts_value = std::numeric_limits<double>::quiet_NaN();
    try {
        boost::math::quadrature::tanh_sinh<double> rule(15);
        ts_value = rule.integrate(f, a, b, rel_tol, &ts_error, &ts_l1);
    } catch (const std::exception&) {
    }
    if (std::isfinite(ts_value) && ts_error <= 10.0 * rel_tol * std::max(std::abs(ts_value), ts_l1) + 1e-300) {
        return ts_value;
    }
    throw NonConvergence("integrate: error estimate " + std::to_string(error) + " exceeds target on [" +
                         std::to_string(a) + ", " + std::to_string(b) + "]");
}

ComplexVector least_squares(const ComplexMatrix& A, const ComplexVector& y) {
    if (A.rows() != y.size()) throw std::invalid_argument("least_squares: row count does not match rhs");
    if (A.cols() == 0) return ComplexVector(0);
    if (A.rows() < A.cols()) throw std::invalid_argument("least_squares: system is underdetermined");

    Eigen::HouseholderQR<ComplexMatrix> qr(A);
    const auto n = A.cols();
    const auto R = qr.matrixQR().topLeftCorner(n, n).template triangularView<Eigen::Upper>();
    double dmax = 0.0;
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = std::abs(qr.matrixQR()(i, i));
        dmax = std::max(dmax, d);
        dmin = std::min(dmin, d);
    }
    if (dmax == 0.0 || dmin < 1e-10 * dmax) throw RankDeficient("least_squares: matrix is rank deficient");

    ComplexVector qty = qr.householderQ().adjoint() * y;
    return R.solve(qty.head(n));
}

std::vector<double> hermitian_eigenvalues(const ComplexMatrix& G) {
    if (G.rows() != G.cols()) throw std::invalid_argument("hermitian_eigenvalues: matrix is not square");
    const double scale = std::max(1.0, G.cwiseAbs().maxCoeff());
    if ((G - G.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw std::invalid_argument("hermitian_eigenvalues: matrix is not Hermitian");
    }
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(G, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = solver.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

}  // namespace jspma
