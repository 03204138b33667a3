#include "jspma/phy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace jspma {

namespace {

constexpr unsigned kGen0 = 0171;
constexpr unsigned kGen1 = 0133;
constexpr std::uint64_t kPrecoderTag = 0x70726563;  // "prec"
constexpr std::uint64_t kNoiseTag = 0x6e6f6973;     // "nois"

struct Branch {
    std::uint8_t c0;
    std::uint8_t c1;
};

// Output pair for register (input << 6) | state.
constexpr std::array<Branch, 128> make_branch_table() {
    std::array<Branch, 128> t{};
    for (unsigned reg = 0; reg < 128; ++reg) {
        t[reg] = {static_cast<std::uint8_t>(std::popcount(reg & kGen0) & 1),
                  static_cast<std::uint8_t>(std::popcount(reg & kGen1) & 1)};
    }
    return t;
}

constexpr auto kBranches = make_branch_table();

}  // namespace

void PacketSpec::validate() const {
    if (d <= kConvTailBits) throw std::invalid_argument("packet: d must exceed the 6 tail bits");
    if (crc_bits != 16) throw std::invalid_argument("packet: only a 16-bit CRC is supported");
    if (payload_bits() < 1) {
        throw std::invalid_argument("packet: d = " + std::to_string(d) + " leaves no payload after CRC and tail");
    }
}

std::uint16_t crc16(std::span<const std::uint8_t> bits) {
    std::uint16_t reg = 0xFFFF;
    for (std::uint8_t b : bits) {
        const bool feedback = ((reg >> 15) & 1U) != (b & 1U);
        reg = static_cast<std::uint16_t>(reg << 1);
        if (feedback) reg ^= 0x1021;
    }
    return reg;
}

Bits crc_attach(std::span<const std::uint8_t> payload, int payload_bits) {
    if (static_cast<int>(payload.size()) != payload_bits) {
        throw std::invalid_argument("crc_attach: payload has " + std::to_string(payload.size()) + " bits, expected " +
                                    std::to_string(payload_bits));
    }
    Bits out(payload.begin(), payload.end());
    const std::uint16_t crc = crc16(payload);
    for (int i = 15; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((crc >> i) & 1U));
    return out;
}

bool crc_check(std::span<const std::uint8_t> bits) {
    if (bits.size() < 16) return false;
    // Appending the CRC drives the register to zero.
    return crc16(bits) == 0;
}

Bits conv_encode(std::span<const std::uint8_t> message) {
    Bits out;
    out.reserve(2 * (message.size() + kConvTailBits));
    unsigned state = 0;
    const auto push = [&](unsigned bit) {
        const unsigned reg = (bit << 6) | state;
        out.push_back(kBranches[reg].c0);
        out.push_back(kBranches[reg].c1);
        state = reg >> 1;
    };
    for (std::uint8_t b : message) push(b & 1U);
    for (int i = 0; i < kConvTailBits; ++i) push(0);
    return out;
}

Bits viterbi_decode(std::span<const double> llr) {
    if (llr.size() % 2 != 0 || llr.size() < 2 * kConvTailBits) {
        throw std::invalid_argument("viterbi_decode: need an even number of coded bits covering the tail");
    }
    const std::size_t steps = llr.size() / 2;
    constexpr double kUnreachable = -std::numeric_limits<double>::infinity();

    std::array<double, kConvStates> metric;
    std::array<double, kConvStates> next;
    metric.fill(kUnreachable);
    metric[0] = 0.0;
    std::vector<std::uint64_t> decisions(steps, 0);

    for (std::size_t t = 0; t < steps; ++t) {
        const double l0 = llr[2 * t];
        const double l1 = llr[2 * t + 1];
        for (unsigned ns = 0; ns < kConvStates; ++ns) {
            const unsigned input = ns >> 5;
            double best = kUnreachable;
            unsigned pick = 0;
            for (unsigned x = 0; x < 2; ++x) {
                const unsigned ps = ((ns & 31U) << 1) | x;
                if (metric[ps] == kUnreachable) continue;
                const auto br = kBranches[(input << 6) | ps];
                // Correlation metric: +llr for coded 0, -llr for coded 1.
                const double m = metric[ps] + (br.c0 ? -l0 : l0) + (br.c1 ? -l1 : l1);
                if (m > best) {
                    best = m;
                    pick = x;
                }
            }
            next[ns] = best;
            if (pick) decisions[t] |= (std::uint64_t{1} << ns);
        }
        metric = next;
    }

    // Terminated trellis ends in state 0.
    Bits decoded(steps);
    unsigned state = 0;
    for (std::size_t t = steps; t-- > 0;) {
        decoded[t] = static_cast<std::uint8_t>(state >> 5);
        const unsigned x = static_cast<unsigned>((decisions[t] >> state) & 1U);
        state = ((state & 31U) << 1) | x;
    }
    decoded.resize(steps - kConvTailBits);
    return decoded;
}

std::vector<cplx> qpsk_map(std::span<const std::uint8_t> bits) {
    if (bits.size() % 2 != 0) throw std::invalid_argument("qpsk_map: odd number of bits");
    const double a = 1.0 / std::sqrt(2.0);
    std::vector<cplx> out(bits.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {bits[2 * i] ? -a : a, bits[2 * i + 1] ? -a : a};
    }
    return out;
}

std::vector<double> qpsk_soft_demap(std::span<const cplx> symbols, double noise_var) {
    if (!(noise_var > 0.0)) throw std::invalid_argument("qpsk_soft_demap: noise variance must be positive");
    const double scale = 2.0 * std::sqrt(2.0) / noise_var;
    std::vector<double> llr(2 * symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        llr[2 * i] = scale * symbols[i].real();
        llr[2 * i + 1] = scale * symbols[i].imag();
    }
    return llr;
}

Bits qpsk_hard_demap(std::span<const cplx> symbols) {
    Bits out(2 * symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        out[2 * i] = symbols[i].real() < 0.0;
        out[2 * i + 1] = symbols[i].imag() < 0.0;
    }
    return out;
}

ComplexMatrix generate_precoder(int T, int d, std::uint64_t seed, int user) {
    if (d >= T) throw std::invalid_argument("generate_precoder: require d < T");
    if (d < 1) throw std::invalid_argument("generate_precoder: d must be positive");
    Sampler draw(RandomStream(seed).derive(kPrecoderTag, static_cast<std::uint64_t>(user)));
    ComplexMatrix P(T, d);
    for (int j = 0; j < d; ++j) {
        for (int t = 0; t < T; ++t) P(t, j) = draw.complex_gaussian(1.0);
        P.col(j).normalize();
    }
    return P;
}

PrecoderSet generate_precoders(int N, int T, int d, std::uint64_t seed) {
    PrecoderSet set;
    set.T = T;
    set.d = d;
    set.seed = seed;
    set.P.reserve(N);
    for (int n = 0; n < N; ++n) set.P.push_back(generate_precoder(T, d, seed, n));
    return set;
}

std::vector<cplx> remodulate(std::span<const std::uint8_t> payload, const PacketSpec& packet) {
    const Bits message = crc_attach(payload, packet.payload_bits());
    return qpsk_map(conv_encode(message));
}

UserFrame build_frame(int user, std::span<const std::uint8_t> payload, const PacketSpec& packet,
                      const ComplexMatrix& precoder, double power) {
    if (precoder.cols() != packet.d) throw std::invalid_argument("build_frame: precoder width differs from d");
    UserFrame f;
    f.user = user;
    f.power = power;
    f.payload.assign(payload.begin(), payload.end());
    f.coded = conv_encode(crc_attach(payload, packet.payload_bits()));
    f.symbols = qpsk_map(f.coded);
    const Eigen::Map<const ComplexVector> s(f.symbols.data(), static_cast<Eigen::Index>(f.symbols.size()));
    f.x = std::sqrt(power) * (precoder * s);
    return f;
}

ComplexVector ReceivedSignal::vec() const {
    return Eigen::Map<const ComplexVector>(Y.data(), Y.size());
}

void accumulate_user(ComplexMatrix& Y, const ComplexVector& h, const ComplexMatrix& precoder, double power,
                     std::span<const cplx> symbols, double sign) {
    const Eigen::Map<const ComplexVector> s(symbols.data(), static_cast<Eigen::Index>(symbols.size()));
    const ComplexVector x = (sign * std::sqrt(power)) * (precoder * s);
    Y.noalias() += h * x.transpose();
}

ReceivedSignal synthesize_received(std::span<const UserFrame> frames, const ChannelRealization& realization, int T,
                                   double noise_var, const RandomStream& stream) {
    if (frames.size() != realization.active_set.size()) {
        throw std::invalid_argument("synthesize_received: frame count differs from the active set");
    }
    ReceivedSignal rx;
    rx.noise_var = noise_var;
    rx.Y = ComplexMatrix::Zero(realization.M, T);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        if (f.user != realization.active_set[i]) {
            throw std::invalid_argument("synthesize_received: frames must follow the active set order");
        }
        if (f.x.size() != T) throw std::invalid_argument("synthesize_received: frame length differs from T");
        rx.Y.noalias() += realization.H.col(f.user) * f.x.transpose();
    }
    if (noise_var > 0.0) {
        Sampler noise(stream.derive(kNoiseTag));
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index m = 0; m < rx.Y.rows(); ++m) rx.Y(m, t) += noise.complex_gaussian(noise_var);
    }
    return rx;
}

}  // namespace jspma
