#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jspma/channel.hpp"

namespace jspma {

using Bits = std::vector<std::uint8_t>;

inline constexpr int kConvTailBits = 6;
inline constexpr int kConvStates = 64;

/// Bit budget of one packet: d QPSK symbols carry 2d coded bits, i.e. d
/// encoder input bits = payload + CRC + 6 tail bits.
struct PacketSpec {
    int d = 32;
    int crc_bits = 16;

    [[nodiscard]] int info_bits() const { return d; }
    [[nodiscard]] int message_bits() const { return d - kConvTailBits; }
    [[nodiscard]] int payload_bits() const { return d - kConvTailBits - crc_bits; }
    [[nodiscard]] int coded_bits() const { return 2 * d; }
    /// Throws std::invalid_argument if the budget leaves no payload.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Error detection: CRC-16, polynomial 0x1021, init 0xFFFF, MSB first

[[nodiscard]] std::uint16_t crc16(std::span<const std::uint8_t> bits);
[[nodiscard]] Bits crc_attach(std::span<const std::uint8_t> payload, int payload_bits);
[[nodiscard]] bool crc_check(std::span<const std::uint8_t> bits);

// ---------------------------------------------------------------------------
// (2,1,7) convolutional code, generators 171/133 octal, zero-terminated

/// Encodes message followed by 6 zero tail bits; output is 2 (n + 6) bits.
[[nodiscard]] Bits conv_encode(std::span<const std::uint8_t> message);

/// Soft-input Viterbi over the terminated trellis. llr[i] > 0 favours coded
/// bit 0. Returns the message without the tail.
[[nodiscard]] Bits viterbi_decode(std::span<const double> llr);

// ---------------------------------------------------------------------------
// Gray-mapped QPSK: (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)

[[nodiscard]] std::vector<cplx> qpsk_map(std::span<const std::uint8_t> bits);
/// Exact per-bit LLRs for y = s + n, n ~ CN(0, noise_var).
[[nodiscard]] std::vector<double> qpsk_soft_demap(std::span<const cplx> symbols, double noise_var);
[[nodiscard]] Bits qpsk_hard_demap(std::span<const cplx> symbols);

// ---------------------------------------------------------------------------
// Precoding

/// Per-user T x d precoders with unit-norm columns. User n's matrix depends
/// only on (seed, n).
struct PrecoderSet {
    int T = 0;
    int d = 0;
    std::uint64_t seed = 0;
    std::vector<ComplexMatrix> P;

    [[nodiscard]] int users() const { return static_cast<int>(P.size()); }
};

[[nodiscard]] ComplexMatrix generate_precoder(int T, int d, std::uint64_t seed, int user);
[[nodiscard]] PrecoderSet generate_precoders(int N, int T, int d, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Frames and the received signal

struct UserFrame {
    int user = -1;
    double power = 0.0;
    Bits payload;
    Bits coded;
    std::vector<cplx> symbols;  // d unit-energy QPSK symbols
    ComplexVector x;            // sqrt(power) * P_user * s, length T
};

/// payload -> CRC -> encode -> QPSK -> precode -> scale.
[[nodiscard]] UserFrame build_frame(int user, std::span<const std::uint8_t> payload, const PacketSpec& packet,
                                    const ComplexMatrix& precoder, double power);

/// Re-encodes a decoded payload into the transmit-side symbol vector.
[[nodiscard]] std::vector<cplx> remodulate(std::span<const std::uint8_t> payload, const PacketSpec& packet);

struct ReceivedSignal {
    ComplexMatrix Y;  // M x T
    double noise_var = 1.0;

    /// Column-stacked y = vec(Y), length M T.
    [[nodiscard]] ComplexVector vec() const;
};

/// Y = sum_n h_n x_n^T + Z with Z i.i.d. CN(0, noise_var). Frames must cover
/// exactly the active set.
[[nodiscard]] ReceivedSignal synthesize_received(std::span<const UserFrame> frames,
                                                 const ChannelRealization& realization, int T, double noise_var,
                                                 const RandomStream& stream);

/// Adds sign * h (sqrt(power) P s)^T to Y in place.
void accumulate_user(ComplexMatrix& Y, const ComplexVector& h, const ComplexMatrix& precoder, double power,
                     std::span<const cplx> symbols, double sign = 1.0);

}  // namespace jspma
