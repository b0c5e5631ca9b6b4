#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace memcovert::codec {

// Four payload bits, MSB-first.
class Nibble {
public:
    constexpr Nibble() = default;
    explicit Nibble(unsigned value);
    constexpr std::uint8_t value() const noexcept { return value_; }
    friend constexpr bool operator==(Nibble, Nibble) = default;

private:
    std::uint8_t value_ = 0;
};

// Seven-bit Hamming codeword held in the low bits; bit 6 is position 1
// (p1), bit 0 is position 7 (d4). Layout p1 p2 d1 p3 d2 d3 d4, even parity.
using Codeword = std::uint8_t;

// Header bit followed by a codeword: bit 7 is the header.
struct Packet {
    std::uint8_t bits = 0;

    constexpr bool header() const noexcept { return (bits & 0x80) != 0; }
    constexpr Codeword codeword() const noexcept { return bits & 0x7f; }
    // i = 0 is the header, i = 7 the last codeword bit.
    constexpr bool bit(int i) const noexcept { return ((bits >> (7 - i)) & 1) != 0; }
    std::string to_string() const;

    friend constexpr bool operator==(Packet, Packet) = default;
};

struct DecodeOutcome {
    Nibble nibble;
    bool corrected = false;
    bool uncorrectable = false;
};

Codeword hamming74_encode(Nibble n) noexcept;
DecodeOutcome hamming74_decode(Codeword c) noexcept;

Packet make_packet(Nibble n) noexcept;
Packet packet_from_bits(std::span<const std::uint8_t> bits);  // 8 entries of 0/1

// Payload bytes split MSB-first into nibbles.
std::vector<Nibble> to_nibbles(std::span<const std::uint8_t> payload);
// Bit string (0/1 entries), zero-padded to a multiple of four.
std::vector<Nibble> bits_to_nibbles(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> nibbles_to_bytes(std::span<const Nibble> nibbles);

std::vector<Packet> encode_message(std::span<const std::uint8_t> payload);
std::vector<Packet> encode_nibbles(std::span<const Nibble> nibbles);
// Channel bits, MSB-first, eight per packet.
std::vector<std::uint8_t> packets_to_bits(std::span<const Packet> packets);

struct DecodedMessage {
    // One nibble per input packet, in order. Packets flagged uncorrectable
    // keep their best-effort nibble so positions stay aligned.
    std::vector<Nibble> nibbles;
    std::vector<DecodeOutcome> outcomes;
    std::vector<std::uint8_t> payload;  // nibbles packed into bytes (odd tail padded)
};

// A packet whose header reads 0 is a framing error: it is flagged
// uncorrectable and decoding carries on with the next packet.
DecodedMessage decode_packets(std::span<const Packet> packets);

std::string to_bit_string(std::span<const Packet> packets);

}  // namespace memcovert::codec
