#include "memcovert/codec.hpp"

#include "memcovert/error.hpp"

namespace memcovert::codec {

namespace {

// Bit for 1-indexed codeword position p (1..7) within a Codeword.
constexpr unsigned pos_bit(int p) { return 1u << (7 - p); }

constexpr unsigned at(Codeword c, int p) { return (c & pos_bit(p)) ? 1u : 0u; }

}  // namespace

Nibble::Nibble(unsigned value) : value_(static_cast<std::uint8_t>(value)) {
    if (value > 15) throw InvalidInput("nibble out of range: " + std::to_string(value));
}

std::string Packet::to_string() const {
    std::string s(8, '0');
    for (int i = 0; i < 8; ++i) s[i] = bit(i) ? '1' : '0';
    return s;
}

Codeword hamming74_encode(Nibble n) noexcept {
    const unsigned v = n.value();
    const unsigned d1 = (v >> 3) & 1, d2 = (v >> 2) & 1, d3 = (v >> 1) & 1, d4 = v & 1;
    const unsigned p1 = d1 ^ d2 ^ d4;
    const unsigned p2 = d1 ^ d3 ^ d4;
    const unsigned p3 = d2 ^ d3 ^ d4;
    return static_cast<Codeword>((p1 << 6) | (p2 << 5) | (d1 << 4) | (p3 << 3) | (d2 << 2) |
                                 (d3 << 1) | d4);
}

DecodeOutcome hamming74_decode(Codeword c) noexcept {
    c &= 0x7f;
    // Syndrome bit k checks every position whose index has bit k set.
    unsigned syndrome = 0;
    for (int p = 1; p <= 7; ++p) {
        if (at(c, p)) syndrome ^= static_cast<unsigned>(p);
    }
    DecodeOutcome out;
    if (syndrome != 0) {
        c ^= static_cast<Codeword>(pos_bit(static_cast<int>(syndrome)));
        out.corrected = true;
    }
    const unsigned value = (at(c, 3) << 3) | (at(c, 5) << 2) | (at(c, 6) << 1) | at(c, 7);
    out.nibble = Nibble(value);
    return out;
}

Packet make_packet(Nibble n) noexcept {
    return Packet{static_cast<std::uint8_t>(0x80 | hamming74_encode(n))};
}

Packet packet_from_bits(std::span<const std::uint8_t> bits) {
    if (bits.size() != 8) throw InvalidInput("packet needs exactly 8 bits");
    std::uint8_t v = 0;
    for (auto b : bits) {
        if (b > 1) throw InvalidInput("bit values must be 0 or 1");
        v = static_cast<std::uint8_t>((v << 1) | b);
    }
    return Packet{v};
}

std::vector<Nibble> to_nibbles(std::span<const std::uint8_t> payload) {
    std::vector<Nibble> out;
    out.reserve(payload.size() * 2);
    for (auto byte : payload) {
        out.emplace_back(byte >> 4);
        out.emplace_back(byte & 0x0f);
    }
    return out;
}

std::vector<Nibble> bits_to_nibbles(std::span<const std::uint8_t> bits) {
    std::vector<Nibble> out;
    for (std::size_t i = 0; i < bits.size(); i += 4) {
        unsigned v = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            const unsigned b = i + j < bits.size() ? bits[i + j] : 0u;
            if (b > 1) throw InvalidInput("bit values must be 0 or 1");
            v = (v << 1) | b;
        }
        out.emplace_back(v);
    }
    return out;
}

std::vector<std::uint8_t> nibbles_to_bytes(std::span<const Nibble> nibbles) {
    std::vector<std::uint8_t> out;
    out.reserve((nibbles.size() + 1) / 2);
    for (std::size_t i = 0; i < nibbles.size(); i += 2) {
        const unsigned hi = nibbles[i].value();
        const unsigned lo = i + 1 < nibbles.size() ? nibbles[i + 1].value() : 0u;
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

std::vector<Packet> encode_nibbles(std::span<const Nibble> nibbles) {
    std::vector<Packet> out;
    out.reserve(nibbles.size());
    for (auto n : nibbles) out.push_back(make_packet(n));
    return out;
}

std::vector<Packet> encode_message(std::span<const std::uint8_t> payload) {
    const auto nibbles = to_nibbles(payload);
    return encode_nibbles(nibbles);
}

std::vector<std::uint8_t> packets_to_bits(std::span<const Packet> packets) {
    std::vector<std::uint8_t> bits;
    bits.reserve(packets.size() * 8);
    for (auto p : packets) {
        for (int i = 0; i < 8; ++i) bits.push_back(p.bit(i) ? 1 : 0);
    }
    return bits;
}

DecodedMessage decode_packets(std::span<const Packet> packets) {
    DecodedMessage msg;
    msg.nibbles.reserve(packets.size());
    msg.outcomes.reserve(packets.size());
    for (auto p : packets) {
        DecodeOutcome o = hamming74_decode(p.codeword());
        if (!p.header()) {
            o.corrected = false;
            o.uncorrectable = true;
        }
        msg.nibbles.push_back(o.nibble);
        msg.outcomes.push_back(o);
    }
    msg.payload = nibbles_to_bytes(msg.nibbles);
    return msg;
}

std::string to_bit_string(std::span<const Packet> packets) {
    std::string s;
    s.reserve(packets.size() * 8);
    for (auto p : packets) s += p.to_string();
    return s;
}

}  // namespace memcovert::codec
