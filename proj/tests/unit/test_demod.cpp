#include <doctest.h>

#include "memcovert/backends.hpp"
#include "memcovert/channel_sim.hpp"
#include "memcovert/codec.hpp"
#include "memcovert/config.hpp"
#include "memcovert/demod.hpp"
#include "memcovert/error.hpp"
#include "memcovert/modulation.hpp"

#include <algorithm>
#include <bit>
#include <random>

using namespace memcovert;
using namespace memcovert::demod;
using modulation::kMiB;
using modulation::ModulationParams;

namespace {

constexpr std::int64_t kBase = 2048 * kMiB;
constexpr std::int64_t kLead = 300'000;

struct Tx {
    std::vector<codec::Packet> packets;  // as sent, preamble included
    MemoryTrace trace;
    std::int64_t period_us = 1000;
};

// Parity oracle for the packet layout 1 p1 p2 d1 p3 d2 d3 d4.
std::uint8_t oracle_packet(unsigned nibble) {
    const int d1 = (nibble >> 3) & 1, d2 = (nibble >> 2) & 1, d3 = (nibble >> 1) & 1, d4 = nibble & 1;
    const int p1 = d1 ^ d2 ^ d4, p2 = d1 ^ d3 ^ d4, p3 = d2 ^ d3 ^ d4;
    const int bits[8] = {1, p1, p2, d1, p3, d2, d3, d4};
    std::uint8_t v = 0;
    for (int b : bits) v = static_cast<std::uint8_t>((v << 1) | b);
    return v;
}

Tx transmit(const std::vector<codec::Packet>& packets, const ModulationParams& mod, std::int64_t period_us,
            const channel::NoiseModel& noise = {}) {
    Tx tx;
    tx.packets = packets;
    tx.period_us = period_us;
    const auto bits = codec::packets_to_bits(packets);
    const auto s = modulation::schedule_bits(bits, mod, kLead);
    tx.trace = backend::execute_and_sample(s, noise, period_us, kBase, s.duration_us + 600'000);
    return tx;
}

std::vector<codec::Packet> with_preamble(std::span<const std::uint8_t> payload, int preamble = 1) {
    std::vector<codec::Packet> out(static_cast<std::size_t>(preamble), codec::Packet{0xAA});
    for (auto p : codec::encode_message(payload)) out.push_back(p);
    return out;
}

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> d(0, 255);
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = static_cast<std::uint8_t>(d(rng));
    return v;
}

// Payload nibble errors, matching each sent packet to the received packet
// that starts nearest its nominal position.
struct Errors {
    std::size_t bits = 0, packets = 0, total_bits = 0, total_packets = 0;
};

Errors count_errors(const Tx& tx, const DemodResult& r, const DemodParams& p, int preamble) {
    Errors e;
    const auto first = static_cast<double>(kLead / tx.period_us);
    const auto len = static_cast<double>(p.packet_samples());
    for (std::size_t i = static_cast<std::size_t>(preamble); i < tx.packets.size(); ++i) {
        const double want = first + static_cast<double>(i) * len;
        const ReceivedPacket* best = nullptr;
        for (const auto& rp : r.packets) {
            if (std::abs(static_cast<double>(rp.start_sample) - want) < len / 2) best = &rp;
        }
        const auto sent = codec::hamming74_decode(tx.packets[i].codeword()).nibble.value();
        int wrong = 4;
        if (best != nullptr && best->packet.header()) {
            const auto got = codec::hamming74_decode(best->packet.codeword()).nibble.value();
            wrong = std::popcount(static_cast<unsigned>(sent ^ got));
        }
        e.bits += static_cast<std::size_t>(wrong);
        e.packets += wrong > 0 ? 1 : 0;
        e.total_bits += 4;
        e.total_packets += 1;
    }
    return e;
}

channel::NoiseModel gaussian(double sigma_bytes, std::uint64_t seed) {
    channel::NoiseModel m;
    m.components = {channel::GaussianNoise{sigma_bytes}};
    m.seed = seed;
    return m;
}

}  // namespace

TEST_CASE("parameters derived from modulation") {
    const auto p = DemodParams::from_modulation(ModulationParams::rz_defaults(), 1000);
    CHECK(p.window_samples == 80);
    CHECK(p.f_t_hz == doctest::Approx(25.0));
    CHECK(p.hp_cutoff_hz == doctest::Approx(12.5));
    CHECK(p.hp_order == 5);
    CHECK(p.high_samples == 20);
    CHECK(p.pulse_samples == 40);
    CHECK(p.packet_samples() == 640);

    const auto n = DemodParams::from_modulation(ModulationParams::nrz_defaults(), 20'000);
    CHECK(n.scheme == modulation::Scheme::NrzDelta);
    CHECK(n.slot_samples == 10);
    CHECK(n.delta_threshold_bytes == doctest::Approx(25.0 * kMiB));
    CHECK(n.packet_samples() == 90);

    SUBCASE("sampling below twice the pulse rate is rejected") {
        CHECK_THROWS_AS(DemodParams::from_modulation(ModulationParams::rz_defaults(), 25'000).validate(),
                        ParameterError);
    }
    SUBCASE("config overrides") {
        const auto cfg = Config::parse("[demod]\nhp_order = 3\nthreshold = 1000\n");
        const auto q = DemodParams::from_config(cfg, ModulationParams::rz_defaults(), 1000);
        CHECK(q.hp_order == 3);
        CHECK(q.threshold == doctest::Approx(1000.0));
    }
}

TEST_CASE("highpass_trace has no start-up transient on a constant trace") {
    const std::vector<std::int64_t> v(500, kBase);
    const auto p = DemodParams::from_modulation(ModulationParams::rz_defaults(), 1000);
    for (double y : highpass_trace(MemoryTrace::from_values(v, 1000), p)) CHECK(y == 0.0);
}

TEST_CASE("find_header") {
    const ModulationParams mod;
    const auto p = DemodParams::from_modulation(mod, 1000);

    SUBCASE("flat trace has none") {
        const std::vector<double> flat(5000, 0.0);
        CHECK_FALSE(find_header(flat, p, 0).has_value());
    }
    SUBCASE("ideal 1 bit at a known offset, clean and with noise of block/20") {
        const std::vector<std::uint8_t> one = {1};
        for (std::int64_t k : {37, 250, 611}) {
            const auto s = modulation::schedule_bits(one, mod, k * 1000);
            const auto clean = modulation::ideal_waveform(s, 1000, kBase, s.duration_us + 200'000);
            const auto hit = find_header(highpass_trace(clean, p), p, 0);
            REQUIRE(hit.has_value());
            CHECK(std::llabs(static_cast<std::int64_t>(*hit) - k) <= 2);

            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                const auto noisy = channel::apply_noise(clean, gaussian(mod.block_bytes / 20.0, seed));
                const auto h = find_header(highpass_trace(noisy, p), p, 0);
                REQUIRE(h.has_value());
                CHECK(std::llabs(static_cast<std::int64_t>(*h) - k) <= 5);
            }
        }
    }
    SUBCASE("search starts at from_index") {
        const std::vector<std::uint8_t> bits = {1, 0, 1};
        const auto s = modulation::schedule_bits(bits, mod, 100'000);
        const auto f = highpass_trace(modulation::ideal_waveform(s, 1000, kBase, s.duration_us + 100'000), p);
        const auto second = find_header(f, p, 150);
        REQUIRE(second.has_value());
        CHECK(std::llabs(static_cast<std::int64_t>(*second) - 260) <= 2);
    }
}

TEST_CASE("RZ-OOK receiver, noiseless") {
    const ModulationParams mod;
    const auto p = DemodParams::from_modulation(mod, 1000);

    SUBCASE("0xA payload gives packet bits 11011010") {
        CHECK(oracle_packet(0xA) == 0b11011010);
        const std::vector<codec::Packet> packets = {codec::Packet{0xAA}, codec::Packet{oracle_packet(0xA)}};
        const auto tx = transmit(packets, mod, 1000);
        const auto r = demodulate_rz(tx.trace, p, 1);
        REQUIRE(r.packets.size() == 2);
        CHECK(r.packets[1].packet.to_string() == "11011010");
        CHECK_FALSE(r.truncated);
    }
    SUBCASE("42-packet ASCII message is exact") {
        const std::string text = "Exfiltrated: key=7f3a";
        const std::vector<std::uint8_t> payload(text.begin(), text.end());
        const auto tx = transmit(with_preamble(payload), mod, 1000);
        const auto r = demodulate_rz(tx.trace, p, 1);
        REQUIRE(r.packets.size() == 43);
        for (std::size_t i = 0; i < 43; ++i) CHECK(r.packets[i].packet == tx.packets[i]);
        const auto e = count_errors(tx, r, p, 1);
        CHECK(e.total_packets == 42);
        CHECK(e.bits == 0);
        CHECK(e.packets == 0);
    }
    SUBCASE("decisions are invariant to a DC offset") {
        std::mt19937_64 rng(5);
        const auto tx = transmit(with_preamble(random_bytes(rng, 10)), mod, 1000, gaussian(2.0 * kMiB, 5));
        std::vector<std::int64_t> shifted = tx.trace.values();
        for (auto& v : shifted) v += 777 * kMiB;
        const auto a = demodulate_rz(tx.trace, p, 1);
        const auto b = demodulate_rz(tx.trace.with_values(shifted), p, 1);
        REQUIRE(a.packets.size() == b.packets.size());
        CHECK(a.threshold == doctest::Approx(b.threshold));
        for (std::size_t i = 0; i < a.packets.size(); ++i) {
            CHECK(a.packets[i].packet == b.packets[i].packet);
            CHECK(a.packets[i].start_sample == b.packets[i].start_sample);
        }
    }
    SUBCASE("scaling the trace, edges and threshold together leaves every bit unchanged") {
        std::mt19937_64 rng(6);
        const auto tx = transmit(with_preamble(random_bytes(rng, 10)), mod, 1000, gaussian(2.0 * kMiB, 6));
        const auto a = demodulate_rz(tx.trace, p, 1);
        std::vector<std::int64_t> scaled = tx.trace.values();
        for (auto& v : scaled) v *= 3;
        auto q = p;
        q.sync.edge_min_bytes *= 3;
        q.threshold = a.threshold * 3;
        auto p_fixed = p;
        p_fixed.threshold = a.threshold;
        const auto a2 = demodulate_rz(tx.trace, p_fixed, 1);
        const auto b = demodulate_rz(tx.trace.with_values(scaled), q, 1);
        REQUIRE(a2.packets.size() == b.packets.size());
        for (std::size_t i = 0; i < b.packets.size(); ++i) CHECK(a2.packets[i].packet == b.packets[i].packet);
    }
    SUBCASE("a packet cut off by the end of the trace is reported and kept partially") {
        const std::vector<std::uint8_t> payload = {0xFF, 0xFF};
        const auto tx = transmit(with_preamble(payload), mod, 1000);
        const auto cut_len = static_cast<std::size_t>(kLead / 1000) + 4 * 640 + 300;
        std::vector<TimedSample> cut(tx.trace.samples().begin(), tx.trace.samples().begin() + cut_len);
        const auto r = demodulate_rz(MemoryTrace(cut, 1000), p, 1);
        CHECK(r.truncated);
        CHECK(r.diagnostic.find("past the end") != std::string::npos);
        REQUIRE(r.packets.size() == 5);
        CHECK(r.packets.back().decisions.size() < 8);
    }
}

TEST_CASE("RZ-OOK receiver under cachebench noise stays below 5% BER") {
    const ModulationParams mod;
    const auto p = DemodParams::from_modulation(mod, 1000);
    const std::string text = "Exfiltrated: key=7f3a";
    const std::vector<std::uint8_t> payload(text.begin(), text.end());
    Errors total;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto noise = channel::background_model("cachebench", seed);
        const auto tx = transmit(with_preamble(payload), mod, 1000, noise);
        const auto e = count_errors(tx, demodulate_rz(tx.trace, p, 1), p, 1);
        total.bits += e.bits;
        total.total_bits += e.total_bits;
    }
    const double ber = 100.0 * static_cast<double>(total.bits) / static_cast<double>(total.total_bits);
    MESSAGE("cachebench BER % = " << ber);
    CHECK(ber < 5.0);
}

TEST_CASE("calibrate_threshold") {
    const ModulationParams mod;
    const auto p = DemodParams::from_modulation(mod, 1000);

    SUBCASE("zero-noise preamble: A_0 between two pure clusters") {
        const std::vector<codec::Packet> pre = {codec::Packet{0xAA}};
        const auto tx = transmit(pre, mod, 1000);
        const auto filtered = highpass_trace(tx.trace, p);
        const auto start = find_header(filtered, p, 0);
        REQUIRE(start.has_value());
        const double a0 = calibrate_threshold(filtered, *start, p, 1);
        const auto d = window_decisions(filtered, p, *start, 8, a0);
        double lo_one = 1e300, hi_zero = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            if (i % 2 == 0) lo_one = std::min(lo_one, d[i].amplitude_at_ft);
            else hi_zero = std::max(hi_zero, d[i].amplitude_at_ft);
            CHECK(d[i].bit == (i % 2 == 0 ? 1 : 0));
        }
        CHECK(a0 > hi_zero);
        CHECK(a0 < lo_one);
        CHECK(calibrate_threshold(tx.trace, p, 1) == doctest::Approx(a0));
    }
    SUBCASE("flat trace fails calibration") {
        const std::vector<std::int64_t> v(3000, kBase);
        CHECK_THROWS_AS(calibrate_threshold(MemoryTrace::from_values(v, 1000), p, 1), CalibrationError);
    }
    SUBCASE("noisy preamble: BER within 1 point of the best fixed threshold") {
        std::mt19937_64 rng(21);
        const auto payload = random_bytes(rng, 40);
        for (std::uint64_t seed : {3u, 4u}) {
            const auto tx = transmit(with_preamble(payload), mod, 1000, gaussian(5.0 * kMiB, seed));
            const auto cal = demodulate_rz(tx.trace, p, 1);
            const auto e_cal = count_errors(tx, cal, p, 1);
            double best = 100.0;
            for (int i = 1; i <= 40; ++i) {
                auto q = p;
                q.threshold = cal.threshold * (0.2 + 0.04 * i);
                const auto e = count_errors(tx, demodulate_rz(tx.trace, q, 1), p, 1);
                best = std::min(best, 100.0 * static_cast<double>(e.bits) / static_cast<double>(e.total_bits));
            }
            const double ber_cal = 100.0 * static_cast<double>(e_cal.bits) / static_cast<double>(e_cal.total_bits);
            MESSAGE("seed " << seed << ": calibrated " << ber_cal << "%, best grid " << best << "%");
            CHECK(ber_cal <= best + 1.0);
        }
    }
}

TEST_CASE("NRZ-delta receiver") {
    const auto mod = ModulationParams::nrz_defaults();
    const auto p = DemodParams::from_modulation(mod, 20'000);

    SUBCASE("flat trace reads as all zeros") {
        const std::vector<std::int64_t> v(400, kBase);
        const auto flat = MemoryTrace::from_values(v, 20'000);
        CHECK(demodulate_nrz_delta(flat, p).packets.empty());
        for (const auto& d : nrz_slot_decisions(flat, p, 5, 30)) CHECK(d.bit == 0);
        CHECK(false_rise_rate(flat, p) == 0.0);
    }
    SUBCASE("ideal 0x9D packet reads 10011101") {
        const std::vector<codec::Packet> pk = {codec::Packet{0x9D}};
        const auto tx = transmit(pk, mod, 20'000);
        const auto r = demodulate_nrz_delta(tx.trace, p);
        REQUIRE(r.packets.size() == 1);
        CHECK(r.packets[0].packet.to_string() == "10011101");
        for (const auto& d : r.packets[0].decisions) {
            if (d.bit) CHECK(d.amplitude_at_ft >= p.delta_threshold_bytes);
            else CHECK(d.amplitude_at_ft < p.delta_threshold_bytes);
        }
    }
    SUBCASE("0xAA: delta signal has four spikes above the threshold") {
        const std::vector<codec::Packet> pk = {codec::Packet{0xAA}};
        const auto tx = transmit(pk, mod, 20'000);
        const auto d = delta_signal(tx.trace.values_as_double(), p.slot_samples, p.median_len);
        int runs = 0;
        bool in = false;
        for (double v : d) {
            const bool above = v >= p.delta_threshold_bytes;
            if (above && !in) ++runs;
            in = above;
        }
        CHECK(runs == 4);
    }
    SUBCASE("seeded noise: 200 packets, few errors") {
        std::mt19937_64 rng(8);
        const auto payload = random_bytes(rng, 100);
        const auto tx = transmit(with_preamble(payload, 0), mod, 20'000, gaussian(2.5 * kMiB, 8));
        const auto e = count_errors(tx, demodulate_nrz_delta(tx.trace, p), p, 0);
        CHECK(e.total_packets == 200);
        CHECK(e.packets <= 4);
    }
}

TEST_CASE("median_filter") {
    const std::vector<double> v = {1, 9, 2, 8, 3, 7, 4};
    const auto m = median_filter(v, 3);
    REQUIRE(m.size() == v.size());
    // Trailing window: element i is the median of v[i-2..i].
    CHECK(m[2] == 2.0);
    CHECK(m[3] == 8.0);
    CHECK(m[4] == 3.0);
    CHECK(m[6] == 4.0);
}

TEST_CASE("noiseless round trip for random payloads, both schemes") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> len(1, 12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto payload = random_bytes(rng, len(rng));
        {
            const ModulationParams mod;
            const auto p = DemodParams::from_modulation(mod, 1000);
            const auto tx = transmit(with_preamble(payload), mod, 1000);
            const auto r = demodulate_rz(tx.trace, p, 1);
            REQUIRE(r.packets.size() == tx.packets.size());
            for (std::size_t i = 0; i < r.packets.size(); ++i) CHECK(r.packets[i].packet == tx.packets[i]);
        }
        {
            const auto mod = ModulationParams::nrz_defaults();
            const auto p = DemodParams::from_modulation(mod, 20'000);
            const auto tx = transmit(with_preamble(payload, 0), mod, 20'000);
            const auto r = demodulate_nrz_delta(tx.trace, p);
            REQUIRE(r.packets.size() == tx.packets.size());
            for (std::size_t i = 0; i < r.packets.size(); ++i) CHECK(r.packets[i].packet == tx.packets[i]);
        }
    }
}
