#include <doctest.h>

#include "memcovert/codec.hpp"
#include "memcovert/config.hpp"
#include "memcovert/error.hpp"
#include "memcovert/modulation.hpp"

#include <bit>
#include <map>
#include <random>

using namespace memcovert;
using namespace memcovert::modulation;

namespace {

// Cumulative-sum oracle: level(t) = sum of block sizes whose alloc time <= t
// and whose matching free (if any) is later than t.
std::int64_t oracle_level(const Schedule& s, std::int64_t t) {
    std::map<std::uint32_t, std::int64_t> free_time;
    for (const auto& e : s.events) {
        if (e.kind == ActuationKind::Free) free_time[e.handle] = e.t_us;
    }
    std::int64_t level = 0;
    for (const auto& e : s.events) {
        if (e.kind != ActuationKind::Alloc || e.t_us > t) continue;
        auto it = free_time.find(e.handle);
        if (it == free_time.end() || it->second > t) level += e.bytes;
    }
    return level;
}

std::vector<std::uint8_t> random_bits(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution b(0.5);
    std::vector<std::uint8_t> bits(n);
    for (auto& x : bits) x = b(rng) ? 1 : 0;
    return bits;
}

}  // namespace

TEST_CASE("default parameters give 25 Hz pulses and 6.25 payload bit/s") {
    auto p = ModulationParams::rz_defaults();
    CHECK(p.t_p_us() == 40'000);
    CHECK(1e6 / p.t_p_us() == doctest::Approx(25.0));
    // 4 payload bits per 8 channel bits.
    const double channel_bps = 1e6 / p.bit_duration_us();
    CHECK(channel_bps * 4.0 / 8.0 == doctest::Approx(6.25));
    CHECK(p.block_bytes == 20 * kMiB);
    auto n = ModulationParams::nrz_defaults();
    CHECK(n.t_p_us() == 200'000);
    CHECK(n.delta_bytes == 40 * kMiB);
    CHECK(n.delta_threshold_bytes == 25 * kMiB);
}

TEST_CASE("schedule_rz_ook examples") {
    ModulationParams p;
    SUBCASE("zero bit is silence") {
        const std::uint8_t bits[] = {0};
        auto s = schedule_rz_ook(bits, p);
        CHECK(s.count(ActuationKind::Alloc) == 0);
        CHECK(s.duration_us == p.pulses_per_bit * p.t_p_us());
    }
    SUBCASE("single one bit") {
        const std::uint8_t bits[] = {1};
        auto s = schedule_rz_ook(bits, p);
        REQUIRE(s.events.size() == 4);
        CHECK(s.events[0] == ActuationEvent{0, ActuationKind::Alloc, 20 * kMiB, 0});
        CHECK(s.events[1] == ActuationEvent{20'000, ActuationKind::Free, 0, 0});
        CHECK(s.events[2] == ActuationEvent{40'000, ActuationKind::Alloc, 20 * kMiB, 1});
        CHECK(s.events[3] == ActuationEvent{60'000, ActuationKind::Free, 0, 1});
        CHECK(s.duration_us == 80'000);
    }
    SUBCASE("one then zero") {
        const std::uint8_t bits[] = {1, 0};
        auto s = schedule_rz_ook(bits, p);
        CHECK(s.events.size() == 4);
        CHECK(s.events.back().t_us == 60'000);
        CHECK(s.duration_us == 160'000);
    }
    SUBCASE("empty") {
        auto s = schedule_rz_ook({}, p);
        CHECK(s.events.empty());
        CHECK(s.duration_us == 0);
    }
}

TEST_CASE("rz-ook schedule properties") {
    std::mt19937_64 rng(3);
    ModulationParams p;
    for (int trial = 0; trial < 50; ++trial) {
        p.pulses_per_bit = 1 + trial % 3;
        p.t_h_us = 5'000 + 1'000 * (trial % 7);
        p.t_l_us = 7'000 + 500 * (trial % 5);
        auto bits = random_bits(rng, 1 + trial * 3);
        auto s = schedule_rz_ook(bits, p);
        const auto ones = std::count(bits.begin(), bits.end(), 1);
        CHECK(s.count(ActuationKind::Alloc) ==
              static_cast<std::size_t>(p.pulses_per_bit * ones));
        std::map<std::uint32_t, std::int64_t> alloc_at;
        for (const auto& e : s.events) {
            if (e.kind == ActuationKind::Alloc) alloc_at[e.handle] = e.t_us;
            if (e.kind == ActuationKind::Free) CHECK(e.t_us - alloc_at[e.handle] == p.t_h_us);
        }
        // Alloc and free strictly alternate.
        for (std::size_t i = 0; i < s.events.size(); ++i) {
            CHECK((s.events[i].kind == ActuationKind::Alloc) == (i % 2 == 0));
        }
        CHECK(s.duration_us ==
              static_cast<std::int64_t>(bits.size()) * p.pulses_per_bit * (p.t_h_us + p.t_l_us));
        auto w = ideal_waveform(s, 1000, 1000);
        CHECK(w.samples().back().used_bytes == 1000);
    }
}

TEST_CASE("schedule_nrz_delta examples") {
    auto p = ModulationParams::nrz_defaults();
    auto bits_of = [](std::uint8_t byte) {
        std::vector<std::uint8_t> bits;
        for (int i = 7; i >= 0; --i) bits.push_back((byte >> i) & 1);
        return bits;
    };
    SUBCASE("all zero packet") {
        auto s = schedule_nrz_delta(bits_of(0x00), p);
        CHECK(s.count(ActuationKind::Alloc) == 0);
        auto w = ideal_waveform(s, 20'000, 500);
        for (auto v : w.values()) CHECK(v == 500);
    }
    SUBCASE("0xAA staircase") {
        auto s = schedule_nrz_delta(bits_of(0xAA), p);
        std::vector<std::int64_t> alloc_slots;
        for (const auto& e : s.events) {
            if (e.kind == ActuationKind::Alloc) alloc_slots.push_back(e.t_us / p.t_p_us());
        }
        CHECK(alloc_slots == std::vector<std::int64_t>{0, 2, 4, 6});
        CHECK(level_at(s, 8 * p.t_p_us() - 1) == 4 * p.delta_bytes);
        CHECK(level_at(s, 8 * p.t_p_us()) == 0);
    }
    SUBCASE("0xFF monotone staircase") {
        auto s = schedule_nrz_delta(bits_of(0xFF), p);
        CHECK(s.count(ActuationKind::Alloc) == 8);
        std::int64_t prev = -1;
        for (int slot = 0; slot < 8; ++slot) {
            const auto level = level_at(s, slot * p.t_p_us());
            CHECK(level > prev);
            prev = level;
        }
    }
}

TEST_CASE("nrz-delta final level equals popcount times delta") {
    std::mt19937_64 rng(5);
    auto p = ModulationParams::nrz_defaults();
    for (int trial = 0; trial < 64; ++trial) {
        auto bits = random_bits(rng, 8);
        auto s = schedule_nrz_delta(bits, p);
        const auto ones = std::count(bits.begin(), bits.end(), 1);
        CHECK(level_at(s, 8 * p.t_p_us() - 1) == ones * p.delta_bytes);
        CHECK(level_at(s, s.duration_us) == 0);
    }
}

TEST_CASE("ideal_waveform") {
    SUBCASE("empty schedule is flat baseline") {
        Schedule s;
        auto w = ideal_waveform(s, 1000, 777, 50'000);
        CHECK(w.size() == 50);
        for (auto v : w.values()) CHECK(v == 777);
    }
    SUBCASE("single pulse steps up at 0 and down at t_h") {
        ModulationParams p;
        p.pulses_per_bit = 1;
        const std::uint8_t bits[] = {1};
        auto s = schedule_rz_ook(bits, p);
        auto w = ideal_waveform(s, 1000, 100);
        auto v = w.values();
        CHECK(v[0] == 100 + 20 * kMiB);
        CHECK(v[19] == 100 + 20 * kMiB);
        CHECK(v[20] == 100);
        CHECK(v[39] == 100);
    }
    SUBCASE("0xAA NRZ packet matches the cumulative-sum oracle") {
        auto p = ModulationParams::nrz_defaults();
        const std::uint8_t bits[] = {1, 0, 1, 0, 1, 0, 1, 0};
        auto s = schedule_nrz_delta(bits, p);
        auto w = ideal_waveform(s, 20'000, 1'000'000);
        for (const auto& sample : w.samples()) {
            CHECK(sample.used_bytes == 1'000'000 + oracle_level(s, sample.t_us));
        }
    }
    SUBCASE("random merged schedules match the oracle") {
        std::mt19937_64 rng(9);
        ModulationParams p;
        auto a = schedule_rz_ook(random_bits(rng, 12), p);
        auto b = random_phase_pulses(0, 800'000, 40'000, 3 * kMiB, 0.5, 17);
        auto m = merge(a, b);
        auto w = ideal_waveform(m, 1000, 0);
        for (const auto& sample : w.samples()) {
            CHECK(sample.used_bytes == oracle_level(m, sample.t_us));
        }
    }
}

TEST_CASE("random_phase_pulses") {
    auto s = random_phase_pulses(1000, 400'000, 40'000, kMiB, 0.5, 1);
    CHECK(s.count(ActuationKind::Alloc) == 10);
    CHECK(s == random_phase_pulses(1000, 400'000, 40'000, kMiB, 0.5, 1));
    CHECK_FALSE(s == random_phase_pulses(1000, 400'000, 40'000, kMiB, 0.5, 2));
    CHECK(level_at(s, s.duration_us) == 0);
    CHECK_THROWS_AS(random_phase_pulses(0, 10, 10, kMiB, 1.0, 1), ParameterError);
}

TEST_CASE("modulation params from config") {
    auto cfg = Config::parse("[modulation]\nscheme = nrz-delta\nt_h_us = 50000\n");
    auto p = ModulationParams::from_config(cfg);
    CHECK(p.scheme == Scheme::NrzDelta);
    CHECK(p.t_h_us == 50'000);
    CHECK(p.t_l_us == 100'000);
    CHECK_THROWS_AS(ModulationParams::from_config(Config::parse("[modulation]\npulses_per_bit=0\n")),
                    ParameterError);
}
