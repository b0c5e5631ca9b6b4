#pragma once

#include "memcovert/trace.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace memcovert {
class Config;
}

namespace memcovert::modulation {

inline constexpr std::int64_t kMiB = 1024 * 1024;

enum class Scheme { RzOok, NrzDelta };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct ModulationParams {
    Scheme scheme = Scheme::RzOok;
    std::int64_t t_h_us = 20'000;
    std::int64_t t_l_us = 20'000;
    int pulses_per_bit = 2;
    std::int64_t block_bytes = 20 * kMiB;
    std::int64_t delta_bytes = 40 * kMiB;
    std::int64_t delta_threshold_bytes = 25 * kMiB;
    // Idle slots between NRZ-delta packets so the end-of-packet release does
    // not land on the next header slot.
    int gap_slots = 1;

    // One pulse (RZ-OOK) or one bit slot (NRZ-delta).
    std::int64_t t_p_us() const noexcept { return t_h_us + t_l_us; }
    std::int64_t bit_duration_us() const noexcept;
    std::int64_t packet_duration_us() const noexcept;

    void validate() const;

    static ModulationParams rz_defaults() { return {}; }
    static ModulationParams nrz_defaults();
    // Reads keys from `section`, starting from the defaults of the configured scheme.
    static ModulationParams from_config(const Config& cfg, const std::string& section = "modulation");
};

enum class ActuationKind { Alloc, Free, Hold };

struct ActuationEvent {
    std::int64_t t_us = 0;
    ActuationKind kind = ActuationKind::Hold;
    std::int64_t bytes = 0;     // Alloc only
    std::uint32_t handle = 0;   // pairs a Free with its Alloc

    friend bool operator==(const ActuationEvent&, const ActuationEvent&) = default;
};

struct Schedule {
    std::vector<ActuationEvent> events;  // time-ordered
    std::int64_t duration_us = 0;

    std::size_t count(ActuationKind kind) const;
    friend bool operator==(const Schedule&, const Schedule&) = default;
};

Schedule schedule_rz_ook(std::span<const std::uint8_t> bits, const ModulationParams& params,
                         std::int64_t start_us = 0);
Schedule schedule_nrz_delta(std::span<const std::uint8_t> bits, const ModulationParams& params,
                            std::int64_t start_us = 0);
Schedule schedule_bits(std::span<const std::uint8_t> bits, const ModulationParams& params,
                       std::int64_t start_us = 0);

// Pulse train with one pulse per period, each delayed by an independent
// uniform phase in [0, period). Used by the jammer.
Schedule random_phase_pulses(std::int64_t start_us, std::int64_t duration_us,
                             std::int64_t period_us, std::int64_t block_bytes, double duty,
                             std::uint64_t seed);

// Events of both schedules, handles of `b` renumbered; duration is the max.
Schedule merge(const Schedule& a, const Schedule& b);

// Largest amount of memory held at any instant.
std::int64_t peak_live_bytes(const Schedule& schedule);

// Level above baseline at time t (events at exactly t are applied).
std::int64_t level_at(const Schedule& schedule, std::int64_t t_us);

// Baseline plus live allocations, sampled every period on [0, duration).
MemoryTrace ideal_waveform(const Schedule& schedule, std::int64_t sample_period_us,
                           std::int64_t baseline_bytes);
MemoryTrace ideal_waveform(const Schedule& schedule, std::int64_t sample_period_us,
                           std::int64_t baseline_bytes, std::int64_t duration_us);

}  // namespace memcovert::modulation
