#pragma once

#include "memcovert/codec.hpp"
#include "memcovert/modulation.hpp"
#include "memcovert/trace.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memcovert {
class Config;
}

namespace memcovert::demod {

struct SyncParams {
    double edge_min_bytes = 10.0 * modulation::kMiB;
    int search_stride = 1;
    // Samples over which a rise or fall may spread.
    int edge_span = 3;
};

struct DemodParams {
    modulation::Scheme scheme = modulation::Scheme::RzOok;
    double sample_rate_hz = 1000.0;
    double f_t_hz = 25.0;
    int window_samples = 80;  // N, one bit
    double threshold = 0.0;   // A_0; <= 0 means "calibrate from the preamble"
    double hp_cutoff_hz = 12.5;
    int hp_order = 5;
    SyncParams sync;

    int high_samples = 20;   // t_h
    int pulse_samples = 40;  // t_p
    int pulses_per_bit = 2;

    // Flywheel: after a sync, the next header is looked for within
    // +/- resync_tolerance of where it is expected. Packets without a
    // header hit are still sliced there; after more than max_missed_headers
    // in a row the trailing ones are dropped and a fresh search starts.
    int resync_tolerance = 10;
    int max_missed_headers = 2;

    // NRZ-delta.
    double delta_threshold_bytes = 25.0 * modulation::kMiB;
    int slot_samples = 10;
    int gap_slots = 1;
    int median_len = 5;

    int packet_samples() const noexcept;

    // Throws ParameterError on Nyquist or geometry violations.
    void validate() const;

    static DemodParams from_modulation(const modulation::ModulationParams& mod,
                                       std::int64_t sample_period_us);
    // Keys in `section` override from_modulation() defaults.
    static DemodParams from_config(const Config& cfg, const modulation::ModulationParams& mod,
                                   std::int64_t sample_period_us,
                                   const std::string& section = "demod");
};

struct BitDecision {
    std::size_t window_index = 0;
    std::size_t start_sample = 0;
    // Window amplitude at f_t (RZ-OOK) or level step (NRZ-delta).
    double amplitude_at_ft = 0.0;
    std::uint8_t bit = 0;
};

struct ReceivedPacket {
    std::size_t start_sample = 0;
    codec::Packet packet;
    // False when the flywheel placed the packet without a header hit.
    bool synced = true;
    std::vector<BitDecision> decisions;
};

struct DemodResult {
    std::vector<ReceivedPacket> packets;
    double threshold = 0.0;
    bool truncated = false;
    std::string diagnostic;

    std::vector<std::uint8_t> bits() const;
    std::vector<BitDecision> decisions() const;
    std::vector<codec::Packet> raw_packets() const;
};

// 1 iff amplitude >= A_0.
std::uint8_t classify_bit(double amplitude, double threshold);

// High-pass filter of the trace, started from the steady state of its first
// sample so that a constant offset produces no transient.
std::vector<double> highpass_trace(const MemoryTrace& trace, const DemodParams& params);

// First index >= from where a header pulse pattern starts. When `verify` is
// set the bit window starting there must also classify as 1.
std::optional<std::size_t> find_header(std::span<const double> filtered,
                                       const DemodParams& params, std::size_t from,
                                       std::optional<double> verify = std::nullopt);

std::vector<BitDecision> window_decisions(std::span<const double> filtered,
                                          const DemodParams& params, std::size_t start,
                                          std::size_t windows, double threshold);

// A_0 from a preamble of `packets` repetitions of 10101010 starting at
// `start`: midpoint of the mean one-slot and zero-slot amplitudes. Throws
// CalibrationError when the clusters are closer than two pooled standard
// deviations.
double calibrate_threshold(std::span<const double> filtered, std::size_t start,
                           const DemodParams& params, int packets = 1);
double calibrate_threshold(const MemoryTrace& trace, const DemodParams& params, int packets = 1);

// Full RZ-OOK receiver. With params.threshold <= 0 the first `preamble_packets`
// packets are used to calibrate A_0 (they are still returned).
DemodResult demodulate_rz(const MemoryTrace& trace, const DemodParams& params,
                          int preamble_packets = 0);

std::vector<double> median_filter(std::span<const double> values, int len);

// Per-sample step of the median-smoothed level over one slot, for plotting.
std::vector<double> delta_signal(std::span<const double> values, int slot_samples, int median_len);

DemodResult demodulate_nrz_delta(const MemoryTrace& trace, const DemodParams& params);

// Per-slot NRZ-delta steps for `slots` consecutive slots from `start`.
std::vector<BitDecision> nrz_slot_decisions(const MemoryTrace& trace, const DemodParams& params,
                                            std::size_t start, std::size_t slots);

// Share of slots of a signal-free trace whose step reaches delta, i.e. how
// often noise alone would read as a 1. Slots start at the first sample
// that has a full median window before it.
double false_rise_rate(const MemoryTrace& noise_only, const DemodParams& params);

DemodResult demodulate(const MemoryTrace& trace, const DemodParams& params,
                       int preamble_packets = 0);

}  // namespace memcovert::demod
