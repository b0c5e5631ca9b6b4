#pragma once

#include "memcovert/codec.hpp"
#include "memcovert/demod.hpp"
#include "memcovert/trace.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memcovert::metrics {

// What the receiver produced for one packet position.
struct ReceivedSlot {
    std::optional<codec::Packet> packet;  // empty: lost
    bool synced = true;
};

struct PacketRecord {
    std::size_t index = 0;
    codec::Nibble sent;
    std::optional<codec::Nibble> received;
    std::optional<codec::Packet> raw;
    bool corrected = false;
    bool uncorrectable = false;
    bool lost = false;
    int bit_errors = 0;
};

struct ChannelReport {
    std::size_t bits_sent = 0;
    std::size_t bits_errored = 0;
    std::size_t packets_sent = 0;
    std::size_t packets_errored = 0;
    double ber_pct = 0.0;
    double per_pct = 0.0;
    std::vector<PacketRecord> per_packet;
    // Framing-loss accounting.
    std::size_t lost_packets = 0;
    std::size_t extra_packets = 0;
};

// Places demodulated packets on the transmitter's packet grid: the first
// detected packet anchors slot 0 and the others land on
// round((start - anchor) / packet_samples). The first `skip` slots (the
// preamble) are dropped. Later duplicates of a slot and packets beyond
// `expected` are counted in `extra`.
std::vector<ReceivedSlot> align_packets(const demod::DemodResult& result, std::size_t packet_samples,
                                        std::size_t skip, std::size_t expected,
                                        std::size_t* extra = nullptr);

// Positional comparison of payload nibbles. A lost packet, or one whose
// header reads 0, counts all four payload bits as errored. Received slots
// beyond the sent length are reported as extra packets.
ChannelReport compute_report(std::span<const codec::Nibble> sent,
                             std::span<const ReceivedSlot> received);
// Every received nibble taken as a clean, synced packet.
ChannelReport compute_report(std::span<const codec::Nibble> sent,
                             std::span<const codec::Nibble> received);

// Sum of counts; per-packet records are concatenated with running indices.
ChannelReport merge_reports(std::span<const ChannelReport> reports);

// Deterministic key=value summary.
std::string format_report(const ChannelReport& report);
void write_packets_csv(const ChannelReport& report, std::ostream& out);

struct PlotData {
    std::vector<std::int64_t> t_us;
    std::vector<std::int64_t> value;
    // RZ-OOK: high-passed signal. NRZ-delta: median-smoothed step over one slot.
    std::vector<double> processed;
    std::string processed_name;
};

PlotData plot_data(const MemoryTrace& trace, const demod::DemodParams& params);
// CSV with columns t_us,used_bytes,<processed_name>.
void emit_plot_data(const MemoryTrace& trace, const demod::DemodParams& params,
                    const std::string& path);
void write_plot_csv(const PlotData& plot, std::ostream& out);

}  // namespace memcovert::metrics
