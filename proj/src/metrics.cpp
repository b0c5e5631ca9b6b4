#include "memcovert/metrics.hpp"

#include "memcovert/error.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace memcovert::metrics {

namespace {

double pct(std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : 100.0 * static_cast<double>(a) / static_cast<double>(b);
}

void finish(ChannelReport& r) {
    r.ber_pct = pct(r.bits_errored, r.bits_sent);
    r.per_pct = pct(r.packets_errored, r.packets_sent);
}

std::string nibble_bits(codec::Nibble n) {
    std::string s(4, '0');
    for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = ((n.value() >> (3 - i)) & 1) ? '1' : '0';
    return s;
}

}  // namespace

std::vector<ReceivedSlot> align_packets(const demod::DemodResult& result, std::size_t packet_samples,
                                        std::size_t skip, std::size_t expected, std::size_t* extra) {
    if (packet_samples == 0) throw ParameterError("packet length must be positive");
    std::vector<ReceivedSlot> slots(expected);
    std::vector<bool> filled(expected, false);
    std::size_t surplus = 0;
    if (!result.packets.empty()) {
        const auto anchor = static_cast<double>(result.packets.front().start_sample);
        for (const auto& pkt : result.packets) {
            const double offset = (static_cast<double>(pkt.start_sample) - anchor) /
                                  static_cast<double>(packet_samples);
            const auto slot = static_cast<std::size_t>(std::llround(std::max(0.0, offset)));
            if (slot < skip) continue;
            const auto i = slot - skip;
            if (i >= expected || filled[i]) {
                ++surplus;
                continue;
            }
            filled[i] = true;
            slots[i] = ReceivedSlot{pkt.packet, pkt.synced};
        }
    }
    if (extra) *extra = surplus;
    return slots;
}

ChannelReport compute_report(std::span<const codec::Nibble> sent, std::span<const ReceivedSlot> received) {
    ChannelReport r;
    r.packets_sent = sent.size();
    r.bits_sent = 4 * sent.size();
    for (std::size_t i = 0; i < sent.size(); ++i) {
        PacketRecord rec;
        rec.index = i;
        rec.sent = sent[i];
        const ReceivedSlot* slot = i < received.size() ? &received[i] : nullptr;
        if (!slot || !slot->packet) {
            rec.lost = true;
            rec.bit_errors = 4;
            ++r.lost_packets;
        } else {
            rec.raw = *slot->packet;
            const auto out = codec::hamming74_decode(slot->packet->codeword());
            rec.received = out.nibble;
            rec.corrected = out.corrected;
            rec.uncorrectable = !slot->packet->header() || out.uncorrectable;
            rec.bit_errors = rec.uncorrectable
                                 ? 4
                                 : std::popcount(static_cast<unsigned>(out.nibble.value() ^ sent[i].value()));
        }
        r.bits_errored += static_cast<std::size_t>(rec.bit_errors);
        r.packets_errored += rec.bit_errors > 0 ? 1 : 0;
        r.per_packet.push_back(rec);
    }
    if (received.size() > sent.size()) {
        for (std::size_t i = sent.size(); i < received.size(); ++i) r.extra_packets += received[i].packet ? 1 : 0;
    }
    finish(r);
    return r;
}

ChannelReport compute_report(std::span<const codec::Nibble> sent, std::span<const codec::Nibble> received) {
    std::vector<ReceivedSlot> slots;
    slots.reserve(received.size());
    for (auto n : received) slots.push_back({codec::make_packet(n), true});
    return compute_report(sent, slots);
}

ChannelReport merge_reports(std::span<const ChannelReport> reports) {
    ChannelReport total;
    for (const auto& r : reports) {
        total.bits_sent += r.bits_sent;
        total.bits_errored += r.bits_errored;
        total.packets_sent += r.packets_sent;
        total.packets_errored += r.packets_errored;
        total.lost_packets += r.lost_packets;
        total.extra_packets += r.extra_packets;
        for (auto rec : r.per_packet) {
            rec.index = total.per_packet.size();
            total.per_packet.push_back(rec);
        }
    }
    finish(total);
    return total;
}

std::string format_report(const ChannelReport& r) {
    std::size_t corrected = 0, uncorrectable = 0;
    for (const auto& p : r.per_packet) {
        corrected += p.corrected;
        uncorrectable += p.uncorrectable;
    }
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "bits_sent=%zu\nbits_errored=%zu\nber_pct=%.4f\npackets_sent=%zu\n"
                  "packets_errored=%zu\nper_pct=%.4f\ncorrected_packets=%zu\n"
                  "uncorrectable_packets=%zu\nlost_packets=%zu\nextra_packets=%zu\n",
                  r.bits_sent, r.bits_errored, r.ber_pct, r.packets_sent, r.packets_errored, r.per_pct,
                  corrected, uncorrectable, r.lost_packets, r.extra_packets);
    return buf;
}

void write_packets_csv(const ChannelReport& r, std::ostream& out) {
    out << "index,sent_bits,received_bits,raw_packet,corrected,uncorrectable,lost,bit_errors\n";
    for (const auto& p : r.per_packet) {
        out << p.index << ',' << nibble_bits(p.sent) << ',' << (p.received ? nibble_bits(*p.received) : "")
            << ',' << (p.raw ? p.raw->to_string() : "") << ',' << p.corrected << ',' << p.uncorrectable
            << ',' << p.lost << ',' << p.bit_errors << '\n';
    }
}

PlotData plot_data(const MemoryTrace& trace, const demod::DemodParams& params) {
    PlotData plot;
    for (const auto& s : trace.samples()) {
        plot.t_us.push_back(s.t_us);
        plot.value.push_back(s.used_bytes);
    }
    if (params.scheme == modulation::Scheme::RzOok) {
        plot.processed = demod::highpass_trace(trace, params);
        plot.processed_name = "highpass";
    } else {
        plot.processed = demod::delta_signal(trace.values_as_double(), params.slot_samples, params.median_len);
        plot.processed_name = "delta";
    }
    return plot;
}

void write_plot_csv(const PlotData& plot, std::ostream& out) {
    out << "t_us,used_bytes," << plot.processed_name << '\n';
    char buf[48];
    for (std::size_t i = 0; i < plot.t_us.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.3f", plot.processed[i]);
        out << plot.t_us[i] << ',' << plot.value[i] << ',' << buf << '\n';
    }
}

void emit_plot_data(const MemoryTrace& trace, const demod::DemodParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write plot data " + path);
    write_plot_csv(plot_data(trace, params), out);
}

}  // namespace memcovert::metrics
