#include "memcovert/demod.hpp"

#include "memcovert/butterworth.hpp"
#include "memcovert/config.hpp"
#include "memcovert/error.hpp"

#include <algorithm>
#include <cmath>

namespace memcovert::demod {

using modulation::Scheme;

namespace {

int to_samples(std::int64_t us, std::int64_t period_us) {
    return static_cast<int>(std::llround(static_cast<double>(us) / static_cast<double>(period_us)));
}

double median_of(std::span<const double> values, std::ptrdiff_t begin, std::ptrdiff_t end) {
    begin = std::max<std::ptrdiff_t>(0, begin);
    end = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(values.size()), end);
    if (end <= begin) return values.empty() ? 0.0 : values[std::clamp<std::ptrdiff_t>(begin, 0, values.size() - 1)];
    std::vector<double> tmp(values.begin() + begin, values.begin() + end);
    const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    if (tmp.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(tmp.begin(), mid);
    return 0.5 * (lower + upper);
}

class RzGeometry {
public:
    RzGeometry(std::span<const double> x, const DemodParams& p)
        : x_(x),
          p_(p),
          tol_h_(std::max(1, static_cast<int>(std::lround(0.25 * p.high_samples)))) {}

    bool is_rise(std::size_t i) const {
        if (i == 0 || i >= x_.size()) return false;
        if (x_[i] - x_[i - 1] <= 0.0) return false;
        return best_step(i, +1.0) >= p_.sync.edge_min_bytes;
    }

    bool is_fall(std::size_t i) const {
        if (i == 0 || i >= x_.size()) return false;
        if (x_[i - 1] - x_[i] <= 0.0) return false;
        return best_step(i, -1.0) >= p_.sync.edge_min_bytes;
    }

    // Rise at i, then a fall t_h later, repeated pulses_per_bit times.
    bool pulse_pattern_at(std::size_t i) const {
        if (!is_rise(i)) return false;
        std::size_t rise = i;
        for (int pulse = 0; pulse < p_.pulses_per_bit; ++pulse) {
            if (pulse > 0) {
                const auto nominal = i + static_cast<std::size_t>(pulse * p_.pulse_samples);
                auto r = first_in(nominal - tol_h_, nominal + tol_h_, [this](std::size_t j) { return is_rise(j); });
                if (!r) return false;
                rise = *r;
            }
            const auto nominal_fall = rise + static_cast<std::size_t>(p_.high_samples);
            auto f = first_in(nominal_fall - tol_h_, nominal_fall + tol_h_,
                              [this](std::size_t j) { return is_fall(j); });
            if (!f) return false;
        }
        return true;
    }

    // A rise spread over several samples starts where its largest step is.
    std::size_t steepest_rise(std::size_t i) const {
        std::size_t best = i;
        for (int s = 1; s < p_.sync.edge_span && i + s < x_.size(); ++s) {
            if (x_[i + s] - x_[i + s - 1] > x_[best] - x_[best - 1]) best = i + s;
        }
        return best;
    }

    std::size_t lookahead() const {
        return static_cast<std::size_t>((p_.pulses_per_bit - 1) * p_.pulse_samples +
                                        p_.high_samples + tol_h_ + p_.sync.edge_span);
    }

private:
    double best_step(std::size_t i, double sign) const {
        double best = 0.0;
        for (int s = 0; s < std::max(1, p_.sync.edge_span); ++s) {
            if (i + s >= x_.size()) break;
            best = std::max(best, sign * (x_[i + s] - x_[i - 1]));
        }
        return best;
    }

    template <typename Pred>
    std::optional<std::size_t> first_in(std::size_t lo, std::size_t hi, Pred pred) const {
        for (std::size_t j = lo; j <= hi && j < x_.size(); ++j) {
            if (pred(j)) return j;
        }
        return std::nullopt;
    }

    std::span<const double> x_;
    const DemodParams& p_;
    int tol_h_;
};

bool header_window_ok(std::span<const double> filtered, const DemodParams& p, std::size_t start,
                      double threshold) {
    const auto n = static_cast<std::size_t>(p.window_samples);
    if (start + n > filtered.size()) return false;
    const double a = dsp::window_amplitude(filtered.subspan(start, n), p.f_t_hz, p.sample_rate_hz);
    return classify_bit(a, threshold) == 1;
}

// Nearest verified header to `expected` within the resync tolerance.
std::optional<std::size_t> resync_rz(std::span<const double> filtered, const DemodParams& p,
                                     const RzGeometry& geo, std::size_t expected,
                                     double threshold) {
    const auto tol = static_cast<std::size_t>(std::max(0, p.resync_tolerance));
    const std::size_t lo = expected > tol ? expected - tol : 0;
    std::optional<std::size_t> best;
    std::size_t best_dist = tol + 1;
    for (std::size_t i = lo; i <= expected + tol; ++i) {
        if (i + geo.lookahead() >= filtered.size()) break;
        if (!geo.pulse_pattern_at(i)) continue;
        const auto h = geo.steepest_rise(i);
        if (!header_window_ok(filtered, p, h, threshold)) continue;
        const auto dist = h > expected ? h - expected : expected - h;
        if (dist < best_dist) {
            best = h;
            best_dist = dist;
        }
    }
    return best;
}

// Collects packets placed by the flywheel until a header confirms them.
class PacketSink {
public:
    explicit PacketSink(DemodResult& out) : out_(out) {}

    void push(ReceivedPacket pkt, bool confirmed) {
        pending_.push_back(std::move(pkt));
        if (confirmed) flush();
    }
    void flush() {
        for (auto& pkt : pending_) out_.packets.push_back(std::move(pkt));
        pending_.clear();
    }
    // Discards unconfirmed packets; returns the start of the first one.
    std::optional<std::size_t> drop_pending() {
        if (pending_.empty()) return std::nullopt;
        const auto first = pending_.front().start_sample;
        pending_.clear();
        return first;
    }

private:
    DemodResult& out_;
    std::vector<ReceivedPacket> pending_;
};

codec::Packet packet_from_decisions(const std::vector<BitDecision>& d) {
    std::uint8_t v = 0;
    for (const auto& b : d) v = static_cast<std::uint8_t>((v << 1) | b.bit);
    return codec::Packet{v};
}

}  // namespace

int DemodParams::packet_samples() const noexcept {
    return scheme == Scheme::RzOok ? 8 * window_samples : (8 + gap_slots) * slot_samples;
}

void DemodParams::validate() const {
    if (!(sample_rate_hz > 0.0)) throw ParameterError("sample rate must be positive");
    if (scheme == Scheme::RzOok) {
        if (sample_rate_hz < 2.0 * f_t_hz) {
            throw ParameterError("sample rate must be at least twice the channel frequency");
        }
        if (window_samples < 2) throw ParameterError("bit window needs at least two samples");
        if (high_samples < 1 || pulse_samples <= high_samples) {
            throw ParameterError("pulse geometry must satisfy 0 < t_h < t_p in samples");
        }
        if (!(hp_cutoff_hz > 0.0) || hp_cutoff_hz >= sample_rate_hz / 2.0) {
            throw ParameterError("high-pass cutoff must lie below Nyquist");
        }
        if (hp_order < 1) throw ParameterError("high-pass order must be >= 1");
    } else {
        if (slot_samples < median_len || median_len < 1) {
            throw ParameterError("NRZ slot must hold at least median_len samples");
        }
        if (!(delta_threshold_bytes > 0.0)) throw ParameterError("delta threshold must be positive");
    }
    if (sync.search_stride < 1) throw ParameterError("search_stride must be >= 1");
}

DemodParams DemodParams::from_modulation(const modulation::ModulationParams& mod,
                                         std::int64_t sample_period_us) {
    mod.validate();
    if (sample_period_us <= 0) throw ParameterError("sample period must be positive");
    DemodParams p;
    p.scheme = mod.scheme;
    p.sample_rate_hz = 1e6 / static_cast<double>(sample_period_us);
    p.f_t_hz = 1e6 / static_cast<double>(mod.t_p_us());
    p.hp_cutoff_hz = p.f_t_hz / 2.0;
    p.window_samples = to_samples(mod.bit_duration_us(), sample_period_us);
    p.high_samples = to_samples(mod.t_h_us, sample_period_us);
    p.pulse_samples = to_samples(mod.t_p_us(), sample_period_us);
    p.pulses_per_bit = mod.pulses_per_bit;
    p.resync_tolerance = std::max(1, p.high_samples / 2);
    p.sync.edge_min_bytes = static_cast<double>(mod.block_bytes) / 2.0;
    p.delta_threshold_bytes = static_cast<double>(mod.delta_threshold_bytes);
    p.slot_samples = to_samples(mod.t_p_us(), sample_period_us);
    p.gap_slots = mod.gap_slots;
    if (mod.scheme == Scheme::NrzDelta) {
        p.sync.edge_min_bytes = p.delta_threshold_bytes;
        p.resync_tolerance = std::max(1, p.slot_samples / 2);
    }
    return p;
}

DemodParams DemodParams::from_config(const Config& cfg, const modulation::ModulationParams& mod,
                                     std::int64_t sample_period_us, const std::string& section) {
    DemodParams p = from_modulation(mod, sample_period_us);
    p.f_t_hz = cfg.get_double(section, "f_t_hz", p.f_t_hz);
    p.window_samples = static_cast<int>(cfg.get_int(section, "window_samples", p.window_samples));
    p.threshold = cfg.get_double(section, "threshold", p.threshold);
    p.hp_cutoff_hz = cfg.get_double(section, "hp_cutoff_hz", p.f_t_hz / 2.0);
    p.hp_order = static_cast<int>(cfg.get_int(section, "hp_order", p.hp_order));
    p.sync.edge_min_bytes = cfg.get_double(section, "edge_min_bytes", p.sync.edge_min_bytes);
    p.sync.search_stride = static_cast<int>(cfg.get_int(section, "search_stride", p.sync.search_stride));
    p.sync.edge_span = static_cast<int>(cfg.get_int(section, "edge_span", p.sync.edge_span));
    p.resync_tolerance = static_cast<int>(cfg.get_int(section, "resync_tolerance", p.resync_tolerance));
    p.max_missed_headers =
        static_cast<int>(cfg.get_int(section, "max_missed_headers", p.max_missed_headers));
    p.median_len = static_cast<int>(cfg.get_int(section, "median_len", p.median_len));
    p.validate();
    return p;
}

std::vector<std::uint8_t> DemodResult::bits() const {
    std::vector<std::uint8_t> out;
    for (const auto& pkt : packets) {
        for (int i = 0; i < 8; ++i) out.push_back(pkt.packet.bit(i) ? 1 : 0);
    }
    return out;
}

std::vector<BitDecision> DemodResult::decisions() const {
    std::vector<BitDecision> out;
    for (const auto& pkt : packets) out.insert(out.end(), pkt.decisions.begin(), pkt.decisions.end());
    return out;
}

std::vector<codec::Packet> DemodResult::raw_packets() const {
    std::vector<codec::Packet> out;
    for (const auto& pkt : packets) out.push_back(pkt.packet);
    return out;
}

std::uint8_t classify_bit(double amplitude, double threshold) {
    return amplitude >= threshold ? 1 : 0;
}

std::vector<double> highpass_trace(const MemoryTrace& trace, const DemodParams& params) {
    if (trace.empty()) return {};
    const auto& s = trace.samples();
    const std::int64_t origin = s.front().used_bytes;
    std::vector<double> centred;
    centred.reserve(s.size());
    // Integer subtraction keeps DC offsets exact.
    for (const auto& x : s) centred.push_back(static_cast<double>(x.used_bytes - origin));
    return dsp::butterworth_highpass(centred, params.hp_cutoff_hz, params.hp_order,
                                     params.sample_rate_hz);
}

std::optional<std::size_t> find_header(std::span<const double> filtered, const DemodParams& params,
                                       std::size_t from, std::optional<double> verify) {
    RzGeometry geo(filtered, params);
    const auto stride = static_cast<std::size_t>(std::max(1, params.sync.search_stride));
    for (std::size_t i = std::max<std::size_t>(from, 1); i + geo.lookahead() < filtered.size();
         i += stride) {
        if (!geo.pulse_pattern_at(i)) continue;
        const auto start = geo.steepest_rise(i);
        if (verify && !header_window_ok(filtered, params, start, *verify)) continue;
        return start;
    }
    return std::nullopt;
}

std::vector<BitDecision> window_decisions(std::span<const double> filtered,
                                          const DemodParams& params, std::size_t start,
                                          std::size_t windows, double threshold) {
    const auto n = static_cast<std::size_t>(params.window_samples);
    std::vector<BitDecision> out;
    for (std::size_t w = 0; w < windows; ++w) {
        const std::size_t begin = start + w * n;
        if (begin + n > filtered.size()) break;
        BitDecision d;
        d.window_index = w;
        d.start_sample = begin;
        d.amplitude_at_ft =
            dsp::window_amplitude(filtered.subspan(begin, n), params.f_t_hz, params.sample_rate_hz);
        d.bit = classify_bit(d.amplitude_at_ft, threshold);
        out.push_back(d);
    }
    return out;
}

namespace {

struct Clusters {
    double mean1 = 0.0;
    double mean0 = 0.0;
    double pooled_sd = 0.0;

    double separation() const { return mean1 - mean0; }
    // Separation in units of the spread, kept finite for noiseless input.
    double quality() const { return separation() / (pooled_sd + 0.01 * std::abs(separation()) + 1e-12); }
};

Clusters preamble_clusters(std::span<const double> filtered, std::size_t start,
                           const DemodParams& params, int packets) {
    const auto windows = static_cast<std::size_t>(8 * std::max(1, packets));
    if (start + windows * static_cast<std::size_t>(params.window_samples) > filtered.size()) {
        throw CalibrationError("trace too short for the calibration preamble");
    }
    auto d = window_decisions(filtered, params, start, windows, 1.0);
    double sum1 = 0, sum0 = 0, sq1 = 0, sq0 = 0;
    std::size_t n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double a = d[i].amplitude_at_ft;
        if (i % 2 == 0) {
            sum1 += a;
            sq1 += a * a;
            ++n1;
        } else {
            sum0 += a;
            sq0 += a * a;
            ++n0;
        }
    }
    Clusters c;
    c.mean1 = sum1 / static_cast<double>(n1);
    c.mean0 = sum0 / static_cast<double>(n0);
    const double var1 = std::max(0.0, sq1 / static_cast<double>(n1) - c.mean1 * c.mean1);
    const double var0 = std::max(0.0, sq0 / static_cast<double>(n0) - c.mean0 * c.mean0);
    c.pooled_sd = std::sqrt(0.5 * (var1 + var0));
    if (!(c.separation() > 2.0 * c.pooled_sd)) {
        throw CalibrationError("preamble clusters not separated (separation " +
                               std::to_string(c.separation()) + ", pooled sd " +
                               std::to_string(c.pooled_sd) + ")");
    }
    return c;
}

}  // namespace

double calibrate_threshold(std::span<const double> filtered, std::size_t start,
                           const DemodParams& params, int packets) {
    const auto c = preamble_clusters(filtered, start, params, packets);
    return 0.5 * (c.mean1 + c.mean0);
}

namespace {

// Noise can mimic a header in time domain only; candidates whose following
// windows do not look like a preamble are skipped. A false header shortly
// before the real one may still pass, so every candidate within one packet
// of the first success is scored. A later candidate only replaces the
// current choice when it is clearly better separated, so that on clean
// input, where every alignment inside the preamble scores alike, the
// earliest one is kept.
std::pair<std::size_t, double> locate_and_calibrate(std::span<const double> filtered,
                                                    const DemodParams& params, int packets) {
    constexpr int kMaxFailures = 64;
    constexpr int kMaxScored = 512;
    constexpr double kClearlyBetter = 1.5;
    std::size_t from = 0;
    std::string last_reason = "no preamble header found";
    std::optional<std::size_t> best_start;
    std::optional<std::size_t> window_end;
    Clusters best;
    int failures = 0, scored = 0;
    while (failures < kMaxFailures && scored < kMaxScored) {
        const auto start = find_header(filtered, params, from);
        if (!start || (window_end && *start > *window_end)) break;
        try {
            const auto c = preamble_clusters(filtered, *start, params, packets);
            ++scored;
            if (!best_start || c.quality() > kClearlyBetter * best.quality()) {
                best = c;
                best_start = *start;
            }
            if (!window_end) window_end = *start + static_cast<std::size_t>(params.packet_samples());
        } catch (const CalibrationError& e) {
            last_reason = e.what();
            if (!window_end) ++failures;
        }
        from = *start + 1;
    }
    if (!best_start) throw CalibrationError(last_reason);
    return {*best_start, 0.5 * (best.mean1 + best.mean0)};
}

}  // namespace

double calibrate_threshold(const MemoryTrace& trace, const DemodParams& params, int packets) {
    const auto filtered = highpass_trace(trace, params);
    return locate_and_calibrate(filtered, params, packets).second;
}

DemodResult demodulate_rz(const MemoryTrace& trace, const DemodParams& params,
                          int preamble_packets) {
    params.validate();
    DemodResult result;
    const auto filtered = highpass_trace(trace, params);
    const std::span<const double> x(filtered);
    const RzGeometry geo(x, params);
    const auto packet_len = static_cast<std::size_t>(params.packet_samples());

    double threshold = params.threshold;
    std::size_t pos = 0;
    if (threshold <= 0.0) {
        const auto [start, a0] = locate_and_calibrate(x, params, std::max(1, preamble_packets));
        threshold = a0;
        pos = start;
    }
    result.threshold = threshold;

    auto keep_partial = [&](std::size_t start) {
        result.truncated = true;
        result.diagnostic = "header at sample " + std::to_string(start) +
                            " but the packet extends past the end of the trace";
        ReceivedPacket partial;
        partial.start_sample = start;
        partial.decisions = window_decisions(x, params, start, 8, threshold);
        partial.packet = packet_from_decisions(partial.decisions);
        // Missing windows read as zero bits.
        partial.packet.bits = static_cast<std::uint8_t>(partial.packet.bits << (8 - partial.decisions.size()));
        result.packets.push_back(std::move(partial));
    };

    PacketSink sink(result);
    std::size_t expected = 0;
    bool flywheel = false;  // expected holds the next packet position
    int missed = 0;
    while (true) {
        std::size_t start = 0;
        bool synced = true;
        if (flywheel) {
            if (expected + packet_len > x.size()) {
                sink.drop_pending();
                const auto tol = static_cast<std::size_t>(params.resync_tolerance);
                const std::size_t lo = expected > tol ? expected - tol : 0;
                const auto hit = find_header(x, params, lo);
                if (hit && *hit <= expected + tol &&
                    *hit + static_cast<std::size_t>(params.window_samples) <= x.size()) {
                    keep_partial(*hit);
                }
                break;
            }
            if (auto hit = resync_rz(x, params, geo, expected, threshold)) {
                start = *hit;
                missed = 0;
            } else {
                start = expected;
                synced = false;
                ++missed;
            }
        } else {
            auto hit = find_header(x, params, pos, threshold);
            if (!hit) break;
            start = *hit;
            if (start + packet_len > x.size()) {
                keep_partial(start);
                break;
            }
        }

        ReceivedPacket pkt;
        pkt.start_sample = start;
        pkt.synced = synced;
        pkt.decisions = window_decisions(x, params, start, 8, threshold);
        pkt.packet = packet_from_decisions(pkt.decisions);
        const bool confirmed = synced || pkt.packet.header();
        if (!synced && !confirmed && missed > params.max_missed_headers) {
            const auto first = sink.drop_pending();
            pos = (first ? *first : start) + 1;
            flywheel = false;
            missed = 0;
            continue;
        }
        sink.push(std::move(pkt), confirmed);
        if (confirmed) missed = 0;
        expected = start + packet_len;
        flywheel = true;
    }
    return result;
}

std::vector<double> median_filter(std::span<const double> values, int len) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto end = static_cast<std::ptrdiff_t>(i) + 1;
        out[i] = median_of(values, end - len, end);
    }
    return out;
}

std::vector<double> delta_signal(std::span<const double> values, int slot_samples, int median_len) {
    const auto smooth = median_filter(values, median_len);
    std::vector<double> out(values.size(), 0.0);
    const auto n = static_cast<std::size_t>(slot_samples);
    for (std::size_t i = n; i < values.size(); ++i) out[i] = smooth[i] - smooth[i - n];
    return out;
}

namespace {

class NrzReader {
public:
    NrzReader(std::span<const double> x, const DemodParams& p) : x_(x), p_(p) {}

    double level_before(std::ptrdiff_t s) const { return median_of(x_, s - p_.median_len, s); }

    double slot_delta(std::size_t slot_start) const {
        const auto s = static_cast<std::ptrdiff_t>(slot_start);
        const auto end = s + p_.slot_samples;
        return median_of(x_, end - p_.median_len, end) - level_before(s);
    }

    double rise_score(std::size_t i) const {
        const auto s = static_cast<std::ptrdiff_t>(i);
        return median_of(x_, s, s + p_.median_len) - level_before(s);
    }

    // Centres of runs of indices in [lo, hi] whose rise score reaches delta.
    std::vector<std::size_t> rise_centres(std::size_t lo, std::size_t hi) const {
        std::vector<std::size_t> out;
        std::optional<std::size_t> run_start;
        for (std::size_t i = std::max<std::size_t>(lo, 1); i <= hi + 1; ++i) {
            const bool on = i <= hi && i + p_.median_len <= x_.size() &&
                            rise_score(i) >= p_.delta_threshold_bytes;
            if (on && !run_start) run_start = i;
            if (!on && run_start) {
                out.push_back((*run_start + i - 1) / 2);
                run_start.reset();
            }
        }
        return out;
    }

    std::vector<BitDecision> decide(std::size_t start, int slots = 8) const {
        std::vector<BitDecision> out;
        for (int b = 0; b < slots; ++b) {
            BitDecision d;
            d.window_index = static_cast<std::size_t>(b);
            d.start_sample = start + static_cast<std::size_t>(b * p_.slot_samples);
            d.amplitude_at_ft = slot_delta(d.start_sample);
            d.bit = d.amplitude_at_ft >= p_.delta_threshold_bytes ? 1 : 0;
            out.push_back(d);
        }
        return out;
    }

private:
    std::span<const double> x_;
    const DemodParams& p_;
};

}  // namespace

DemodResult demodulate_nrz_delta(const MemoryTrace& trace, const DemodParams& params) {
    params.validate();
    DemodResult result;
    result.threshold = params.delta_threshold_bytes;
    const auto values = trace.values_as_double();
    const std::span<const double> x(values);
    const NrzReader reader(x, params);
    const auto slot = static_cast<std::size_t>(params.slot_samples);
    const auto body = 8 * slot;
    const auto packet_len = static_cast<std::size_t>(params.packet_samples());
    const auto tol = static_cast<std::size_t>(std::max(1, params.resync_tolerance));

    PacketSink sink(result);
    std::optional<std::size_t> expected;
    std::size_t pos = 0;
    int missed = 0;
    while (true) {
        std::size_t start = 0;
        bool synced = true;
        if (expected) {
            if (*expected + body > x.size()) {
                sink.drop_pending();
                const std::size_t lo = *expected > tol ? *expected - tol : 0;
                const auto rises = reader.rise_centres(lo, std::min(x.size() - 1, *expected + tol));
                if (!rises.empty()) {
                    result.truncated = true;
                    result.diagnostic = "header at sample " + std::to_string(rises.front()) +
                                        " but the packet extends past the end of the trace";
                }
                break;
            }
            std::optional<std::size_t> best;
            const std::size_t lo = *expected > tol ? *expected - tol : 0;
            for (auto c : reader.rise_centres(lo, *expected + tol)) {
                if (reader.slot_delta(c) < params.delta_threshold_bytes) continue;
                const auto dist = c > *expected ? c - *expected : *expected - c;
                if (!best || dist < (*best > *expected ? *best - *expected : *expected - *best)) best = c;
            }
            if (best) {
                start = *best;
                missed = 0;
            } else {
                start = *expected;
                synced = false;
                ++missed;
            }
        } else {
            std::optional<std::size_t> hit;
            std::size_t lo = std::max<std::size_t>(pos, 1);
            // Scan in chunks so long idle stretches stay cheap.
            while (!hit && lo + params.median_len < x.size()) {
                const std::size_t hi = std::min(x.size() - 1, lo + 4 * slot);
                for (auto c : reader.rise_centres(lo, hi)) {
                    if (reader.slot_delta(c) >= params.delta_threshold_bytes) {
                        hit = c;
                        break;
                    }
                }
                lo = hi + 1;
            }
            if (!hit) break;
            start = *hit;
            if (start + body > x.size()) {
                result.truncated = true;
                result.diagnostic = "header at sample " + std::to_string(start) +
                                    " but the packet extends past the end of the trace";
                break;
            }
        }

        ReceivedPacket pkt;
        pkt.start_sample = start;
        pkt.synced = synced;
        pkt.decisions = reader.decide(start);
        pkt.packet = packet_from_decisions(pkt.decisions);
        const bool confirmed = synced || pkt.packet.header();
        if (!synced && !confirmed && missed > params.max_missed_headers) {
            const auto first = sink.drop_pending();
            pos = (first ? *first : start) + 1;
            expected.reset();
            missed = 0;
            continue;
        }
        sink.push(std::move(pkt), confirmed);
        if (confirmed) missed = 0;
        expected = start + packet_len;
    }
    return result;
}

std::vector<BitDecision> nrz_slot_decisions(const MemoryTrace& trace, const DemodParams& params,
                                            std::size_t start, std::size_t slots) {
    const auto values = trace.values_as_double();
    const auto usable = values.size() > start ? (values.size() - start) / static_cast<std::size_t>(params.slot_samples) : 0;
    return NrzReader(values, params).decide(start, static_cast<int>(std::min(slots, usable)));
}

double false_rise_rate(const MemoryTrace& noise_only, const DemodParams& params) {
    const auto start = static_cast<std::size_t>(params.median_len);
    const auto decisions = nrz_slot_decisions(noise_only, params, start, noise_only.size());
    if (decisions.empty()) throw InvalidInput("trace shorter than one slot");
    std::size_t ones = 0;
    for (const auto& d : decisions) ones += d.bit;
    return static_cast<double>(ones) / static_cast<double>(decisions.size());
}

DemodResult demodulate(const MemoryTrace& trace, const DemodParams& params, int preamble_packets) {
    return params.scheme == Scheme::RzOok ? demodulate_rz(trace, params, preamble_packets)
                                          : demodulate_nrz_delta(trace, params);
}

}  // namespace memcovert::demod
