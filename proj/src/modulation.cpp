#include "memcovert/modulation.hpp"

#include "memcovert/config.hpp"
#include "memcovert/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace memcovert::modulation {

std::string to_string(Scheme s) { return s == Scheme::RzOok ? "rz-ook" : "nrz-delta"; }

Scheme scheme_from_string(const std::string& s) {
    if (s == "rz-ook" || s == "RZ-OOK" || s == "rz") return Scheme::RzOok;
    if (s == "nrz-delta" || s == "NRZ-delta" || s == "nrz") return Scheme::NrzDelta;
    throw ParameterError("unknown modulation scheme: " + s);
}

ModulationParams ModulationParams::nrz_defaults() {
    ModulationParams p;
    p.scheme = Scheme::NrzDelta;
    p.t_h_us = 100'000;
    p.t_l_us = 100'000;
    p.pulses_per_bit = 1;
    return p;
}

std::int64_t ModulationParams::bit_duration_us() const noexcept {
    return scheme == Scheme::RzOok ? pulses_per_bit * t_p_us() : t_p_us();
}

std::int64_t ModulationParams::packet_duration_us() const noexcept {
    return scheme == Scheme::RzOok ? 8 * bit_duration_us() : (8 + gap_slots) * t_p_us();
}

void ModulationParams::validate() const {
    if (t_h_us <= 0 || t_l_us <= 0) throw ParameterError("t_h_us and t_l_us must be positive");
    if (pulses_per_bit < 1) throw ParameterError("pulses_per_bit must be >= 1");
    if (block_bytes <= 0) throw ParameterError("block_bytes must be positive");
    if (delta_bytes <= 0 || delta_threshold_bytes <= 0) {
        throw ParameterError("delta_bytes and delta_threshold_bytes must be positive");
    }
    if (gap_slots < 0) throw ParameterError("gap_slots must be >= 0");
}

ModulationParams ModulationParams::from_config(const Config& cfg, const std::string& section) {
    const Scheme scheme = scheme_from_string(cfg.get_string(section, "scheme", "rz-ook"));
    ModulationParams p = scheme == Scheme::RzOok ? rz_defaults() : nrz_defaults();
    p.t_h_us = cfg.get_int(section, "t_h_us", p.t_h_us);
    p.t_l_us = cfg.get_int(section, "t_l_us", p.t_l_us);
    p.pulses_per_bit = static_cast<int>(cfg.get_int(section, "pulses_per_bit", p.pulses_per_bit));
    p.block_bytes = cfg.get_int(section, "block_bytes", p.block_bytes);
    p.delta_bytes = cfg.get_int(section, "delta_bytes", p.delta_bytes);
    p.delta_threshold_bytes =
        cfg.get_int(section, "delta_threshold_bytes", p.delta_threshold_bytes);
    p.gap_slots = static_cast<int>(cfg.get_int(section, "gap_slots", p.gap_slots));
    // MiB spellings, for hand-written scenario files.
    const auto mib = [&](const char* key, std::int64_t& field) {
        if (cfg.has(section, key)) field = std::llround(cfg.get_double(section, key, 0.0) * kMiB);
    };
    mib("block_mib", p.block_bytes);
    mib("delta_mib", p.delta_bytes);
    mib("delta_threshold_mib", p.delta_threshold_bytes);
    p.validate();
    return p;
}

std::size_t Schedule::count(ActuationKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        events.begin(), events.end(), [kind](const ActuationEvent& e) { return e.kind == kind; }));
}

Schedule schedule_rz_ook(std::span<const std::uint8_t> bits, const ModulationParams& params,
                         std::int64_t start_us) {
    params.validate();
    if (params.scheme != Scheme::RzOok) throw ParameterError("schedule_rz_ook needs RZ-OOK params");
    Schedule s;
    const std::int64_t tp = params.t_p_us();
    std::uint32_t handle = 0;
    std::int64_t t = start_us;
    for (auto bit : bits) {
        for (int i = 0; i < params.pulses_per_bit; ++i) {
            if (bit) {
                s.events.push_back({t, ActuationKind::Alloc, params.block_bytes, handle});
                s.events.push_back({t + params.t_h_us, ActuationKind::Free, 0, handle});
                ++handle;
            }
            t += tp;
        }
    }
    s.duration_us = t;
    return s;
}

Schedule schedule_nrz_delta(std::span<const std::uint8_t> bits, const ModulationParams& params,
                            std::int64_t start_us) {
    params.validate();
    if (params.scheme != Scheme::NrzDelta) {
        throw ParameterError("schedule_nrz_delta needs NRZ-delta params");
    }
    Schedule s;
    const std::int64_t slot = params.t_p_us();
    std::uint32_t handle = 0;
    std::int64_t t = start_us;
    std::vector<std::uint32_t> live;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) {
            s.events.push_back({t, ActuationKind::Alloc, params.delta_bytes, handle});
            live.push_back(handle++);
        } else {
            s.events.push_back({t, ActuationKind::Hold, 0, 0});
        }
        t += slot;
        const bool packet_end = (i % 8 == 7) || i + 1 == bits.size();
        if (packet_end) {
            for (auto h : live) s.events.push_back({t, ActuationKind::Free, 0, h});
            live.clear();
            t += params.gap_slots * slot;
        }
    }
    s.duration_us = t;
    return s;
}

Schedule schedule_bits(std::span<const std::uint8_t> bits, const ModulationParams& params,
                       std::int64_t start_us) {
    return params.scheme == Scheme::RzOok ? schedule_rz_ook(bits, params, start_us)
                                          : schedule_nrz_delta(bits, params, start_us);
}

Schedule random_phase_pulses(std::int64_t start_us, std::int64_t duration_us,
                             std::int64_t period_us, std::int64_t block_bytes, double duty,
                             std::uint64_t seed) {
    if (period_us <= 0) throw ParameterError("jammer period must be positive");
    if (!(duty > 0.0 && duty < 1.0)) throw ParameterError("jammer duty must be in (0, 1)");
    if (block_bytes <= 0) throw ParameterError("jammer block must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> phase(0, period_us - 1);
    const auto high_us = std::max<std::int64_t>(1, static_cast<std::int64_t>(duty * period_us));
    Schedule s;
    std::uint32_t handle = 0;
    for (std::int64_t t = start_us; t < start_us + duration_us; t += period_us) {
        const std::int64_t on = t + phase(rng);
        s.events.push_back({on, ActuationKind::Alloc, block_bytes, handle});
        s.events.push_back({on + high_us, ActuationKind::Free, 0, handle});
        ++handle;
    }
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const auto& a, const auto& b) { return a.t_us < b.t_us; });
    s.duration_us = start_us + duration_us + period_us + high_us;
    return s;
}

Schedule merge(const Schedule& a, const Schedule& b) {
    std::uint32_t offset = 0;
    for (const auto& e : a.events) offset = std::max(offset, e.handle + 1);
    Schedule out;
    out.events = a.events;
    for (auto e : b.events) {
        e.handle += offset;
        out.events.push_back(e);
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const auto& x, const auto& y) { return x.t_us < y.t_us; });
    out.duration_us = std::max(a.duration_us, b.duration_us);
    return out;
}

namespace {

// Applies events in order, tracking live allocations per handle.
class LevelTracker {
public:
    void apply(const ActuationEvent& e) {
        if (e.kind == ActuationKind::Alloc) {
            live_[e.handle] += e.bytes;
            level_ += e.bytes;
        } else if (e.kind == ActuationKind::Free) {
            auto it = live_.find(e.handle);
            if (it != live_.end()) {
                level_ -= it->second;
                live_.erase(it);
            }
        }
    }
    std::int64_t level() const noexcept { return level_; }

private:
    std::map<std::uint32_t, std::int64_t> live_;
    std::int64_t level_ = 0;
};

}  // namespace

std::int64_t peak_live_bytes(const Schedule& schedule) {
    LevelTracker tracker;
    std::int64_t peak = 0;
    for (const auto& e : schedule.events) {
        tracker.apply(e);
        peak = std::max(peak, tracker.level());
    }
    return peak;
}

std::int64_t level_at(const Schedule& schedule, std::int64_t t_us) {
    LevelTracker tracker;
    for (const auto& e : schedule.events) {
        if (e.t_us > t_us) break;
        tracker.apply(e);
    }
    return tracker.level();
}

MemoryTrace ideal_waveform(const Schedule& schedule, std::int64_t sample_period_us,
                           std::int64_t baseline_bytes) {
    return ideal_waveform(schedule, sample_period_us, baseline_bytes, schedule.duration_us);
}

MemoryTrace ideal_waveform(const Schedule& schedule, std::int64_t sample_period_us,
                           std::int64_t baseline_bytes, std::int64_t duration_us) {
    if (sample_period_us <= 0) throw ParameterError("sample period must be positive");
    if (baseline_bytes < 0) throw ParameterError("baseline must be non-negative");
    std::vector<ActuationEvent> events = schedule.events;
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.t_us < b.t_us; });
    const std::int64_t n = (duration_us + sample_period_us - 1) / sample_period_us;
    std::vector<std::int64_t> values;
    values.reserve(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
    LevelTracker tracker;
    std::size_t next = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t t = i * sample_period_us;
        while (next < events.size() && events[next].t_us <= t) tracker.apply(events[next++]);
        values.push_back(std::max<std::int64_t>(0, baseline_bytes + tracker.level()));
    }
    return MemoryTrace::from_values(values, sample_period_us);
}

}  // namespace memcovert::modulation
