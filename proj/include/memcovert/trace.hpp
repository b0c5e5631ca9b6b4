#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace memcovert {

struct TimedSample {
    std::int64_t t_us = 0;
    std::int64_t used_bytes = 0;

    friend bool operator==(const TimedSample&, const TimedSample&) = default;
};

/// Memory-usage trace: strictly time-ordered samples plus free-form metadata.
///
/// Construction validates the invariants (strictly increasing timestamps,
/// non-negative values, positive nominal period); a constructed trace is
/// immutable.
class MemoryTrace {
public:
    using Meta = std::map<std::string, std::string>;

    static constexpr std::int64_t kDefaultPeriodUs = 1000;

    MemoryTrace() = default;
    MemoryTrace(std::vector<TimedSample> samples, std::int64_t nominal_period_us,
                Meta meta = {});

    // Samples spaced exactly one period apart, starting at t=0.
    static MemoryTrace from_values(std::span<const std::int64_t> values,
                                   std::int64_t period_us, Meta meta = {});

    const std::vector<TimedSample>& samples() const noexcept { return samples_; }
    std::int64_t nominal_period_us() const noexcept { return period_us_; }
    const Meta& meta() const noexcept { return meta_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }

    double sample_rate_hz() const noexcept { return 1e6 / static_cast<double>(period_us_); }
    std::vector<std::int64_t> values() const;
    std::vector<double> values_as_double() const;

    MemoryTrace with_meta(const std::string& key, std::string value) const;
    MemoryTrace with_values(std::span<const std::int64_t> values) const;

    friend bool operator==(const MemoryTrace&, const MemoryTrace&) = default;

private:
    std::vector<TimedSample> samples_;
    std::int64_t period_us_ = kDefaultPeriodUs;
    Meta meta_;
};

// Single-writer, append-only builder used by live samplers.
class TraceBuilder {
public:
    explicit TraceBuilder(std::int64_t nominal_period_us = MemoryTrace::kDefaultPeriodUs);

    // Throws InvalidInput if t_us is not after the previous sample.
    void append(std::int64_t t_us, std::int64_t used_bytes);
    void set_meta(const std::string& key, std::string value);
    std::size_t size() const noexcept { return samples_.size(); }
    std::int64_t last_t_us() const noexcept;
    MemoryTrace build() &&;
    MemoryTrace snapshot() const;

private:
    std::vector<TimedSample> samples_;
    std::int64_t period_us_;
    MemoryTrace::Meta meta_;
};

struct MemStats {
    std::int64_t mem_total = 0;
    std::int64_t mem_free = 0;
    std::int64_t buffers = 0;
    std::int64_t cache = 0;
    // MemAvailable when the source provides it, else -1.
    std::int64_t mem_available = -1;
};

// mem_total - mem_free - buffers - cache. Throws InvalidInput if the
// invariant mem_free + buffers + cache <= mem_total does not hold.
std::int64_t used_memory(const MemStats& stats);

// Same arithmetic, saturating at zero instead of throwing. Live samplers use
// this because the kernel fields are not read atomically.
std::int64_t used_memory_saturating(const MemStats& stats) noexcept;

MemStats parse_meminfo(std::istream& in);
MemStats parse_meminfo_text(const std::string& text);
std::string render_meminfo(const MemStats& stats);

void write_trace(const MemoryTrace& trace, std::ostream& out);
MemoryTrace read_trace(std::istream& in);
void write_trace_file(const MemoryTrace& trace, const std::string& path);
MemoryTrace read_trace_file(const std::string& path);

}  // namespace memcovert
