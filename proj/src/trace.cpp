#include "memcovert/trace.hpp"

#include "memcovert/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace memcovert {

namespace {

constexpr const char* kPeriodKey = "nominal_period_us";
constexpr const char* kCsvHeader = "t_us,used_bytes";

void check_samples(const std::vector<TimedSample>& samples) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].t_us < 0 || samples[i].used_bytes < 0) {
            throw FormatError("negative timestamp or value at sample " + std::to_string(i), i);
        }
        if (i > 0 && samples[i].t_us <= samples[i - 1].t_us) {
            throw FormatError("timestamps not strictly increasing at sample " + std::to_string(i),
                              i);
        }
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

bool parse_int(std::string_view s, std::int64_t& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace

MemoryTrace::MemoryTrace(std::vector<TimedSample> samples, std::int64_t nominal_period_us,
                         Meta meta)
    : samples_(std::move(samples)), period_us_(nominal_period_us), meta_(std::move(meta)) {
    if (period_us_ <= 0) throw InvalidInput("nominal_period_us must be positive");
    check_samples(samples_);
    for (const auto& [k, v] : meta_) {
        if (k.empty() || k.find_first_of("=\n\r") != std::string::npos ||
            v.find_first_of("\n\r") != std::string::npos || k == kPeriodKey) {
            throw InvalidInput("invalid trace metadata key/value: " + k);
        }
    }
}

MemoryTrace MemoryTrace::from_values(std::span<const std::int64_t> values, std::int64_t period_us,
                                     Meta meta) {
    std::vector<TimedSample> samples;
    samples.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        samples.push_back({static_cast<std::int64_t>(i) * period_us, values[i]});
    }
    return MemoryTrace(std::move(samples), period_us, std::move(meta));
}

std::vector<std::int64_t> MemoryTrace::values() const {
    std::vector<std::int64_t> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.used_bytes);
    return out;
}

std::vector<double> MemoryTrace::values_as_double() const {
    std::vector<double> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(static_cast<double>(s.used_bytes));
    return out;
}

MemoryTrace MemoryTrace::with_meta(const std::string& key, std::string value) const {
    Meta meta = meta_;
    meta[key] = std::move(value);
    return MemoryTrace(samples_, period_us_, std::move(meta));
}

MemoryTrace MemoryTrace::with_values(std::span<const std::int64_t> values) const {
    if (values.size() != samples_.size()) throw InvalidInput("with_values: length mismatch");
    std::vector<TimedSample> samples = samples_;
    for (std::size_t i = 0; i < values.size(); ++i) samples[i].used_bytes = values[i];
    return MemoryTrace(std::move(samples), period_us_, meta_);
}

TraceBuilder::TraceBuilder(std::int64_t nominal_period_us) : period_us_(nominal_period_us) {
    if (period_us_ <= 0) throw InvalidInput("nominal_period_us must be positive");
}

void TraceBuilder::append(std::int64_t t_us, std::int64_t used_bytes) {
    if (t_us < 0 || used_bytes < 0) throw InvalidInput("negative sample");
    if (!samples_.empty() && t_us <= samples_.back().t_us) {
        throw InvalidInput("non-monotonic append");
    }
    samples_.push_back({t_us, used_bytes});
}

void TraceBuilder::set_meta(const std::string& key, std::string value) {
    meta_[key] = std::move(value);
}

std::int64_t TraceBuilder::last_t_us() const noexcept {
    return samples_.empty() ? -1 : samples_.back().t_us;
}

MemoryTrace TraceBuilder::build() && {
    return MemoryTrace(std::move(samples_), period_us_, std::move(meta_));
}

MemoryTrace TraceBuilder::snapshot() const { return MemoryTrace(samples_, period_us_, meta_); }

std::int64_t used_memory(const MemStats& s) {
    if (s.mem_total < 0 || s.mem_free < 0 || s.buffers < 0 || s.cache < 0) {
        throw InvalidInput("meminfo fields must be non-negative");
    }
    if (s.mem_free + s.buffers + s.cache > s.mem_total) {
        throw InvalidInput("mem_free + buffers + cache exceeds mem_total");
    }
    return s.mem_total - s.mem_free - s.buffers - s.cache;
}

std::int64_t used_memory_saturating(const MemStats& s) noexcept {
    const std::int64_t used = s.mem_total - s.mem_free - s.buffers - s.cache;
    return used < 0 ? 0 : used;
}

MemStats parse_meminfo(std::istream& in) {
    MemStats stats;
    bool have_total = false, have_free = false, have_buffers = false, have_cached = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string_view key = trim(std::string_view(line).substr(0, colon));
        std::int64_t* slot = nullptr;
        if (key == "MemTotal") {
            slot = &stats.mem_total;
            have_total = true;
        } else if (key == "MemFree") {
            slot = &stats.mem_free;
            have_free = true;
        } else if (key == "Buffers") {
            slot = &stats.buffers;
            have_buffers = true;
        } else if (key == "Cached") {
            slot = &stats.cache;
            have_cached = true;
        } else if (key == "MemAvailable") {
            slot = &stats.mem_available;
        } else {
            continue;
        }
        std::string_view rest = trim(std::string_view(line).substr(colon + 1));
        std::int64_t multiplier = 1;
        if (rest.size() >= 2 && rest.substr(rest.size() - 2) == "kB") {
            multiplier = 1024;
            rest = trim(rest.substr(0, rest.size() - 2));
        }
        std::int64_t value = 0;
        if (!parse_int(rest, value) || value < 0 ||
            value > std::numeric_limits<std::int64_t>::max() / multiplier) {
            throw ParseError("meminfo: malformed number for " + std::string(key) + " at line " +
                             std::to_string(line_no));
        }
        *slot = value * multiplier;
    }
    if (!have_total) throw ParseError("meminfo: missing required key MemTotal");
    if (!have_free) throw ParseError("meminfo: missing required key MemFree");
    if (!have_buffers) throw ParseError("meminfo: missing required key Buffers");
    if (!have_cached) throw ParseError("meminfo: missing required key Cached");
    return stats;
}

MemStats parse_meminfo_text(const std::string& text) {
    std::istringstream in(text);
    return parse_meminfo(in);
}

std::string render_meminfo(const MemStats& s) {
    auto line = [](const char* key, std::int64_t bytes) {
        std::string k = std::string(key) + ":";
        k.resize(16, ' ');
        std::string v = std::to_string(bytes / 1024);
        return k + std::string(v.size() < 8 ? 8 - v.size() : 0, ' ') + v + " kB\n";
    };
    std::string out = line("MemTotal", s.mem_total) + line("MemFree", s.mem_free);
    if (s.mem_available >= 0) out += line("MemAvailable", s.mem_available);
    out += line("Buffers", s.buffers) + line("Cached", s.cache);
    return out;
}

void write_trace(const MemoryTrace& trace, std::ostream& out) {
    out << "# " << kPeriodKey << '=' << trace.nominal_period_us() << '\n';
    for (const auto& [k, v] : trace.meta()) out << "# " << k << '=' << v << '\n';
    out << kCsvHeader << '\n';
    // Formatting by hand keeps 10^6-sample writes fast.
    char buf[64];
    char* const field_end = buf + 30;
    for (const auto& s : trace.samples()) {
        char* p = std::to_chars(buf, field_end, s.t_us).ptr;
        *p++ = ',';
        p = std::to_chars(p, p + 30, s.used_bytes).ptr;
        *p++ = '\n';
        out.write(buf, p - buf);
    }
}

MemoryTrace read_trace(std::istream& in) {
    std::string line;
    MemoryTrace::Meta meta;
    std::int64_t period = MemoryTrace::kDefaultPeriodUs;
    bool header_seen = false;
    std::vector<TimedSample> samples;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header_seen) {
            if (line.rfind("# ", 0) == 0) {
                const auto eq = line.find('=');
                if (eq == std::string::npos) {
                    throw FormatError("trace: malformed metadata line " + std::to_string(line_no),
                                      0);
                }
                std::string key = line.substr(2, eq - 2);
                std::string value = line.substr(eq + 1);
                if (key == kPeriodKey) {
                    if (!parse_int(value, period) || period <= 0) {
                        throw FormatError("trace: bad nominal_period_us", 0);
                    }
                } else {
                    meta[key] = value;
                }
                continue;
            }
            if (line != kCsvHeader) {
                throw FormatError("trace: expected header '" + std::string(kCsvHeader) + "'", 0);
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto comma = line.find(',');
        TimedSample s;
        if (comma == std::string::npos ||
            !parse_int(std::string_view(line).substr(0, comma), s.t_us) ||
            !parse_int(std::string_view(line).substr(comma + 1), s.used_bytes)) {
            throw FormatError("trace: malformed sample at index " + std::to_string(samples.size()),
                              samples.size());
        }
        const std::size_t index = samples.size();
        if (s.t_us < 0 || s.used_bytes < 0) {
            throw FormatError("trace: negative field at index " + std::to_string(index), index);
        }
        if (!samples.empty() && s.t_us <= samples.back().t_us) {
            throw FormatError("trace: non-monotonic timestamp at index " + std::to_string(index),
                              index);
        }
        samples.push_back(s);
    }
    if (!header_seen) throw FormatError("trace: missing header line", 0);
    return MemoryTrace(std::move(samples), period, std::move(meta));
}

void write_trace_file(const MemoryTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_trace(trace, out);
    if (!out) throw Error("write failed: " + path);
}

MemoryTrace read_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open trace " + path);
    return read_trace(in);
}

}  // namespace memcovert
