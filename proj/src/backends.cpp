#include "memcovert/backends.hpp"

#include "memcovert/error.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <utility>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <thread>

namespace memcovert::backend {

using Clock = std::chrono::steady_clock;
using modulation::ActuationKind;

namespace {

constexpr std::size_t kPage = 4096;

double percentile(std::vector<std::int64_t> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5);
    return static_cast<double>(v[std::min(idx, v.size() - 1)]);
}

void summarize(ExecutionReport& r) {
    std::vector<std::int64_t> abs_dev;
    for (auto d : r.deviations_us) abs_dev.push_back(d < 0 ? -d : d);
    r.jitter_p50_us = percentile(abs_dev, 0.50);
    r.jitter_p95_us = percentile(abs_dev, 0.95);
    r.jitter_max_us = abs_dev.empty() ? 0.0 : static_cast<double>(*std::max_element(abs_dev.begin(), abs_dev.end()));
}

std::int64_t available_bytes(const std::string& meminfo_path) {
    std::ifstream in(meminfo_path);
    if (!in) throw ActuatorError("cannot read " + meminfo_path + " for headroom check");
    const MemStats s = parse_meminfo(in);
    return s.mem_available >= 0 ? s.mem_available : s.mem_free + s.buffers + s.cache;
}

}  // namespace

MemoryTrace Sampler::run(std::int64_t duration_us, std::int64_t period_us) {
    TraceBuilder builder(period_us);
    stream(duration_us, period_us,
           [&builder](const TimedSample& s) { builder.append(s.t_us, s.used_bytes); });
    for (const auto& [k, v] : run_meta_) builder.set_meta(k, v);
    return std::move(builder).build();
}

CommittedBlock::CommittedBlock(std::size_t bytes, bool fill) : size_(bytes) {
    if (bytes == 0) return;
    void* p = ::mmap(nullptr, bytes, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (p == MAP_FAILED) {
        size_ = 0;
        throw ActuatorError("mmap of " + std::to_string(bytes) + " bytes failed");
    }
    data_ = static_cast<std::byte*>(p);
    if (fill) {
        std::memset(data_, 0x0A, bytes);
    } else {
        for (std::size_t off = 0; off < bytes; off += kPage) data_[off] = std::byte{0x0A};
    }
}

CommittedBlock::CommittedBlock(CommittedBlock&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)), size_(std::exchange(other.size_, 0)) {}

CommittedBlock& CommittedBlock::operator=(CommittedBlock&& other) noexcept {
    if (this != &other) {
        release();
        data_ = std::exchange(other.data_, nullptr);
        size_ = std::exchange(other.size_, 0);
    }
    return *this;
}

CommittedBlock::~CommittedBlock() { release(); }

void CommittedBlock::release() noexcept {
    if (data_ != nullptr) ::munmap(data_, size_);
    data_ = nullptr;
    size_ = 0;
}

RealActuator::RealActuator(RealActuatorOptions options) : options_(std::move(options)) {}

ExecutionReport RealActuator::execute(const modulation::Schedule& schedule) {
    ExecutionReport report;
    report.events_total = schedule.events.size();
    if (schedule.events.empty()) return report;

    const std::int64_t copies = options_.faithful ? 2 : 1;
    const std::int64_t needed = modulation::peak_live_bytes(schedule) * copies;
    if (options_.check_headroom && needed > 0) {
        const std::int64_t available = available_bytes(options_.meminfo_path);
        if (needed > available) {
            throw ActuatorError("refusing schedule: needs " + std::to_string(needed) +
                                " bytes, only " + std::to_string(available) + " available");
        }
    }

    struct Held {
        CommittedBlock source;
        CommittedBlock copy;
    };
    std::map<std::uint32_t, Held> held;
    std::int64_t peak = 0;
    const auto start = Clock::now();
    for (const auto& e : schedule.events) {
        if (options_.stop != nullptr && options_.stop->load()) {
            report.aborted = true;
            report.abort_reason = "stopped";
            break;
        }
        const auto due = start + std::chrono::microseconds(e.t_us);
        std::this_thread::sleep_until(due);
        const auto lateness =
            std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - due).count();
        try {
            if (e.kind == ActuationKind::Alloc) {
                Held h;
                h.source = CommittedBlock(static_cast<std::size_t>(e.bytes), options_.faithful);
                if (options_.faithful) {
                    h.copy = CommittedBlock(static_cast<std::size_t>(e.bytes), false);
                    std::memcpy(h.copy.data(), h.source.data(), h.source.size());
                }
                held[e.handle] = std::move(h);
                live_bytes_ += e.bytes * copies;
                peak = std::max(peak, live_bytes_.load());
            } else if (e.kind == ActuationKind::Free) {
                auto it = held.find(e.handle);
                if (it != held.end()) {
                    live_bytes_ -= static_cast<std::int64_t>(it->second.source.size()) * copies;
                    held.erase(it);
                }
            }
        } catch (const ActuatorError& err) {
            report.aborted = true;
            report.abort_reason = err.what();
            break;
        }
        report.deviations_us.push_back(lateness);
        ++report.events_executed;
    }
    held.clear();
    live_bytes_ = 0;
    report.peak_bytes = peak;
    summarize(report);
    return report;
}

SystemSampler::SystemSampler(std::string meminfo_path) : path_(std::move(meminfo_path)) {
    try {
        (void)read_used_bytes();
    } catch (const Error& e) {
        throw Error("sampler source unusable: " + path_ + ": " + e.what());
    }
}

std::int64_t SystemSampler::read_used_bytes() const {
    std::ifstream in(path_);
    if (!in) throw Error("cannot open " + path_);
    return used_memory_saturating(parse_meminfo(in));
}

void SystemSampler::stream(std::int64_t duration_us, std::int64_t period_us,
                           const SampleSink& sink, const std::atomic<bool>* stop) {
    if (period_us <= 0) throw ParameterError("sampling period must be positive");
    run_meta_.clear();
    run_meta_["source"] = path_;
    std::int64_t missed = 0;
    std::int64_t count = 0;
    std::int64_t last_t = -1;
    const auto start = Clock::now();
    const auto end = start + std::chrono::microseconds(duration_us);
    auto deadline = start;
    while (deadline < end) {
        if (stop != nullptr && stop->load()) break;
        std::this_thread::sleep_until(deadline);
        const std::int64_t value = read_used_bytes();
        auto t = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
        if (t <= last_t) t = last_t + 1;
        last_t = t;
        sink(TimedSample{t, value});
        ++count;
        deadline += std::chrono::microseconds(period_us);
        const auto now = Clock::now();
        while (deadline + std::chrono::microseconds(period_us) <= now) {
            deadline += std::chrono::microseconds(period_us);
            ++missed;
        }
    }
    run_meta_["missed_deadlines"] = std::to_string(missed);
    run_meta_["achieved_period_us"] =
        count > 1 ? std::to_string(last_t / (count - 1)) : std::to_string(period_us);
}

ReplaySampler::ReplaySampler(MemoryTrace trace, bool realtime)
    : trace_(std::move(trace)), realtime_(realtime) {}

void ReplaySampler::stream(std::int64_t duration_us, std::int64_t /*period_us*/,
                           const SampleSink& sink, const std::atomic<bool>* stop) {
    run_meta_ = trace_.meta();
    run_meta_["achieved_period_us"] = std::to_string(trace_.nominal_period_us());
    const auto start = Clock::now();
    for (const auto& s : trace_.samples()) {
        if (duration_us >= 0 && s.t_us >= duration_us) break;
        if (stop != nullptr && stop->load()) break;
        if (realtime_) std::this_thread::sleep_until(start + std::chrono::microseconds(s.t_us));
        sink(s);
    }
}

ExecutionReport SimMedium::execute(const modulation::Schedule& schedule) {
    schedule_ = modulation::merge(schedule_, schedule);
    ExecutionReport r;
    r.events_total = schedule.events.size();
    r.events_executed = schedule.events.size();
    r.deviations_us.assign(schedule.events.size(), 0);
    r.peak_bytes = modulation::peak_live_bytes(schedule);
    return r;
}

MemoryTrace SimMedium::sample(std::int64_t duration_us, std::int64_t period_us,
                              const channel::NoiseModel& noise) const {
    return execute_and_sample(schedule_, noise, period_us, baseline_, duration_us);
}

MemoryTrace execute_and_sample(const modulation::Schedule& schedule,
                               const channel::NoiseModel& noise, std::int64_t period_us,
                               std::int64_t baseline_bytes, std::int64_t duration_us) {
    const auto jittered = channel::jitter_schedule(schedule, noise.schedule_jitter_us, noise.seed);
    const auto ideal = modulation::ideal_waveform(
        jittered, period_us, baseline_bytes, duration_us >= 0 ? duration_us : schedule.duration_us);
    return channel::apply_noise(ideal, noise);
}

}  // namespace memcovert::backend
