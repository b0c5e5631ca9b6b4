#pragma once

#include "memcovert/channel_sim.hpp"
#include "memcovert/modulation.hpp"
#include "memcovert/trace.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace memcovert::backend {

struct ExecutionReport {
    std::size_t events_executed = 0;
    std::size_t events_total = 0;
    // Wall-clock lateness of each executed event, microseconds.
    std::vector<std::int64_t> deviations_us;
    double jitter_p50_us = 0.0;
    double jitter_p95_us = 0.0;
    double jitter_max_us = 0.0;
    std::int64_t peak_bytes = 0;
    bool aborted = false;
    std::string abort_reason;
};

class Actuator {
public:
    virtual ~Actuator() = default;
    // After return every allocation made by this call has been released.
    virtual ExecutionReport execute(const modulation::Schedule& schedule) = 0;
};

class Sampler {
public:
    using SampleSink = std::function<void(const TimedSample&)>;
    virtual ~Sampler() = default;
    // Delivers samples until `duration_us` has elapsed or `stop` becomes true.
    virtual void stream(std::int64_t duration_us, std::int64_t period_us, const SampleSink& sink,
                        const std::atomic<bool>* stop = nullptr) = 0;
    MemoryTrace run(std::int64_t duration_us, std::int64_t period_us);

protected:
    MemoryTrace::Meta run_meta_;
};

struct RealActuatorOptions {
    // Write the full block and copy it into a second block, as the reference
    // transmitter does. Otherwise one byte per page is touched.
    bool faithful = false;
    std::string meminfo_path = "/proc/meminfo";
    bool check_headroom = true;
    const std::atomic<bool>* stop = nullptr;
};

// Page-committed anonymous mapping, released on destruction.
class CommittedBlock {
public:
    CommittedBlock() = default;
    // Throws ActuatorError when the mapping fails.
    CommittedBlock(std::size_t bytes, bool fill);
    CommittedBlock(const CommittedBlock&) = delete;
    CommittedBlock& operator=(const CommittedBlock&) = delete;
    CommittedBlock(CommittedBlock&& other) noexcept;
    CommittedBlock& operator=(CommittedBlock&& other) noexcept;
    ~CommittedBlock();

    std::size_t size() const noexcept { return size_; }
    std::byte* data() noexcept { return data_; }

private:
    void release() noexcept;
    std::byte* data_ = nullptr;
    std::size_t size_ = 0;
};

class RealActuator : public Actuator {
public:
    explicit RealActuator(RealActuatorOptions options = {});
    ExecutionReport execute(const modulation::Schedule& schedule) override;
    // Bytes currently held; zero outside execute().
    std::int64_t live_bytes() const noexcept { return live_bytes_.load(); }

private:
    RealActuatorOptions options_;
    std::atomic<std::int64_t> live_bytes_{0};
};

// Samples a meminfo-format file at absolute deadlines. Deadlines that are
// missed are counted and skipped; no sample is synthesised for them.
class SystemSampler : public Sampler {
public:
    // Throws Error if the source cannot be read and parsed.
    explicit SystemSampler(std::string meminfo_path = "/proc/meminfo");
    void stream(std::int64_t duration_us, std::int64_t period_us, const SampleSink& sink,
                const std::atomic<bool>* stop = nullptr) override;
    std::int64_t read_used_bytes() const;

private:
    std::string path_;
};

// Streams a recorded trace, optionally paced in real time.
class ReplaySampler : public Sampler {
public:
    explicit ReplaySampler(MemoryTrace trace, bool realtime = false);
    void stream(std::int64_t duration_us, std::int64_t period_us, const SampleSink& sink,
                const std::atomic<bool>* stop = nullptr) override;

private:
    MemoryTrace trace_;
    bool realtime_;
};

// Deterministic medium: executed schedules accumulate and are rendered as
// ideal waveform plus noise when sampled.
class SimMedium : public Actuator {
public:
    explicit SimMedium(std::int64_t baseline_bytes = 0) : baseline_(baseline_bytes) {}
    ExecutionReport execute(const modulation::Schedule& schedule) override;
    MemoryTrace sample(std::int64_t duration_us, std::int64_t period_us,
                       const channel::NoiseModel& noise) const;
    const modulation::Schedule& schedule() const noexcept { return schedule_; }

private:
    std::int64_t baseline_;
    modulation::Schedule schedule_;
};

// ideal_waveform(jitter(schedule)) + noise; bit-identical for a fixed seed.
MemoryTrace execute_and_sample(const modulation::Schedule& schedule,
                               const channel::NoiseModel& noise, std::int64_t period_us,
                               std::int64_t baseline_bytes, std::int64_t duration_us = -1);

}  // namespace memcovert::backend
