#pragma once

#include "memcovert/backends.hpp"
#include "memcovert/modulation.hpp"
#include "memcovert/trace.hpp"

#include <cstdint>
#include <string>

namespace memcovert::counter {

struct Band {
    double lo_hz = 1.0;
    double hi_hz = 100.0;

    // Parses "lo:hi".
    static Band parse(const std::string& text);
};

struct FrequencyEstimate {
    double f_est_hz = 0.0;
    double bin_width_hz = 0.0;
    double peak = 0.0;
    double median = 0.0;
    double peak_to_median = 0.0;
    // Robust peak-to-peak (1st to 99th percentile) of the filtered trace.
    double amplitude_bytes = 0.0;
};

struct EstimatorOptions {
    double est_window_s = 3.0;
    int hp_order = 5;
    double min_peak_to_median = 3.0;
};

// Strongest DFT bin inside the band, computed over the first est_window_s
// of the trace after a high-pass at the band's lower edge and a first
// difference. A peak whose third subharmonic is at least half as strong is
// reported at the subharmonic. Throws
// NoChannelFound when the peak does not stand out from the band median.
FrequencyEstimate estimate_channel_frequency(const MemoryTrace& trace, const Band& band,
                                             const EstimatorOptions& options = {});

struct JammerParams {
    double est_window_s = 3.0;
    double f_est_hz = 25.0;
    std::int64_t block_bytes = 20 * modulation::kMiB;
    double duty = 0.5;
    std::uint64_t seed = 1;

    std::int64_t period_us() const;
    // Throws ParameterError unless 0 < duty < 1 and f_est lies below the
    // Nyquist frequency of `sample_rate_hz`.
    void validate(double sample_rate_hz) const;
};

inline constexpr std::int64_t kMinJamBlock = 1 * modulation::kMiB;
inline constexpr std::int64_t kMaxJamBlock = 64 * modulation::kMiB;

// Estimate-driven defaults: f_est from the trace, block size from the
// signal's amplitude clamped to [1 MiB, 64 MiB].
JammerParams plan_jammer(const MemoryTrace& trace, const Band& band,
                         const EstimatorOptions& options = {}, std::uint64_t seed = 1);

// Random-phase ALLOC/FREE pulses at 1/f_est.
modulation::Schedule jam_schedule(const JammerParams& params, std::int64_t start_us,
                                  std::int64_t duration_us);

// Runs the pulses on any actuator; every allocation is released on return.
backend::ExecutionReport jam(backend::Actuator& actuator, const JammerParams& params,
                             std::int64_t start_us, std::int64_t duration_us);

}  // namespace memcovert::counter
