#include "memcovert/countermeasure.hpp"

#include "memcovert/butterworth.hpp"
#include "memcovert/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace memcovert::counter {

namespace {

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    const auto k = static_cast<std::size_t>(std::llround(q * static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

}  // namespace

Band Band::parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ParseError("band must look like lo:hi, got '" + text + "'");
    Band b;
    try {
        b.lo_hz = std::stod(text.substr(0, colon));
        b.hi_hz = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
        throw ParseError("band must look like lo:hi, got '" + text + "'");
    }
    if (!(b.lo_hz > 0.0 && b.hi_hz > b.lo_hz)) throw ParameterError("band needs 0 < lo < hi");
    return b;
}

FrequencyEstimate estimate_channel_frequency(const MemoryTrace& trace, const Band& band,
                                             const EstimatorOptions& options) {
    if (!(band.lo_hz > 0.0 && band.hi_hz > band.lo_hz)) {
        throw ParameterError("band must exclude DC and satisfy lo < hi");
    }
    const double fs = trace.sample_rate_hz();
    const auto n = std::min(trace.size(),
                            static_cast<std::size_t>(std::llround(options.est_window_s * fs)));
    if (n < 16) throw InvalidInput("trace too short for frequency estimation");
    if (band.lo_hz >= fs / 2.0) throw ParameterError("band lies above the Nyquist frequency");

    const auto& s = trace.samples();
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(s[i].used_bytes - s.front().used_bytes);
    const auto y = dsp::butterworth_highpass(x, band.lo_hz, options.hp_order, fs);

    // The first difference flattens the steep low-frequency spectrum of
    // random walks and slow bursts, which otherwise outweighs the bit clock.
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) d[i] = y[i] - y[i - 1];

    const double width = fs / static_cast<double>(n);
    const auto k_lo = static_cast<std::size_t>(std::ceil(band.lo_hz / width));
    const auto k_hi = std::min(static_cast<std::size_t>(std::floor(band.hi_hz / width)), (n - 1) / 2);
    if (k_hi < k_lo) throw ParameterError("band contains no DFT bin at this resolution");

    std::vector<double> mags;
    FrequencyEstimate est;
    est.bin_width_hz = width;
    std::size_t k_peak = k_lo;
    for (auto k = k_lo; k <= k_hi; ++k) {
        const double m = dsp::dft_magnitude_at(d, static_cast<double>(k) * width, fs);
        mags.push_back(m);
        if (m > est.peak) {
            est.peak = m;
            k_peak = k;
        }
    }
    // Differencing lifts a square wave's third harmonic to about the level of
    // its fundamental; prefer the fundamental when it is comparably strong.
    const auto k_third = static_cast<std::size_t>(std::llround(static_cast<double>(k_peak) / 3.0));
    std::size_t k_best = k_peak;
    double third_peak = 0.0;
    for (auto k = std::max(k_lo, k_third > 0 ? k_third - 1 : 0); k <= std::min(k_hi, k_third + 1); ++k) {
        const double m = mags[k - k_lo];
        if (m > third_peak) {
            third_peak = m;
            k_best = k;
        }
    }
    if (k_best != k_peak && third_peak >= 0.5 * est.peak) est.peak = third_peak;
    else k_best = k_peak;
    est.f_est_hz = static_cast<double>(k_best) * width;
    est.median = percentile(mags, 0.5);
    est.peak_to_median = est.median > 0.0 ? est.peak / est.median : (est.peak > 0.0 ? INFINITY : 0.0);
    if (!(est.peak_to_median >= options.min_peak_to_median)) {
        throw NoChannelFound("no channel found in " + std::to_string(band.lo_hz) + "-" +
                             std::to_string(band.hi_hz) + " Hz (peak/median " +
                             std::to_string(est.peak_to_median) + ")");
    }
    est.amplitude_bytes = percentile(y, 0.99) - percentile(y, 0.01);
    return est;
}

std::int64_t JammerParams::period_us() const {
    return static_cast<std::int64_t>(std::llround(1e6 / f_est_hz));
}

void JammerParams::validate(double sample_rate_hz) const {
    if (!(duty > 0.0 && duty < 1.0)) throw ParameterError("jammer duty must lie in (0, 1)");
    if (!(f_est_hz > 0.0)) throw ParameterError("jammer frequency must be positive");
    if (sample_rate_hz > 0.0 && f_est_hz >= sample_rate_hz / 2.0) {
        throw ParameterError("jammer frequency lies above the sampler's Nyquist frequency");
    }
    if (block_bytes <= 0) throw ParameterError("jammer block must be positive");
}

JammerParams plan_jammer(const MemoryTrace& trace, const Band& band, const EstimatorOptions& options,
                         std::uint64_t seed) {
    const auto est = estimate_channel_frequency(trace, band, options);
    JammerParams p;
    p.est_window_s = options.est_window_s;
    p.f_est_hz = est.f_est_hz;
    p.block_bytes = std::clamp(static_cast<std::int64_t>(std::llround(est.amplitude_bytes)), kMinJamBlock,
                               kMaxJamBlock);
    p.seed = seed;
    p.validate(trace.sample_rate_hz());
    return p;
}

modulation::Schedule jam_schedule(const JammerParams& params, std::int64_t start_us,
                                  std::int64_t duration_us) {
    params.validate(0.0);
    return modulation::random_phase_pulses(start_us, duration_us, params.period_us(), params.block_bytes,
                                           params.duty, params.seed);
}

backend::ExecutionReport jam(backend::Actuator& actuator, const JammerParams& params,
                             std::int64_t start_us, std::int64_t duration_us) {
    return actuator.execute(jam_schedule(params, start_us, duration_us));
}

}  // namespace memcovert::counter
