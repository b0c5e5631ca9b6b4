#pragma once

#include <complex>
#include <span>
#include <vector>

namespace memcovert::dsp {

// Normalised second-order section, a0 == 1. First-order sections have
// b2 == a2 == 0.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

/// Butterworth high-pass designed by bilinear transform with the cutoff
/// pre-warped, realised as cascaded sections.
class ButterworthHighpass {
public:
    // Throws ParameterError unless 0 < cutoff < sample_rate / 2 and order >= 1.
    ButterworthHighpass(int order, double cutoff_hz, double sample_rate_hz);

    // Causal filtering from a zero initial state.
    std::vector<double> filter(std::span<const double> input) const;

    std::complex<double> response(double f_hz) const;
    double magnitude(double f_hz) const { return std::abs(response(f_hz)); }

    int order() const noexcept { return order_; }
    double cutoff_hz() const noexcept { return cutoff_hz_; }
    double sample_rate_hz() const noexcept { return sample_rate_hz_; }
    const std::vector<Biquad>& sections() const noexcept { return sections_; }

    // |H| of a bilinear-transformed Butterworth high-pass:
    // 1 / sqrt(1 + (tan(pi fc / fs) / tan(pi f / fs))^(2n)).
    static double analytic_magnitude(int order, double cutoff_hz, double sample_rate_hz,
                                     double f_hz);

private:
    int order_;
    double cutoff_hz_;
    double sample_rate_hz_;
    std::vector<Biquad> sections_;
};

std::vector<double> butterworth_highpass(std::span<const double> values, double cutoff_hz,
                                         int order, double sample_rate_hz);

// DFT bin closest to f_hz for a window of n samples.
std::size_t nearest_bin(double f_hz, std::size_t n, double sample_rate_hz);

// |X[k]| / N at the bin nearest f_t (single-bin DFT, rectangular window).
double window_amplitude(std::span<const double> window, double f_t_hz, double sample_rate_hz);

// |X| / N evaluated at an arbitrary frequency.
double dft_magnitude_at(std::span<const double> window, double f_hz, double sample_rate_hz);

}  // namespace memcovert::dsp
