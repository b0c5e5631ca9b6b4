#include "memcovert/butterworth.hpp"

#include "memcovert/error.hpp"

#include <cmath>
#include <numbers>

namespace memcovert::dsp {

ButterworthHighpass::ButterworthHighpass(int order, double cutoff_hz, double sample_rate_hz)
    : order_(order), cutoff_hz_(cutoff_hz), sample_rate_hz_(sample_rate_hz) {
    if (order < 1) throw ParameterError("filter order must be >= 1");
    if (!(sample_rate_hz > 0.0)) throw ParameterError("sample rate must be positive");
    if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0) {
        throw ParameterError("cutoff must lie strictly between 0 and Nyquist");
    }
    const double k = 2.0 * sample_rate_hz;
    const double wc = k * std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
    const double k2 = k * k, wc2 = wc * wc;

    // Prototype low-pass poles exp(j*pi*(2m + n + 1) / (2n)); the complex pair
    // m, n-1-m gives s^2 + a s + 1 with a = -2 cos(theta). The high-pass map
    // s -> wc / s turns it into s^2 / (s^2 + a wc s + wc^2).
    for (int m = 0; m < order / 2; ++m) {
        const double theta = std::numbers::pi * (2.0 * m + order + 1.0) / (2.0 * order);
        const double a = -2.0 * std::cos(theta);
        const double a0 = k2 + a * wc * k + wc2;
        Biquad s;
        s.b0 = k2 / a0;
        s.b1 = -2.0 * k2 / a0;
        s.b2 = k2 / a0;
        s.a1 = (2.0 * wc2 - 2.0 * k2) / a0;
        s.a2 = (k2 - a * wc * k + wc2) / a0;
        sections_.push_back(s);
    }
    if (order % 2 == 1) {
        // s / (s + wc)
        const double a0 = k + wc;
        Biquad s;
        s.b0 = k / a0;
        s.b1 = -k / a0;
        s.a1 = (wc - k) / a0;
        sections_.push_back(s);
    }
}

std::vector<double> ButterworthHighpass::filter(std::span<const double> input) const {
    std::vector<double> y(input.begin(), input.end());
    for (const auto& s : sections_) {
        // Transposed direct form II.
        double z1 = 0.0, z2 = 0.0;
        for (auto& v : y) {
            const double x = v;
            const double out = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * out + z2;
            z2 = s.b2 * x - s.a2 * out;
            v = out;
        }
    }
    return y;
}

std::complex<double> ButterworthHighpass::response(double f_hz) const {
    const double w = 2.0 * std::numbers::pi * f_hz / sample_rate_hz_;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sections_) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
}

double ButterworthHighpass::analytic_magnitude(int order, double cutoff_hz, double sample_rate_hz,
                                               double f_hz) {
    if (f_hz <= 0.0) return 0.0;
    const double ratio = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz) /
                         std::tan(std::numbers::pi * f_hz / sample_rate_hz);
    return 1.0 / std::sqrt(1.0 + std::pow(ratio, 2.0 * order));
}

std::vector<double> butterworth_highpass(std::span<const double> values, double cutoff_hz,
                                         int order, double sample_rate_hz) {
    return ButterworthHighpass(order, cutoff_hz, sample_rate_hz).filter(values);
}

std::size_t nearest_bin(double f_hz, std::size_t n, double sample_rate_hz) {
    return static_cast<std::size_t>(std::llround(f_hz * static_cast<double>(n) / sample_rate_hz));
}

double window_amplitude(std::span<const double> window, double f_t_hz, double sample_rate_hz) {
    const std::size_t n = window.size();
    if (n < 2) throw InvalidInput("window needs at least two samples");
    const std::size_t k = nearest_bin(f_t_hz, n, sample_rate_hz);
    double re = 0.0, im = 0.0;
    const double step = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double phase = step * static_cast<double>(i);
        re += window[i] * std::cos(phase);
        im -= window[i] * std::sin(phase);
    }
    return std::hypot(re, im) / static_cast<double>(n);
}

double dft_magnitude_at(std::span<const double> window, double f_hz, double sample_rate_hz) {
    const std::size_t n = window.size();
    if (n == 0) return 0.0;
    // Goertzel recurrence.
    const double w = 2.0 * std::numbers::pi * f_hz / sample_rate_hz;
    const double coeff = 2.0 * std::cos(w);
    double s1 = 0.0, s2 = 0.0;
    for (double x : window) {
        const double s0 = x + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    const double re = s1 - s2 * std::cos(w);
    const double im = s2 * std::sin(w);
    return std::hypot(re, im) / static_cast<double>(n);
}

}  // namespace memcovert::dsp
