#include <doctest.h>

#include "memcovert/butterworth.hpp"
#include "memcovert/codec.hpp"
#include "memcovert/demod.hpp"
#include "memcovert/error.hpp"
#include "memcovert/modulation.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace memcovert;
using namespace memcovert::dsp;

namespace {

constexpr double kPi = std::numbers::pi;

// Digital Butterworth high-pass after a pre-warped bilinear transform: the
// analog prototype's |H| = 1/sqrt(1 + (wc/w)^2n) with both frequencies
// mapped through w = tan(pi f / fs).
double warped_hp(int n, double fc, double fs, double f) {
    const double r = std::tan(kPi * fc / fs) / std::tan(kPi * f / fs);
    return 1.0 / std::sqrt(1.0 + std::pow(r, 2.0 * n));
}

std::vector<double> cosine(std::size_t n, double amp, double f, double fs, double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::cos(2.0 * kPi * f * static_cast<double>(i) / fs + phase);
    return x;
}

// |X(f)| / N by direct summation.
double direct_dft(std::span<const double> x, double f, double fs) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(i) / fs);
    return std::abs(acc) / static_cast<double>(x.size());
}

// Steady-state gain of the causal filter at f: amplitude of the output tone
// over an integer number of cycles near the end, divided by the input's.
double measured_gain(const ButterworthHighpass& hp, double f) {
    const double fs = hp.sample_rate_hz();
    const std::size_t cycles = 40;
    const auto per = static_cast<std::size_t>(std::llround(fs / f * cycles));
    const std::size_t n = 20000 + per;
    const auto y = hp.filter(cosine(n, 1.0, f, fs));
    std::span<const double> tail(y.data() + n - per, per);
    return 2.0 * direct_dft(tail, f, fs);
}

}  // namespace

TEST_CASE("parameter checks") {
    CHECK_THROWS_AS(ButterworthHighpass(5, 0.0, 1000.0), ParameterError);
    CHECK_THROWS_AS(ButterworthHighpass(5, 500.0, 1000.0), ParameterError);
    CHECK_THROWS_AS(ButterworthHighpass(5, 600.0, 1000.0), ParameterError);
    CHECK_THROWS_AS(ButterworthHighpass(0, 10.0, 1000.0), ParameterError);
    CHECK_NOTHROW(ButterworthHighpass(5, 12.5, 1000.0));
}

TEST_CASE("section layout follows the order") {
    for (int n = 1; n <= 8; ++n) {
        ButterworthHighpass hp(n, 12.5, 1000.0);
        CHECK(hp.sections().size() == static_cast<std::size_t>((n + 1) / 2));
        CHECK(hp.order() == n);
    }
}

TEST_CASE("constant input decays to zero") {
    ButterworthHighpass hp(5, 12.5, 1000.0);
    const std::vector<double> x(3000, 123456.0);
    const auto y = hp.filter(x);
    for (std::size_t i = 2500; i < y.size(); ++i) CHECK(std::abs(y[i]) < 1e-3);
}

TEST_CASE("tone gains") {
    ButterworthHighpass hp(5, 12.5, 1000.0);
    SUBCASE("10 x cutoff keeps its amplitude within 5%") {
        CHECK(measured_gain(hp, 125.0) == doctest::Approx(1.0).epsilon(0.05));
    }
    SUBCASE("the cutoff is the -3 dB point") {
        CHECK(measured_gain(hp, 12.5) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.02));
    }
    SUBCASE("stopband is attenuated") {
        CHECK(measured_gain(hp, 2.0) < 1e-3);
    }
}

TEST_CASE("magnitude response matches the analytic curve on a 100-point grid") {
    for (int order : {1, 2, 5}) {
        for (double fc : {12.5, 62.5, 100.0}) {
            ButterworthHighpass hp(order, fc, 1000.0);
            for (int i = 1; i <= 100; ++i) {
                const double f = 499.0 * i / 100.0;
                const double want = warped_hp(order, fc, 1000.0, f);
                CHECK(hp.magnitude(f) == doctest::Approx(want).epsilon(0.02));
                CHECK(ButterworthHighpass::analytic_magnitude(order, fc, 1000.0, f) ==
                      doctest::Approx(want).epsilon(1e-9));
            }
        }
    }
    // The filter itself, not only its transfer function, has that response.
    ButterworthHighpass hp(5, 12.5, 1000.0);
    for (double f : {8.0, 12.5, 16.0, 25.0, 50.0, 200.0}) {
        CHECK(measured_gain(hp, f) == doctest::Approx(warped_hp(5, 12.5, 1000.0, f)).epsilon(0.02));
    }
}

TEST_CASE("butterworth_highpass is the class filter") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> x(500);
    for (auto& v : x) v = d(rng);
    ButterworthHighpass hp(5, 20.0, 1000.0);
    CHECK(butterworth_highpass(x, 20.0, 5, 1000.0) == hp.filter(x));
}

TEST_CASE("window amplitude") {
    const double fs = 1000.0, ft = 25.0;
    SUBCASE("all-zero window") {
        const std::vector<double> z(80, 0.0);
        CHECK(window_amplitude(z, ft, fs) == 0.0);
    }
    SUBCASE("pure cosine at f_t reads A/2 within 3%") {
        for (double phase : {0.0, 0.7, 2.0}) {
            const auto x = cosine(80, 10.0, ft, fs, phase);
            CHECK(window_amplitude(x, ft, fs) == doctest::Approx(5.0).epsilon(0.03));
        }
    }
    SUBCASE("uses the bin nearest f_t") {
        CHECK(nearest_bin(25.0, 80, 1000.0) == 2);
        CHECK(nearest_bin(26.0, 80, 1000.0) == 2);
        CHECK(nearest_bin(19.0, 80, 1000.0) == 2);
        CHECK(nearest_bin(30.0, 80, 1000.0) == 2);
        CHECK(nearest_bin(32.0, 80, 1000.0) == 3);
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> x(77);
        for (auto& v : x) v = u(rng);
        const double bin_f = static_cast<double>(nearest_bin(26.0, x.size(), fs)) * fs / 77.0;
        CHECK(window_amplitude(x, 26.0, fs) == doctest::Approx(direct_dft(x, bin_f, fs)).epsilon(1e-9));
        CHECK(dft_magnitude_at(x, 26.0, fs) == doctest::Approx(direct_dft(x, 26.0, fs)).epsilon(1e-9));
    }
    SUBCASE("square pulse train beats a flat window by more than 10x") {
        modulation::ModulationParams p;
        const std::vector<std::uint8_t> one = {1};
        const auto s = modulation::schedule_rz_ook(one, p);
        const auto t = modulation::ideal_waveform(s, 1000, 0, p.bit_duration_us());
        const auto pulses = t.values_as_double();
        const std::vector<double> flat(pulses.size(), 20.0 * modulation::kMiB);
        const double a_pulse = window_amplitude(pulses, ft, fs);
        const double a_flat = window_amplitude(flat, ft, fs);
        CHECK(a_pulse > 10.0 * a_flat);
        CHECK(a_pulse > 0.25 * 20.0 * modulation::kMiB);
    }
}

TEST_CASE("classify_bit threshold rule") {
    const double a0 = 3.5e6;
    CHECK(demod::classify_bit(0.0, a0) == 0);
    CHECK(demod::classify_bit(a0, a0) == 1);
    CHECK(demod::classify_bit(std::nextafter(a0, 0.0), a0) == 0);
    CHECK(demod::classify_bit(a0 * 2, a0) == 1);
    // Scaling amplitude and threshold together changes nothing.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 2.0 * a0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng);
        CHECK(demod::classify_bit(a, a0) == demod::classify_bit(a * 4.0, a0 * 4.0));
    }
}
