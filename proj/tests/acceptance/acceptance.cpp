// End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit
// status if any criterion fails.

#include "memcovert/backends.hpp"
#include "memcovert/butterworth.hpp"
#include "memcovert/channel_sim.hpp"
#include "memcovert/codec.hpp"
#include "memcovert/demod.hpp"
#include "memcovert/detector.hpp"
#include "memcovert/modulation.hpp"
#include "memcovert/scenario.hpp"
#include "memcovert/trace.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace memcovert;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

std::string scenario_path(const std::string& name) {
    return channel::default_data_dir() + "/scenarios/" + name + ".scenario";
}

Outcome ecc_exhaustive() {
    int single_ok = 0, clean_ok = 0;
    for (unsigned v = 0; v < 16; ++v) {
        const codec::Nibble n(v);
        const auto cw = codec::hamming74_encode(n);
        const auto clean = codec::hamming74_decode(cw);
        clean_ok += clean.nibble == n && !clean.corrected && !clean.uncorrectable;
        for (int b = 0; b < 7; ++b) {
            const auto out = codec::hamming74_decode(static_cast<codec::Codeword>(cw ^ (1u << b)));
            single_ok += out.nibble == n && out.corrected && !out.uncorrectable;
        }
    }
    return {single_ok == 112 && clean_ok == 16,
            std::to_string(single_ok) + "/112 single-bit flips corrected, " + std::to_string(clean_ok) +
                "/16 clean codewords untouched"};
}

Outcome noiseless_round_trip() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> byte(0, 255), len(1, 24);
    const auto rz = modulation::ModulationParams{};
    const auto nrz = modulation::ModulationParams::nrz_defaults();
    int ok_rz = 0, ok_nrz = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint8_t> payload(static_cast<std::size_t>(len(rng)));
        for (auto& b : payload) b = static_cast<std::uint8_t>(byte(rng));
        for (const auto* mod : {&rz, &nrz}) {
            const bool is_rz = mod->scheme == modulation::Scheme::RzOok;
            const std::int64_t period = is_rz ? 1000 : 20'000;
            const int preamble = is_rz ? 1 : 0;
            std::vector<codec::Packet> packets(static_cast<std::size_t>(preamble), codec::Packet{0xAA});
            for (auto p : codec::encode_message(payload)) packets.push_back(p);
            const auto s = modulation::schedule_bits(codec::packets_to_bits(packets), *mod, 300'000);
            const auto trace = modulation::ideal_waveform(s, period, 2048 * modulation::kMiB, s.duration_us + 600'000);
            const auto r = demod::demodulate(trace, demod::DemodParams::from_modulation(*mod, period), preamble);
            auto raw = r.raw_packets();
            if (raw.size() < static_cast<std::size_t>(preamble)) continue;
            raw.erase(raw.begin(), raw.begin() + preamble);
            const auto decoded = codec::decode_packets(raw);
            if (decoded.payload == payload) (is_rz ? ok_rz : ok_nrz) += 1;
        }
    }
    return {ok_rz == 100 && ok_nrz == 100,
            "RZ-OOK " + std::to_string(ok_rz) + "/100, NRZ-delta " + std::to_string(ok_nrz) + "/100 exact"};
}

Outcome noise_suite() {
    const auto spec = scenario::ScenarioSpec::load(scenario_path("noise_suite"));
    const auto result = scenario::run_scenario(spec);
    bool per_ok = result.ok && result.runs.size() == 8;
    double worst_per = 0.0;
    std::size_t min_packets = SIZE_MAX;
    for (const auto& run : result.runs) {
        worst_per = std::max(worst_per, run.report.per_pct);
        min_packets = std::min(min_packets, run.report.packets_sent);
        per_ok = per_ok && run.report.per_pct <= 10.0;
    }
    const bool pass = per_ok && min_packets >= 100 && result.aggregate.ber_pct <= 5.0;
    return {pass, std::to_string(result.runs.size()) + " profiles x " + std::to_string(min_packets) +
                      " packets, aggregate BER " + fmt("%.3f%%", result.aggregate.ber_pct) + ", worst PER " +
                      fmt("%.2f%%", worst_per)};
}

Outcome hvm() {
    const auto spec = scenario::ScenarioSpec::load(scenario_path("hvm"));
    const auto result = scenario::run_scenario(spec);
    const auto& r = result.aggregate;
    const bool pass = result.ok && r.packets_sent >= 1000 && r.ber_pct <= 3.0 && r.per_pct <= 8.0;
    return {pass, std::to_string(r.packets_sent) + " NRZ-delta packets, BER " + fmt("%.3f%%", r.ber_pct) +
                      ", PER " + fmt("%.2f%%", r.per_pct)};
}

Outcome countermeasure() {
    const auto matched = scenario::run_scenario(scenario::ScenarioSpec::load(scenario_path("jam")));
    const auto mistuned = scenario::run_scenario(scenario::ScenarioSpec::load(scenario_path("jam_mistuned")));
    const auto& m = matched.aggregate;
    const auto& x = mistuned.aggregate;
    const bool pass = matched.ok && mistuned.ok && m.ber_pct >= 40.0 && m.ber_pct <= 60.0 && m.per_pct >= 90.0 &&
                      x.per_pct < m.per_pct;
    std::string est;
    if (!matched.runs.empty() && matched.runs[0].estimate) est = fmt(" (f_est %.2f Hz)", matched.runs[0].estimate->f_est_hz);
    return {pass, "matched BER " + fmt("%.2f%%", m.ber_pct) + " PER " + fmt("%.2f%%", m.per_pct) + est +
                      "; mis-tuned BER " + fmt("%.2f%%", x.ber_pct) + " PER " + fmt("%.2f%%", x.per_pct)};
}

Outcome detector() {
    detect::CorpusOptions opts;
    opts.traces_per_class = 150;
    opts.seed = 7;
    const auto data = detect::build_dataset(detect::synthesize_corpus(opts));
    const auto [train, test] = detect::split_dataset(data, 0.8, 11);
    const auto knn = detect::evaluate(detect::ClassifierModel::knn_train(train, 10), test);
    std::vector<double> dt;
    for (int depth : {1, 3, 5, 7}) dt.push_back(detect::evaluate(detect::ClassifierModel::dtree_train(train, depth), test).accuracy_pct);
    bool monotone = true;
    for (std::size_t i = 1; i < dt.size(); ++i) monotone = monotone && dt[i] >= dt[i - 1];
    const bool pass = data.size() >= 2000 && knn.accuracy_pct >= 90.0 && knn.false_positive_pct <= 2.0 &&
                      dt.back() >= 93.0 && monotone;
    return {pass, std::to_string(data.size()) + " windows; KNN-10 " + fmt("%.2f%%", knn.accuracy_pct) + " FP " +
                      fmt("%.2f%%", knn.false_positive_pct) + "; DT depth 1/3/5/7 " + fmt("%.2f", dt[0]) + "/" +
                      fmt("%.2f", dt[1]) + "/" + fmt("%.2f", dt[2]) + "/" + fmt("%.2f%%", dt[3])};
}

Outcome dsp_correctness() {
    constexpr double kPi = 3.14159265358979323846;
    const double fs = 1000.0, fc = 12.5;
    dsp::ButterworthHighpass hp(5, fc, fs);
    double worst = 0.0;
    for (int i = 1; i <= 100; ++i) {
        const double f = 499.0 * i / 100.0;
        const double r = std::tan(kPi * fc / fs) / std::tan(kPi * f / fs);
        const double want = 1.0 / std::sqrt(1.0 + std::pow(r, 10.0));
        worst = std::max(worst, std::abs(hp.magnitude(f) - want) / want);
    }
    std::vector<double> x(80);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 8.0 * std::cos(2.0 * kPi * 25.0 * static_cast<double>(i) / fs + 0.3);
    const double amp_err = std::abs(dsp::window_amplitude(x, 25.0, fs) - 4.0) / 4.0;
    const double a0 = 1e6;
    const bool inclusive = demod::classify_bit(a0, a0) == 1 && demod::classify_bit(std::nextafter(a0, 0.0), a0) == 0;
    return {worst <= 0.02 && amp_err <= 0.03 && inclusive,
            "worst response error " + fmt("%.3f%%", 100.0 * worst) + ", cosine amplitude error " +
                fmt("%.3f%%", 100.0 * amp_err) + ", threshold inclusive " + (inclusive ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "memcovert_acceptance";
    fs::remove_all(dir);
    const auto spec = scenario::ScenarioSpec::load(scenario_path("noise_suite"));
    scenario::run_scenario(spec, (dir / "a").string());
    scenario::run_scenario(spec, (dir / "b").string());
    std::size_t files = 0, same = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (!e.is_regular_file() || e.path().filename() != "report.txt") continue;
        ++files;
        const auto other = dir / "b" / fs::relative(e.path(), dir / "a");
        same += slurp(e.path()) == slurp(other) ? 1 : 0;
    }

    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::int64_t> v(0, std::int64_t{1} << 40);
    std::vector<TimedSample> samples(1'000'000);
    std::int64_t t = 0;
    for (auto& s : samples) {
        t += 900 + static_cast<std::int64_t>(rng() % 200);
        s = {t, v(rng)};
    }
    const MemoryTrace trace(samples, 1000, {{"source", "acceptance"}});
    std::stringstream csv;
    write_trace(trace, csv);
    const bool csv_ok = read_trace(csv) == trace;

    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_windows = [&](std::size_t n) {
        detect::Dataset d;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> w(detect::kWindowSize);
            for (auto& x : w) x = u(rng);
            d.push_back({w, w[10] + w[60] > 1.0 ? 1 : 0});
        }
        return d;
    };
    const auto train = random_windows(400);
    const auto probe = random_windows(1000);
    int agree = 0, total = 0;
    for (const auto& m : {detect::ClassifierModel::knn_train(train, 10), detect::ClassifierModel::dtree_train(train, 7)}) {
        std::stringstream ss;
        m.save(ss);
        const auto back = detect::ClassifierModel::load(ss);
        for (const auto& w : probe) {
            agree += back.predict(w.values) == m.predict(w.values);
            ++total;
        }
    }
    fs::remove_all(dir);
    const bool pass = files > 0 && same == files && csv_ok && agree == total;
    return {pass, std::to_string(same) + "/" + std::to_string(files) + " reports byte-identical, 10^6-sample CSV " +
                      (csv_ok ? "identical" : "differs") + ", model predictions " + std::to_string(agree) + "/" +
                      std::to_string(total)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "ECC exhaustiveness", ecc_exhaustive},
        {2, "noiseless round trip", noiseless_round_trip},
        {3, "noise robustness", noise_suite},
        {4, "VM scenario", hvm},
        {5, "countermeasure", countermeasure},
        {6, "detector", detector},
        {7, "DSP correctness", dsp_correctness},
        {8, "determinism and formats", determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
