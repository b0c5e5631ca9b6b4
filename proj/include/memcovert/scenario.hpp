#pragma once

#include "memcovert/config.hpp"
#include "memcovert/countermeasure.hpp"
#include "memcovert/demod.hpp"
#include "memcovert/metrics.hpp"
#include "memcovert/modulation.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace memcovert::scenario {

enum class Backend { Sim, Real };

struct PayloadSource {
    enum class Kind { Hex, Text, File, Random };
    Kind kind = Kind::Text;
    std::string value;             // hex digits, text, or resolved file path
    std::size_t random_bytes = 0;  // Kind::Random

    std::vector<std::uint8_t> resolve(std::uint64_t seed) const;
};

std::vector<std::uint8_t> parse_hex(const std::string& hex);
std::string to_hex(std::span<const std::uint8_t> bytes);

struct JammerSpec {
    bool enabled = false;
    counter::Band band;
    double est_window_s = 3.0;
    double duty = 0.5;
    // Multiplies the estimated frequency; 10 gives the mis-tuned jammer.
    double frequency_scale = 1.0;
    std::optional<std::int64_t> block_bytes;
};

// Matched-SNR calibration: one profile key is swept over `values`, each
// value is scored by the false-rise rate of a signal-free trace, and the
// value closest to `target` is reported.
struct SweepSpec {
    bool enabled = false;
    std::string profile;
    std::string section;
    std::string key;
    std::vector<double> values;
    double target = 0.01;
    std::int64_t duration_us = 600'000'000;
};

struct ScenarioSpec {
    std::string name;
    std::string description;
    std::optional<std::uint64_t> seed;
    std::map<std::string, std::string> meta;

    PayloadSource payload;
    int preamble_packets = 1;
    modulation::ModulationParams modulation;
    demod::DemodParams demod;

    Backend backend = Backend::Sim;
    std::int64_t sample_period_us = 1000;
    std::int64_t lead_us = 500'000;
    std::int64_t tail_us = 1'000'000;
    std::int64_t baseline_bytes = 2048 * modulation::kMiB;
    // One run per profile; empty means a single noiseless run.
    std::vector<std::string> profiles;

    JammerSpec jammer;
    SweepSpec sweep;
    bool write_traces = true;

    // Throws ParseError/ParameterError on invalid specs (missing seed for a
    // simulated scenario, unreadable payload file, ...).
    static ScenarioSpec from_config(const Config& cfg);
    static ScenarioSpec load(const std::string& path);
};

struct RunResult {
    std::string label;
    std::string profile;
    std::uint64_t seed = 0;
    metrics::ChannelReport report;
    std::size_t packets_detected = 0;
    double threshold = 0.0;
    std::optional<counter::FrequencyEstimate> estimate;
    std::optional<counter::JammerParams> jammer;
    std::string diagnostic;
    std::string error;  // empty on success
};

struct SweepPoint {
    double value = 0.0;
    double false_rise_rate = 0.0;
};

struct ScenarioResult {
    std::string name;
    std::vector<RunResult> runs;
    metrics::ChannelReport aggregate;
    std::vector<SweepPoint> sweep;
    std::optional<double> sweep_choice;
    bool ok = true;
};

// Encodes, schedules, actuates or simulates, samples, demodulates, decodes
// and scores. With a non-empty out_dir every intermediate is written there;
// a failing stage is recorded in its run and the artifacts written so far
// are kept.
ScenarioResult run_scenario(const ScenarioSpec& spec, const std::string& out_dir = "");

// Deterministic plain-text summary (the scenario's report.txt).
std::string format_summary(const ScenarioSpec& spec, const ScenarioResult& result);

// Reproducible per-run seed derived from the scenario seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Packets sent for a payload: preamble copies of 10101010, then the payload.
std::vector<codec::Packet> framed_packets(std::span<const std::uint8_t> payload, int preamble_packets);

}  // namespace memcovert::scenario
