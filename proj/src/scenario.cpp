#include "memcovert/scenario.hpp"

#include "memcovert/backends.hpp"
#include "memcovert/channel_sim.hpp"
#include "memcovert/codec.hpp"
#include "memcovert/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace memcovert::scenario {

namespace fs = std::filesystem;
using modulation::kMiB;

namespace {

constexpr std::uint8_t kPreamble = 0xAA;

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void write_schedule_csv(const modulation::Schedule& s, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "t_us,kind,bytes,handle\n";
    for (const auto& e : s.events) {
        const char* kind = e.kind == modulation::ActuationKind::Alloc  ? "alloc"
                           : e.kind == modulation::ActuationKind::Free ? "free"
                                                                        : "hold";
        out << e.t_us << ',' << kind << ',' << e.bytes << ',' << e.handle << '\n';
    }
}

void write_decisions_csv(const demod::DemodResult& r, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "packet,start_sample,synced,window,window_start,amplitude,bit\n";
    for (std::size_t p = 0; p < r.packets.size(); ++p) {
        const auto& pkt = r.packets[p];
        for (const auto& d : pkt.decisions) {
            out << p << ',' << pkt.start_sample << ',' << pkt.synced << ',' << d.window_index << ','
                << d.start_sample << ',' << fmt("%.3f", d.amplitude_at_ft) << ',' << int(d.bit) << '\n';
        }
    }
}

MemoryTrace slice(const MemoryTrace& trace, std::int64_t from_us, std::int64_t to_us) {
    std::vector<TimedSample> out;
    for (const auto& s : trace.samples()) {
        if (s.t_us >= from_us && s.t_us < to_us) out.push_back(s);
    }
    return MemoryTrace(std::move(out), trace.nominal_period_us(), trace.meta());
}

// Transmitter, optional jammer and sampler run concurrently on this host.
MemoryTrace run_live(const modulation::Schedule& tx, const modulation::Schedule* jam,
                     std::int64_t period_us, std::int64_t duration_us) {
    backend::SystemSampler sampler;
    backend::RealActuator tx_actuator;
    backend::RealActuator jam_actuator;
    MemoryTrace trace;
    std::exception_ptr sampler_error, jam_error;
    std::thread sampling([&] {
        try {
            trace = sampler.run(duration_us, period_us);
        } catch (...) {
            sampler_error = std::current_exception();
        }
    });
    std::thread jamming;
    if (jam) {
        jamming = std::thread([&] {
            try {
                jam_actuator.execute(*jam);
            } catch (...) {
                jam_error = std::current_exception();
            }
        });
    }
    std::exception_ptr tx_error;
    try {
        tx_actuator.execute(tx);
    } catch (...) {
        tx_error = std::current_exception();
    }
    if (jamming.joinable()) jamming.join();
    sampling.join();
    for (auto& e : {tx_error, jam_error, sampler_error}) {
        if (e) std::rethrow_exception(e);
    }
    return trace;
}

std::vector<codec::Nibble> sent_nibbles(std::span<const std::uint8_t> payload) {
    return codec::to_nibbles(payload);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over the combined value.
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<std::uint8_t> parse_hex(const std::string& hex) {
    std::string digits;
    for (char c : hex) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (!std::isxdigit(static_cast<unsigned char>(c))) {
            throw ParseError(std::string("invalid hex digit '") + c + "'");
        }
        digits.push_back(c);
    }
    if (digits.size() % 2 != 0) throw ParseError("hex payload needs an even number of digits");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < digits.size(); i += 2) {
        out.push_back(static_cast<std::uint8_t>(std::stoul(digits.substr(i, 2), nullptr, 16)));
    }
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xf]);
    }
    return out;
}

std::vector<std::uint8_t> PayloadSource::resolve(std::uint64_t seed) const {
    switch (kind) {
        case Kind::Hex:
            return parse_hex(value);
        case Kind::Text:
            return {value.begin(), value.end()};
        case Kind::File: {
            std::ifstream in(value, std::ios::binary);
            if (!in) throw Error("cannot open payload file " + value);
            return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        }
        case Kind::Random: {
            std::mt19937_64 rng(seed);
            std::vector<std::uint8_t> out(random_bytes);
            for (auto& b : out) b = static_cast<std::uint8_t>(rng() & 0xff);
            return out;
        }
    }
    return {};
}

std::vector<codec::Packet> framed_packets(std::span<const std::uint8_t> payload, int preamble_packets) {
    std::vector<codec::Packet> out(static_cast<std::size_t>(std::max(0, preamble_packets)),
                                   codec::Packet{kPreamble});
    const auto body = codec::encode_message(payload);
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

ScenarioSpec ScenarioSpec::from_config(const Config& cfg) {
    ScenarioSpec s;
    s.name = cfg.get_string("scenario", "name", "");
    if (s.name.empty()) throw ParseError("scenario needs [scenario] name");
    s.description = cfg.get_string("scenario", "description", "");
    if (cfg.has("scenario", "seed")) s.seed = static_cast<std::uint64_t>(cfg.get_int("scenario", "seed", 0));
    if (const auto* meta = cfg.section("meta")) s.meta = *meta;

    const auto base = fs::path(cfg.base_dir());
    if (cfg.has("payload", "hex")) {
        s.payload = {PayloadSource::Kind::Hex, cfg.get_string("payload", "hex", ""), 0};
        parse_hex(s.payload.value);
    } else if (cfg.has("payload", "text")) {
        s.payload = {PayloadSource::Kind::Text, cfg.get_string("payload", "text", ""), 0};
    } else if (cfg.has("payload", "file")) {
        fs::path p = cfg.get_string("payload", "file", "");
        if (p.is_relative()) p = base / p;
        if (!fs::exists(p)) throw ParameterError("payload file does not exist: " + p.string());
        s.payload = {PayloadSource::Kind::File, p.string(), 0};
    } else if (cfg.has("payload", "random_bytes")) {
        const auto n = cfg.get_int("payload", "random_bytes", 0);
        if (n <= 0) throw ParameterError("random_bytes must be positive");
        s.payload = {PayloadSource::Kind::Random, "", static_cast<std::size_t>(n)};
    } else {
        throw ParseError("scenario needs a payload: hex, text, file or random_bytes");
    }
    s.preamble_packets = static_cast<int>(cfg.get_int("payload", "preamble_packets", 1));
    if (s.preamble_packets < 1) throw ParameterError("at least one preamble packet is required");

    s.modulation = modulation::ModulationParams::from_config(cfg, "modulation");
    const std::string backend = cfg.get_string("channel", "backend", "sim");
    if (backend == "sim") {
        s.backend = Backend::Sim;
    } else if (backend == "real") {
        s.backend = Backend::Real;
    } else {
        throw ParameterError("backend must be sim or real, got '" + backend + "'");
    }
    const std::int64_t default_period = s.modulation.scheme == modulation::Scheme::RzOok ? 1000 : 20000;
    s.sample_period_us = cfg.get_int("channel", "sample_period_us", default_period);
    s.lead_us = cfg.get_int("channel", "lead_ms", 500) * 1000;
    s.tail_us = cfg.get_int("channel", "tail_ms", 1000) * 1000;
    s.baseline_bytes = static_cast<std::int64_t>(cfg.get_double("channel", "baseline_mib", 2048) * kMiB);
    for (const auto& p : cfg.get_list("channel", "profiles")) {
        if (p != "none") s.profiles.push_back(p);
    }
    s.write_traces = cfg.get_bool("output", "traces", true);
    s.demod = demod::DemodParams::from_config(cfg, s.modulation, s.sample_period_us, "demod");

    s.jammer.enabled = cfg.get_bool("jammer", "enabled", false);
    if (s.jammer.enabled) {
        s.jammer.band = counter::Band::parse(cfg.get_string("jammer", "band", "1:100"));
        s.jammer.est_window_s = cfg.get_double("jammer", "est_window_s", 3.0);
        s.jammer.duty = cfg.get_double("jammer", "duty", 0.5);
        s.jammer.frequency_scale = cfg.get_double("jammer", "frequency_scale", 1.0);
        if (cfg.has("jammer", "block_mib")) {
            s.jammer.block_bytes = static_cast<std::int64_t>(cfg.get_double("jammer", "block_mib", 0) * kMiB);
        }
        if (!(s.jammer.duty > 0.0 && s.jammer.duty < 1.0)) throw ParameterError("jammer duty must lie in (0, 1)");
        if (!(s.jammer.frequency_scale > 0.0)) throw ParameterError("frequency_scale must be positive");
    }

    s.sweep.enabled = cfg.has("sweep", "profile");
    if (s.sweep.enabled) {
        s.sweep.profile = cfg.get_string("sweep", "profile", "");
        s.sweep.section = cfg.get_string("sweep", "section", "");
        s.sweep.key = cfg.get_string("sweep", "key", "");
        for (const auto& v : cfg.get_list("sweep", "values")) s.sweep.values.push_back(std::stod(v));
        s.sweep.target = cfg.get_double("sweep", "target", 0.01);
        s.sweep.duration_us = cfg.get_int("sweep", "duration_s", 600) * 1'000'000;
        if (s.sweep.values.empty() || s.sweep.key.empty()) {
            throw ParameterError("sweep needs section, key and values");
        }
    }

    if (s.backend == Backend::Sim && !s.seed) throw ParameterError("simulated scenarios must carry a seed");
    return s;
}

ScenarioSpec ScenarioSpec::load(const std::string& path) {
    return from_config(Config::load(path));
}

namespace {

std::vector<SweepPoint> run_sweep(const ScenarioSpec& spec) {
    const auto path = fs::path(channel::default_data_dir()) / "profiles" / (spec.sweep.profile + ".profile");
    Config base = Config::load(path.string());
    std::vector<SweepPoint> out;
    for (std::size_t i = 0; i < spec.sweep.values.size(); ++i) {
        Config cfg = base;
        cfg.set(spec.sweep.section, spec.sweep.key, fmt("%.17g", spec.sweep.values[i]));
        auto profile = channel::profile_from_config(cfg);
        channel::ProfileLibrary lib;
        lib.add(profile);
        const auto trace = channel::synth_background(profile.name, spec.sweep.duration_us, spec.sample_period_us,
                                                     derive_seed(*spec.seed, 1000 + i), lib);
        out.push_back({spec.sweep.values[i], demod::false_rise_rate(trace, spec.demod)});
    }
    return out;
}

RunResult run_one(const ScenarioSpec& spec, const std::string& profile, std::size_t index,
                  std::span<const std::uint8_t> payload, const fs::path& dir) {
    RunResult run;
    run.profile = profile;
    run.label = profile.empty() ? "clean" : profile;
    run.seed = spec.seed ? derive_seed(*spec.seed, index) : 0;

    const auto sent = sent_nibbles(payload);
    const auto packets = framed_packets(payload, spec.preamble_packets);
    const auto bits = codec::packets_to_bits(packets);
    const auto tx = modulation::schedule_bits(bits, spec.modulation, spec.lead_us);
    const std::int64_t duration = tx.duration_us + spec.tail_us;
    const bool artifacts = !dir.empty();
    if (artifacts) {
        fs::create_directories(dir);
        write_schedule_csv(tx, dir / "schedule.csv");
    }

    try {
        MemoryTrace trace;
        std::optional<modulation::Schedule> jam;
        const std::int64_t trigger_us =
            spec.lead_us + spec.preamble_packets * spec.modulation.packet_duration_us();

        if (spec.backend == Backend::Sim) {
            const auto& lib = channel::ProfileLibrary::builtin();
            channel::NoiseModel noise;
            std::int64_t baseline = spec.baseline_bytes;
            if (!profile.empty()) {
                noise = channel::background_model(profile, run.seed, lib);
                baseline = lib.get(profile).level_bytes;
            }
            noise.seed = run.seed;
            backend::SimMedium medium(baseline);
            medium.execute(tx);
            if (spec.jammer.enabled) {
                // Reconnaissance: the defender records the channel before
                // acting on the detector's trigger.
                const auto recon = slice(medium.sample(duration, spec.sample_period_us, noise), spec.lead_us,
                                         spec.lead_us + static_cast<std::int64_t>(spec.jammer.est_window_s * 1e6));
                counter::EstimatorOptions opts;
                opts.est_window_s = spec.jammer.est_window_s;
                run.estimate = counter::estimate_channel_frequency(recon, spec.jammer.band, opts);
                counter::JammerParams jp;
                jp.est_window_s = spec.jammer.est_window_s;
                jp.f_est_hz = run.estimate->f_est_hz * spec.jammer.frequency_scale;
                jp.block_bytes = spec.jammer.block_bytes.value_or(
                    std::clamp(static_cast<std::int64_t>(std::llround(run.estimate->amplitude_bytes)),
                               counter::kMinJamBlock, counter::kMaxJamBlock));
                jp.duty = spec.jammer.duty;
                jp.seed = derive_seed(run.seed, 77);
                jp.validate(1e6 / static_cast<double>(spec.sample_period_us));
                run.jammer = jp;
                jam = counter::jam_schedule(jp, trigger_us, duration - trigger_us);
                medium.execute(*jam);
            }
            trace = medium.sample(duration, spec.sample_period_us, noise);
        } else {
            if (spec.jammer.enabled) {
                // Live runs need a prior estimate: the jammer is planned from
                // the nominal channel rate scaled as configured.
                counter::JammerParams jp;
                jp.f_est_hz = 1e6 / static_cast<double>(spec.modulation.t_p_us()) * spec.jammer.frequency_scale;
                jp.block_bytes = spec.jammer.block_bytes.value_or(spec.modulation.block_bytes);
                jp.duty = spec.jammer.duty;
                jp.seed = derive_seed(run.seed, 77);
                run.jammer = jp;
                jam = counter::jam_schedule(jp, trigger_us, duration - trigger_us);
            }
            trace = run_live(tx, jam ? &*jam : nullptr, spec.sample_period_us, duration);
        }
        if (artifacts && spec.write_traces) {
            write_trace_file(trace, (dir / "trace.csv").string());
            metrics::emit_plot_data(trace, spec.demod, (dir / "plot.csv").string());
            if (jam) write_schedule_csv(*jam, dir / "jammer_schedule.csv");
        }

        const auto result = demod::demodulate(trace, spec.demod, spec.preamble_packets);
        run.threshold = result.threshold;
        run.diagnostic = result.diagnostic;
        run.packets_detected = result.packets.size();
        if (artifacts) write_decisions_csv(result, dir / "decisions.csv");

        std::size_t extra = 0;
        const auto slots = metrics::align_packets(result, static_cast<std::size_t>(spec.demod.packet_samples()),
                                                  static_cast<std::size_t>(spec.preamble_packets), sent.size(),
                                                  &extra);
        run.report = metrics::compute_report(sent, slots);
        run.report.extra_packets += extra;
    } catch (const Error& e) {
        run.error = e.what();
        std::vector<metrics::ReceivedSlot> none;
        run.report = metrics::compute_report(sent, none);
    }
    if (artifacts) {
        std::ofstream pk(dir / "packets.csv");
        metrics::write_packets_csv(run.report, pk);
        write_text(dir / "report.txt", metrics::format_report(run.report) +
                                           (run.error.empty() ? "" : "error=" + run.error + "\n"));
    }
    return run;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const std::string& out_dir) {
    ScenarioResult result;
    result.name = spec.name;
    const fs::path root = out_dir.empty() ? fs::path() : fs::path(out_dir) / spec.name;
    if (!root.empty()) fs::create_directories(root);

    if (spec.sweep.enabled) {
        result.sweep = run_sweep(spec);
        const auto best = std::min_element(result.sweep.begin(), result.sweep.end(), [&](const auto& a, const auto& b) {
            return std::abs(a.false_rise_rate - spec.sweep.target) < std::abs(b.false_rise_rate - spec.sweep.target);
        });
        result.sweep_choice = best->value;
        if (!root.empty()) {
            std::ostringstream csv;
            csv << "value,false_rise_rate\n";
            for (const auto& p : result.sweep) csv << fmt("%g", p.value) << ',' << fmt("%.6f", p.false_rise_rate) << '\n';
            write_text(root / "sweep.csv", csv.str());
        }
    }

    const auto payload = spec.payload.resolve(spec.seed ? derive_seed(*spec.seed, 0xfeed) : 0);
    if (payload.empty()) throw ParameterError("scenario payload is empty");
    if (!root.empty()) write_text(root / "payload.hex", to_hex(payload) + "\n");

    std::vector<std::string> profiles = spec.profiles;
    if (profiles.empty()) profiles.push_back("");
    std::vector<metrics::ChannelReport> reports;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto label = profiles[i].empty() ? std::string("clean") : profiles[i];
        auto run = run_one(spec, profiles[i], i, payload, root.empty() ? fs::path() : root / label);
        if (!run.error.empty()) result.ok = false;
        reports.push_back(run.report);
        result.runs.push_back(std::move(run));
    }
    result.aggregate = metrics::merge_reports(reports);
    if (!root.empty()) write_text(root / "report.txt", format_summary(spec, result));
    return result;
}

std::string format_summary(const ScenarioSpec& spec, const ScenarioResult& result) {
    std::ostringstream out;
    out << "scenario=" << spec.name << '\n';
    if (!spec.description.empty()) out << "description=" << spec.description << '\n';
    out << "seed=" << (spec.seed ? std::to_string(*spec.seed) : "none") << '\n';
    out << "backend=" << (spec.backend == Backend::Sim ? "sim" : "real") << '\n';
    out << "scheme=" << modulation::to_string(spec.modulation.scheme) << '\n';
    out << "data_rate_bps=" << fmt("%.4f", 4e6 / static_cast<double>(spec.modulation.packet_duration_us())) << '\n';
    for (const auto& [k, v] : spec.meta) out << "meta." << k << '=' << v << '\n';
    for (const auto& p : result.sweep) {
        out << "sweep " << spec.sweep.section << '.' << spec.sweep.key << '=' << fmt("%g", p.value)
            << " false_rise_rate=" << fmt("%.6f", p.false_rise_rate) << '\n';
    }
    if (result.sweep_choice) out << "sweep_choice=" << fmt("%g", *result.sweep_choice) << '\n';
    for (const auto& run : result.runs) {
        out << "\n[run " << run.label << "]\n";
        out << "seed=" << run.seed << '\n';
        out << "packets_detected=" << run.packets_detected << '\n';
        out << "threshold=" << fmt("%.3f", run.threshold) << '\n';
        if (run.estimate) {
            out << "jammer_estimate_hz=" << fmt("%.4f", run.estimate->f_est_hz) << '\n';
            out << "jammer_peak_to_median=" << fmt("%.3f", run.estimate->peak_to_median) << '\n';
        }
        if (run.jammer) {
            out << "jammer_frequency_hz=" << fmt("%.4f", run.jammer->f_est_hz) << '\n';
            out << "jammer_block_bytes=" << run.jammer->block_bytes << '\n';
        }
        if (!run.diagnostic.empty()) out << "diagnostic=" << run.diagnostic << '\n';
        if (!run.error.empty()) out << "error=" << run.error << '\n';
        out << metrics::format_report(run.report);
    }
    out << "\n[aggregate]\n" << metrics::format_report(result.aggregate);
    out << "status=" << (result.ok ? "ok" : "failed") << '\n';
    return out.str();
}

}  // namespace memcovert::scenario
