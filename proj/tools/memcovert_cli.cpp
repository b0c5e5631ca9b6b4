#include "memcovert/backends.hpp"
#include "memcovert/channel_sim.hpp"
#include "memcovert/codec.hpp"
#include "memcovert/config.hpp"
#include "memcovert/countermeasure.hpp"
#include "memcovert/demod.hpp"
#include "memcovert/detector.hpp"
#include "memcovert/error.hpp"
#include "memcovert/metrics.hpp"
#include "memcovert/modulation.hpp"
#include "memcovert/scenario.hpp"
#include "memcovert/trace.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace memcovert;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Globals {
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::string config_path;
    std::string out_dir = ".";
};

Config load_config(const Globals& g) {
    return g.config_path.empty() ? Config() : Config::load(g.config_path);
}

fs::path out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

struct PayloadArgs {
    std::string hex, text, file;
    std::size_t random_bytes = 0;

    void add(CLI::App* cmd) {
        auto* group = cmd->add_option_group("payload");
        group->add_option("--hex", hex, "payload as hex digits");
        group->add_option("--text", text, "payload as literal text");
        group->add_option("--file", file, "payload file");
        group->add_option("--random-bytes", random_bytes, "random payload of this length (uses --seed)");
        group->require_option(1);
    }

    std::vector<std::uint8_t> resolve(std::uint64_t seed) const {
        scenario::PayloadSource src;
        if (!hex.empty()) {
            src.kind = scenario::PayloadSource::Kind::Hex;
            src.value = hex;
        } else if (!text.empty()) {
            src.kind = scenario::PayloadSource::Kind::Text;
            src.value = text;
        } else if (!file.empty()) {
            src.kind = scenario::PayloadSource::Kind::File;
            src.value = file;
        } else {
            src.kind = scenario::PayloadSource::Kind::Random;
            src.random_bytes = random_bytes;
        }
        return src.resolve(seed);
    }
};

void write_schedule(const modulation::Schedule& s, const fs::path& path) {
    std::ofstream out(path);
    out << "t_us,kind,bytes,handle\n";
    for (const auto& e : s.events) {
        const char* kind = e.kind == modulation::ActuationKind::Alloc ? "alloc"
                           : e.kind == modulation::ActuationKind::Free ? "free"
                                                                        : "hold";
        out << e.t_us << ',' << kind << ',' << e.bytes << ',' << e.handle << '\n';
    }
}

std::string printable(std::span<const std::uint8_t> bytes) {
    std::string s;
    for (auto b : bytes) s.push_back(b >= 0x20 && b < 0x7f ? static_cast<char>(b) : '.');
    return s;
}

void print_jitter(const backend::ExecutionReport& r) {
    std::printf("events=%zu/%zu jitter_p50_us=%.1f jitter_p95_us=%.1f jitter_max_us=%.1f peak_bytes=%lld\n",
                r.events_executed, r.events_total, r.jitter_p50_us, r.jitter_p95_us, r.jitter_max_us,
                static_cast<long long>(r.peak_bytes));
    if (r.aborted) std::printf("aborted=%s\n", r.abort_reason.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    CLI::App app{"memory-usage covert channel toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option_function<std::uint64_t>(
           "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "seed for simulated runs")
        ->default_val(1);
    app.add_option("--config", g.config_path, "key=value config with [modulation]/[demod] sections");
    app.add_option("--out-dir", g.out_dir, "directory for written artifacts");

    // send
    auto* send = app.add_subcommand("send", "encode a payload and modulate it through the memory channel");
    PayloadArgs send_payload;
    send_payload.add(send);
    int send_preamble = 1;
    bool send_dry = false, send_faithful = false;
    std::int64_t send_lead_ms = 0;
    send->add_option("--preamble", send_preamble, "number of 10101010 calibration packets")->default_val(1);
    send->add_option("--lead-ms", send_lead_ms, "delay before the first pulse")->default_val(0);
    send->add_flag("--dry-run", send_dry, "write the schedule without allocating");
    send->add_flag("--faithful-alg1", send_faithful, "write and copy the whole block on every allocation");

    // sample
    auto* sample = app.add_subcommand("sample", "record used memory to a trace CSV");
    double sample_duration_s = 10.0;
    std::int64_t sample_period_us = 1000;
    std::string sample_meminfo = "/proc/meminfo", sample_output = "trace.csv";
    sample->add_option("--duration", sample_duration_s, "seconds")->default_val(10.0);
    sample->add_option("--period-us", sample_period_us, "sampling period")->default_val(1000);
    sample->add_option("--meminfo", sample_meminfo, "meminfo source")->default_val("/proc/meminfo");
    sample->add_option("--output", sample_output, "trace file name under --out-dir")->default_val("trace.csv");

    // demod
    auto* dem = app.add_subcommand("demod", "recover a payload from a trace");
    std::string dem_trace, dem_expect;
    int dem_preamble = 1;
    dem->add_option("--trace", dem_trace, "trace CSV")->required()->check(CLI::ExistingFile);
    dem->add_option("--preamble", dem_preamble, "calibration packets at the start")->default_val(1);
    dem->add_option("--expect-hex", dem_expect, "ground-truth payload for BER/PER");

    // simulate
    auto* sim = app.add_subcommand("simulate", "transmit a payload over the simulated channel");
    PayloadArgs sim_payload;
    sim_payload.add(sim);
    std::string sim_profile = "none";
    int sim_preamble = 1;
    sim->add_option("--profile", sim_profile, "background profile name or 'none'")->default_val("none");
    sim->add_option("--preamble", sim_preamble, "calibration packets")->default_val(1);

    // detect
    auto* det = app.add_subcommand("detect", "covert-channel detector");
    det->require_subcommand(1);
    auto* det_train = det->add_subcommand("train", "train a classifier");
    std::string train_dataset, train_kind = "knn", train_model = "model.txt";
    int train_k = 10, train_depth = 7;
    std::size_t train_traces = 70;
    double train_fraction = 0.8;
    det_train->add_option("--dataset", train_dataset, "dataset CSV (synthesized when omitted)");
    det_train->add_option("--synth-traces", train_traces, "traces per class for the synthetic corpus")
        ->default_val(70);
    det_train->add_option("--kind", train_kind, "knn or dt")->check(CLI::IsMember({"knn", "dt"}));
    det_train->add_option("--k", train_k, "neighbours")->default_val(10);
    det_train->add_option("--depth", train_depth, "maximum tree depth")->default_val(7);
    det_train->add_option("--train-fraction", train_fraction, "share used for training")->default_val(0.8);
    det_train->add_option("--model", train_model, "model file name under --out-dir")->default_val("model.txt");

    auto* det_eval = det->add_subcommand("eval", "score a model on a dataset");
    std::string eval_model, eval_dataset;
    det_eval->add_option("--model", eval_model, "model file")->required()->check(CLI::ExistingFile);
    det_eval->add_option("--dataset", eval_dataset, "dataset CSV")->required()->check(CLI::ExistingFile);

    auto* det_run = det->add_subcommand("run", "monitor a trace or the live system");
    std::string run_model, run_trace;
    bool run_live = false;
    double run_duration_s = 60.0;
    std::int64_t run_period_us = 1000;
    int run_m = 3;
    det_run->add_option("--model", run_model, "model file")->required()->check(CLI::ExistingFile);
    auto* run_src = det_run->add_option_group("source");
    run_src->add_option("--trace", run_trace, "recorded trace")->check(CLI::ExistingFile);
    run_src->add_flag("--live", run_live, "sample /proc/meminfo");
    run_src->require_option(1);
    det_run->add_option("--duration", run_duration_s, "seconds (live)")->default_val(60.0);
    det_run->add_option("--period-us", run_period_us, "sampling period (live)")->default_val(1000);
    det_run->add_option("--consecutive", run_m, "positive windows needed for an alert")->default_val(3);

    // jam
    auto* jm = app.add_subcommand("jam", "estimate the channel frequency and jam it");
    std::string jam_trace, jam_band = "1:100";
    bool jam_live = false;
    double jam_duration_s = 30.0, jam_est_s = 3.0, jam_duty = 0.5;
    std::int64_t jam_period_us = 1000;
    auto* jam_src = jm->add_option_group("source");
    jam_src->add_option("--trace", jam_trace, "trace to estimate from")->check(CLI::ExistingFile);
    jam_src->add_flag("--live", jam_live, "estimate from and jam the live system");
    jam_src->require_option(1);
    jm->add_option("--band", jam_band, "search band lo:hi in Hz")->default_val("1:100");
    jm->add_option("--duration", jam_duration_s, "jamming time in seconds")->default_val(30.0);
    jm->add_option("--est-window", jam_est_s, "estimation window in seconds")->default_val(3.0);
    jm->add_option("--duty", jam_duty, "high fraction of each jamming period")->default_val(0.5);
    jm->add_option("--period-us", jam_period_us, "sampling period for --live")->default_val(1000);

    // report
    auto* rep = app.add_subcommand("report", "BER/PER of a received payload against the sent one");
    std::string rep_sent, rep_received;
    rep->add_option("--sent-hex", rep_sent, "ground truth")->required();
    rep->add_option("--received-hex", rep_received, "recovered payload")->required();

    // scenario
    auto* scn = app.add_subcommand("scenario", "scenario files");
    scn->require_subcommand(1);
    auto* scn_run = scn->add_subcommand("run", "run a scenario file");
    std::string scn_file;
    scn_run->add_option("file", scn_file, "scenario file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        const Config cfg = load_config(g);

        if (*send) {
            const auto mod = modulation::ModulationParams::from_config(cfg);
            mod.validate();
            const auto payload = send_payload.resolve(g.seed);
            const auto packets = scenario::framed_packets(payload, send_preamble);
            const auto bits = codec::packets_to_bits(packets);
            const auto sched = modulation::schedule_bits(bits, mod, send_lead_ms * 1000);
            std::printf("packets=%s\n", codec::to_bit_string(packets).c_str());
            write_schedule(sched, out_path(g, "schedule.csv"));
            if (send_dry) return 0;
            backend::RealActuatorOptions opts;
            opts.faithful = send_faithful;
            opts.stop = &g_stop;
            backend::RealActuator act(opts);
            const auto r = act.execute(sched);
            print_jitter(r);
            return r.aborted ? 1 : 0;
        }

        if (*sample) {
            backend::SystemSampler sampler(sample_meminfo);
            TraceBuilder builder(sample_period_us);
            sampler.stream(static_cast<std::int64_t>(sample_duration_s * 1e6), sample_period_us,
                           [&](const TimedSample& s) { builder.append(s.t_us, s.used_bytes); }, &g_stop);
            const auto trace = std::move(builder).build();
            write_trace_file(trace, out_path(g, sample_output).string());
            std::printf("samples=%zu\n", trace.size());
            return 0;
        }

        if (*dem) {
            const auto trace = read_trace_file(dem_trace);
            const auto mod = modulation::ModulationParams::from_config(cfg);
            const auto params = demod::DemodParams::from_config(cfg, mod, trace.nominal_period_us());
            const auto result = demod::demodulate(trace, params, dem_preamble);
            std::vector<codec::Packet> payload_packets;
            for (std::size_t i = static_cast<std::size_t>(dem_preamble); i < result.packets.size(); ++i)
                payload_packets.push_back(result.packets[i].packet);
            const auto decoded = codec::decode_packets(payload_packets);
            std::printf("threshold=%.3f\npackets=%zu\n", result.threshold, result.packets.size());
            if (!result.diagnostic.empty()) std::printf("diagnostic=%s\n", result.diagnostic.c_str());
            std::printf("payload_hex=%s\npayload_ascii=%s\n", scenario::to_hex(decoded.payload).c_str(),
                        printable(decoded.payload).c_str());
            {
                std::ofstream out(out_path(g, "decisions.csv"));
                out << "packet,start_sample,synced,window,amplitude,bit\n";
                for (std::size_t p = 0; p < result.packets.size(); ++p)
                    for (const auto& d : result.packets[p].decisions)
                        out << p << ',' << result.packets[p].start_sample << ','
                            << (result.packets[p].synced ? 1 : 0) << ',' << d.window_index << ','
                            << d.amplitude_at_ft << ',' << int(d.bit) << '\n';
            }
            if (!dem_expect.empty()) {
                const auto sent = codec::to_nibbles(scenario::parse_hex(dem_expect));
                std::size_t extra = 0;
                const auto slots = metrics::align_packets(result, static_cast<std::size_t>(params.packet_samples()),
                                                          static_cast<std::size_t>(dem_preamble), sent.size(), &extra);
                auto report = metrics::compute_report(sent, slots);
                report.extra_packets += extra;
                std::fputs(metrics::format_report(report).c_str(), stdout);
                std::ofstream pk(out_path(g, "packets.csv"));
                metrics::write_packets_csv(report, pk);
            }
            return 0;
        }

        if (*sim) {
            if (!g.seed_set) throw ParameterError("simulate needs --seed");
            Config c = cfg;
            c.set("scenario", "name", "simulate");
            c.set("scenario", "seed", std::to_string(g.seed));
            c.set("channel", "backend", "sim");
            c.set("channel", "profiles", sim_profile);
            c.set("payload", "hex", scenario::to_hex(sim_payload.resolve(g.seed)));
            c.set("payload", "preamble_packets", std::to_string(sim_preamble));
            const auto spec = scenario::ScenarioSpec::from_config(c);
            const auto result = scenario::run_scenario(spec, g.out_dir);
            std::fputs(scenario::format_summary(spec, result).c_str(), stdout);
            return result.ok ? 0 : 1;
        }

        if (*det_train) {
            detect::Dataset data;
            if (!train_dataset.empty()) {
                data = detect::read_dataset_file(train_dataset);
            } else {
                detect::CorpusOptions copts;
                copts.traces_per_class = train_traces;
                copts.seed = g.seed;
                detect::DatasetOptions dopts;
                dopts.seed = g.seed;
                data = detect::build_dataset(detect::synthesize_corpus(copts), dopts);
                detect::write_dataset_file(data, out_path(g, "dataset.csv").string());
            }
            auto [train, test] = detect::split_dataset(data, train_fraction, g.seed);
            auto model = train_kind == "knn" ? detect::ClassifierModel::knn_train(train, train_k)
                                             : detect::ClassifierModel::dtree_train(train, train_depth);
            char hash[32];
            std::snprintf(hash, sizeof hash, "%016llx",
                          static_cast<unsigned long long>(detect::dataset_hash(train)));
            model.set_metadata("corpus_hash", hash);
            model.save_file(out_path(g, train_model).string());
            detect::write_dataset_file(test, out_path(g, "heldout.csv").string());
            std::puts(detect::format_eval(model.describe(), detect::evaluate(model, test)).c_str());
            return 0;
        }

        if (*det_eval) {
            const auto model = detect::ClassifierModel::load_file(eval_model);
            const auto data = detect::read_dataset_file(eval_dataset);
            std::puts(detect::format_eval(model.describe(), detect::evaluate(model, data)).c_str());
            return 0;
        }

        if (*det_run) {
            const auto model = detect::ClassifierModel::load_file(run_model);
            detect::MonitorOptions mo;
            mo.consecutive_for_alert = run_m;
            auto print = [](const detect::MonitorEvent& e) {
                std::printf("t_us=%lld prediction=%d mean=%.0f min=%.0f max=%.0f%s\n",
                            static_cast<long long>(e.t_us), e.prediction, e.mean_bytes, e.min_bytes, e.max_bytes,
                            e.alert ? " ALERT" : "");
                std::fflush(stdout);
            };
            detect::MonitorLog log;
            if (run_live) {
                backend::SystemSampler sampler;
                log = detect::run_monitor(sampler, model, static_cast<std::int64_t>(run_duration_s * 1e6),
                                          run_period_us, mo, print, &g_stop);
            } else {
                log = detect::monitor_trace(read_trace_file(run_trace), model, mo);
                for (const auto& e : log.events) print(e);
            }
            std::printf("windows=%zu alerts=%zu gaps=%zu dropped=%zu\n", log.events.size(), log.alerts.size(),
                        log.gaps, log.dropped);
            return 0;
        }

        if (*jm) {
            const auto band = counter::Band::parse(jam_band);
            counter::EstimatorOptions eo;
            eo.est_window_s = jam_est_s;
            MemoryTrace trace;
            if (jam_live) {
                backend::SystemSampler sampler;
                trace = sampler.run(static_cast<std::int64_t>(jam_est_s * 1e6), jam_period_us);
            } else {
                trace = read_trace_file(jam_trace);
            }
            const auto est = counter::estimate_channel_frequency(trace, band, eo);
            auto params = counter::plan_jammer(trace, band, eo, g.seed);
            params.duty = jam_duty;
            params.validate(trace.sample_rate_hz());
            std::printf("f_est_hz=%.4f peak_to_median=%.3f block_bytes=%lld duty=%.2f\n", est.f_est_hz,
                        est.peak_to_median, static_cast<long long>(params.block_bytes), params.duty);
            const auto duration = static_cast<std::int64_t>(jam_duration_s * 1e6);
            write_schedule(counter::jam_schedule(params, 0, duration), out_path(g, "jammer_schedule.csv"));
            if (!jam_live) return 0;
            backend::RealActuatorOptions opts;
            opts.stop = &g_stop;
            backend::RealActuator act(opts);
            const auto r = counter::jam(act, params, 0, duration);
            print_jitter(r);
            return r.aborted ? 1 : 0;
        }

        if (*rep) {
            const auto sent = codec::to_nibbles(scenario::parse_hex(rep_sent));
            const auto received = codec::to_nibbles(scenario::parse_hex(rep_received));
            const auto report = metrics::compute_report(sent, received);
            std::fputs(metrics::format_report(report).c_str(), stdout);
            std::ofstream pk(out_path(g, "packets.csv"));
            metrics::write_packets_csv(report, pk);
            return 0;
        }

        if (*scn_run) {
            const auto spec = scenario::ScenarioSpec::load(scn_file);
            const auto result = scenario::run_scenario(spec, g.out_dir);
            std::fputs(scenario::format_summary(spec, result).c_str(), stdout);
            return result.ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
