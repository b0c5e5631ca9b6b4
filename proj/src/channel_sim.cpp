#include "memcovert/channel_sim.hpp"

#include "memcovert/config.hpp"
#include "memcovert/error.hpp"

#include <algorithm>
#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <random>

namespace memcovert::channel {

using modulation::kMiB;

namespace {

std::mt19937_64 component_rng(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x6d656d63u};
    return std::mt19937_64(seq);
}

struct Adder {
    const MemoryTrace& trace;
    std::vector<double>& acc;
    std::mt19937_64& rng;

    void operator()(const GaussianNoise& g) const {
        if (g.sigma_bytes <= 0.0) return;
        std::normal_distribution<double> d(0.0, g.sigma_bytes);
        for (auto& a : acc) a += d(rng);
    }

    void operator()(const RandomWalkNoise& w) const {
        if (w.step_bytes <= 0.0) return;
        std::normal_distribution<double> d(0.0, w.step_bytes);
        double pos = 0.0;
        for (auto& a : acc) {
            pos = std::clamp(pos + d(rng), -w.clamp_bytes, w.clamp_bytes);
            a += pos;
        }
    }

    void operator()(const BurstNoise& b) const {
        if (b.rate_hz <= 0.0 || b.duration_us <= 0 || trace.empty()) return;
        const auto& s = trace.samples();
        const double t_begin = static_cast<double>(s.front().t_us - b.duration_us);
        const double t_end = static_cast<double>(s.back().t_us) + 1.0;
        std::exponential_distribution<double> gap(b.rate_hz / 1e6);
        // Difference array over sample indices.
        std::vector<double> diff(acc.size() + 1, 0.0);
        for (double t = t_begin + gap(rng); t < t_end; t += gap(rng)) {
            const auto on = static_cast<std::int64_t>(std::ceil(t));
            const auto off = on + b.duration_us;
            auto first = std::lower_bound(s.begin(), s.end(), on,
                                          [](const TimedSample& x, std::int64_t v) { return x.t_us < v; });
            auto last = std::lower_bound(s.begin(), s.end(), off,
                                         [](const TimedSample& x, std::int64_t v) { return x.t_us < v; });
            diff[first - s.begin()] += static_cast<double>(b.amplitude_bytes);
            diff[last - s.begin()] -= static_cast<double>(b.amplitude_bytes);
        }
        double running = 0.0;
        for (std::size_t i = 0; i < acc.size(); ++i) {
            running += diff[i];
            acc[i] += running;
        }
    }

    void operator()(const ReplayNoise& r) const {
        if (r.trace.empty()) return;
        const auto& rs = r.trace.samples();
        const double origin = static_cast<double>(rs.front().used_bytes);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += static_cast<double>(rs[i % rs.size()].used_bytes) - origin;
        }
    }

    void operator()(const JammerNoise& j) const {
        if (trace.empty()) return;
        const auto end = trace.samples().back().t_us + 1;
        const auto duration = j.duration_us > 0 ? j.duration_us : std::max<std::int64_t>(0, end - j.start_us);
        auto schedule = modulation::random_phase_pulses(j.start_us, duration, j.period_us,
                                                        j.block_bytes, j.duty, rng());
        std::size_t i = 0;
        for (const auto& sample : trace.samples()) {
            acc[i++] += static_cast<double>(modulation::level_at(schedule, sample.t_us));
        }
    }
};

double mib(const Config& cfg, const std::string& section, const std::string& key) {
    return cfg.get_double(section, key, 0.0) * static_cast<double>(kMiB);
}

}  // namespace

MemoryTrace apply_noise(const MemoryTrace& trace, const NoiseModel& model) {
    if (model.components.empty()) return trace;
    std::vector<double> acc(trace.size(), 0.0);
    for (std::size_t c = 0; c < model.components.size(); ++c) {
        auto rng = component_rng(model.seed, c);
        std::visit(Adder{trace, acc, rng}, model.components[c]);
    }
    std::vector<std::int64_t> values = trace.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = static_cast<double>(values[i]) + std::round(acc[i]);
        values[i] = v <= 0.0 ? 0 : static_cast<std::int64_t>(v);
    }
    return trace.with_values(values);
}

modulation::Schedule jitter_schedule(const modulation::Schedule& schedule, std::int64_t jitter_us,
                                     std::uint64_t seed) {
    if (jitter_us <= 0) return schedule;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<std::int64_t> d(-jitter_us, jitter_us);
    modulation::Schedule out = schedule;
    std::map<std::uint32_t, std::int64_t> alloc_time;
    for (auto& e : out.events) {
        e.t_us = std::max<std::int64_t>(0, e.t_us + d(rng));
        if (e.kind == modulation::ActuationKind::Alloc) {
            alloc_time[e.handle] = e.t_us;
        } else if (e.kind == modulation::ActuationKind::Free) {
            auto it = alloc_time.find(e.handle);
            if (it != alloc_time.end()) e.t_us = std::max(e.t_us, it->second + 1);
        }
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const auto& a, const auto& b) { return a.t_us < b.t_us; });
    return out;
}

NoiseProfile profile_from_config(const Config& cfg) {
    NoiseProfile p;
    p.name = cfg.get_string("", "name", "");
    if (p.name.empty()) throw ParseError("profile without a name");
    p.description = cfg.get_string("", "description", "");
    p.level_bytes = static_cast<std::int64_t>(mib(cfg, "", "level_mib"));
    p.model.schedule_jitter_us = cfg.get_int("", "jitter_us", 0);
    for (const auto& section : cfg.sections()) {
        if (section == "gaussian") {
            p.model.components.push_back(GaussianNoise{mib(cfg, section, "sigma_mib")});
        } else if (section == "random_walk") {
            p.model.components.push_back(
                RandomWalkNoise{mib(cfg, section, "step_mib"), mib(cfg, section, "clamp_mib")});
        } else if (section.rfind("burst", 0) == 0) {
            p.model.components.push_back(BurstNoise{
                cfg.get_double(section, "rate_hz", 0.0),
                static_cast<std::int64_t>(mib(cfg, section, "amplitude_mib")),
                cfg.get_int(section, "duration_ms", 0) * 1000});
        } else if (section == "replay") {
            std::filesystem::path path = cfg.get_string(section, "trace", "");
            if (path.is_relative() && !cfg.base_dir().empty()) path = cfg.base_dir() / path;
            p.model.components.push_back(ReplayNoise{read_trace_file(path.string())});
        } else if (!section.empty()) {
            throw ParseError("profile " + p.name + ": unknown section [" + section + "]");
        }
    }
    return p;
}

ProfileLibrary ProfileLibrary::load(const std::string& directory) {
    ProfileLibrary lib;
    if (!std::filesystem::is_directory(directory)) {
        throw Error("profile directory not found: " + directory);
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(directory)) {
        if (entry.path().extension() == ".profile") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) lib.add(profile_from_config(Config::load(f.string())));
    return lib;
}

const ProfileLibrary& ProfileLibrary::builtin() {
    static const ProfileLibrary lib = load(default_data_dir() + "/profiles");
    return lib;
}

const NoiseProfile& ProfileLibrary::get(const std::string& name) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end()) {
        std::string known;
        for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
        throw ParameterError("unknown noise profile '" + name + "'; known profiles: " + known);
    }
    return it->second;
}

std::vector<std::string> ProfileLibrary::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : profiles_) out.push_back(name);
    return out;
}

void ProfileLibrary::add(NoiseProfile profile) {
    auto name = profile.name;
    profiles_[name] = std::move(profile);
}

MemoryTrace synth_background(const std::string& profile, std::int64_t duration_us,
                             std::int64_t period_us, std::uint64_t seed,
                             const ProfileLibrary& library) {
    const auto& p = library.get(profile);
    if (period_us <= 0) throw ParameterError("period must be positive");
    const auto n = static_cast<std::size_t>(std::max<std::int64_t>(0, duration_us / period_us));
    std::vector<std::int64_t> flat(n, p.level_bytes);
    auto base = MemoryTrace::from_values(flat, period_us, {{"profile", profile}, {"label", "0"}});
    NoiseModel model = p.model;
    model.seed = seed;
    return apply_noise(base, model);
}

NoiseModel background_model(const std::string& profile, std::uint64_t seed,
                            const ProfileLibrary& library) {
    NoiseModel model = library.get(profile).model;
    model.seed = seed;
    return model;
}

std::string default_data_dir() {
    if (const char* env = std::getenv("MEMCOVERT_DATA_DIR")) return env;
    return MEMCOVERT_DATA_DIR;
}

}  // namespace memcovert::channel
