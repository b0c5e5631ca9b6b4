#pragma once

#include "memcovert/modulation.hpp"
#include "memcovert/trace.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace memcovert {
class Config;
}

namespace memcovert::channel {

struct GaussianNoise {
    double sigma_bytes = 0.0;
};

// Gaussian increments of standard deviation `step_bytes`, walk clamped to
// [-clamp_bytes, clamp_bytes].
struct RandomWalkNoise {
    double step_bytes = 0.0;
    double clamp_bytes = 0.0;
};

// Poisson-arriving rectangular allocations.
struct BurstNoise {
    double rate_hz = 0.0;
    std::int64_t amplitude_bytes = 0;
    std::int64_t duration_us = 0;
};

// Adds the recorded trace's deviation from its first sample, looped.
struct ReplayNoise {
    MemoryTrace trace;
};

// Random-phase pulse train, the simulated countermeasure.
struct JammerNoise {
    std::int64_t period_us = 40'000;
    std::int64_t block_bytes = 20 * modulation::kMiB;
    double duty = 0.5;
    std::int64_t start_us = 0;
    std::int64_t duration_us = 0;  // 0: until the end of the trace
};

using NoiseComponent =
    std::variant<GaussianNoise, RandomWalkNoise, BurstNoise, ReplayNoise, JammerNoise>;

struct NoiseModel {
    std::vector<NoiseComponent> components;
    std::uint64_t seed = 0;
    // Uniform +/- jitter applied to actuation event times by the simulated medium.
    std::int64_t schedule_jitter_us = 0;
};

// Same timestamps, values perturbed by the sum of all components and clamped
// at zero. Deterministic for a fixed seed.
MemoryTrace apply_noise(const MemoryTrace& trace, const NoiseModel& model);

// Shifts each event by an independent uniform offset in [-jitter, jitter],
// keeping every free strictly after its allocation.
modulation::Schedule jitter_schedule(const modulation::Schedule& schedule,
                                     std::int64_t jitter_us, std::uint64_t seed);

struct NoiseProfile {
    std::string name;
    std::string description;
    std::int64_t level_bytes = 0;
    NoiseModel model;  // seed left at 0; callers set it
};

// Profile file: top-level `name`, `description`, `level_mib`, `jitter_us`,
// then sections [gaussian], [random_walk], [burst*], [replay].
NoiseProfile profile_from_config(const Config& cfg);

class ProfileLibrary {
public:
    // Loads every *.profile file in the directory.
    static ProfileLibrary load(const std::string& directory);
    // Library shipped with the toolkit.
    static const ProfileLibrary& builtin();

    const NoiseProfile& get(const std::string& name) const;
    std::vector<std::string> names() const;
    void add(NoiseProfile profile);

private:
    std::map<std::string, NoiseProfile> profiles_;
};

MemoryTrace synth_background(const std::string& profile, std::int64_t duration_us,
                             std::int64_t period_us, std::uint64_t seed,
                             const ProfileLibrary& library = ProfileLibrary::builtin());

// Named noise model used as the additive background of a transmission.
NoiseModel background_model(const std::string& profile, std::uint64_t seed,
                            const ProfileLibrary& library = ProfileLibrary::builtin());

std::string default_data_dir();

}  // namespace memcovert::channel
