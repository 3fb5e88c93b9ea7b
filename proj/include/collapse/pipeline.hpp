#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "collapse/engine.hpp"

namespace collapse {

/// Inhomogeneous magnetic field. A spin-1/2 entry is decomposed along
/// `axis`; projection r = +-1 is kicked by +r * gradient_strength along the
/// axis with amplitude sqrt(match_probability) and the other way with
/// sqrt(1 - match_probability). Spin along the axis and position are kept.
struct FieldObject {
    Vec3 axis = Vec3::UnitZ();
    /// Momentum transfer per kick, MeV.
    double gradient_strength = 1.0;
    double match_probability = 1.0;
    /// Lower bound on the amplitude modulus of the matching deflection.
    double peak_threshold = 0.999;

    void validate() const;
    /// Exit rows for one definite entry state.
    std::vector<PathRow> project(const PathState &entry) const;

    friend bool operator==(const FieldObject &, const FieldObject &) = default;
};

/// Deterministic momentum-to-position map: the particle moves by
/// lever * (p . axis) * axis.
struct ScreenObject {
    Vec3 axis = Vec3::UnitZ();
    double lever = 1.0;

    void validate() const;
    std::vector<PathRow> project(const PathState &entry) const;

    friend bool operator==(const ScreenObject &, const ScreenObject &) = default;
};

using Stage = std::variant<FieldObject, ScreenObject>;

/// Open interval (lo, hi) of the position coordinate along the detector axis.
struct DetectorBin {
    std::string label;
    double lo;
    double hi;

    friend bool operator==(const DetectorBin &, const DetectorBin &) = default;
};

struct Detector {
    Vec3 axis = Vec3::UnitZ();
    std::vector<DetectorBin> bins;

    /// Throws ValidationError on empty, overlapping or unlabeled bins.
    void validate() const;
    std::optional<std::size_t> bin_of(const Vec3 &position) const;

    friend bool operator==(const Detector &, const Detector &) = default;
};

struct Apparatus {
    std::vector<Stage> stages;
    Detector detector;
    /// Grid, quadrature and force settings shared by the stages.
    InteractionConfig config;

    void validate() const;
};

/// Definite values observed at one stage.
struct StageOutcome {
    Vec3 position = Vec3::Zero();
    PathState entry_state;
    Channel channel = Channel::elastic;

    friend bool operator==(const StageOutcome &, const StageOutcome &) = default;
};

/// Holds definite values and draws only; amplitudes never leave the registry.
struct MeasurementRecord {
    std::vector<StageOutcome> stages;
    std::size_t detector_bin = 0;
    std::string detector_label;
    PathState final_state;
    std::uint64_t seed = 0;
    std::vector<TraceEntry> draws;

    friend bool operator==(const MeasurementRecord &, const MeasurementRecord &) = default;
};

struct MeasurementResult {
    MeasurementRecord record;
    /// The measured particle after readout, in a definite state.
    ParticleId particle;
};

/// Runs every stage through run_interaction, then reads the detector with one
/// readout draw. Throws NoInteraction when a stage has no partner and
/// DetectorMiss when the final position lies outside every bin.
MeasurementResult run_measurement(const Apparatus &apparatus, ParticleId input, EntanglementRegistry &registry,
                                  Rng &rng);

struct SingleParticleSetup {
    ParticleType type = ParticleType::electron;
    std::vector<std::pair<PathState, Amplitude>> paths;
    Apparatus apparatus;
};

/// Particle at rest at the origin in spin state `input`, a field stage along
/// `axis`, a screen, and a two-bin detector: "down" (-inf, 0), "up" (0, inf).
SingleParticleSetup stern_gerlach_scenario(const Spin &input, const Vec3 &axis, double strength);

/// `repetitions` field stages of per-stage match probability `q` on a spin-up
/// input, then a screen. Only runs whose kicks all agree reach a bin
/// ("up" or "down"); the rest miss the detector.
SingleParticleSetup repeated_field_scenario(int repetitions, double q, const Vec3 &axis, double strength);

struct EprSetup {
    std::vector<PathRow> rows;
    Apparatus a;
    Apparatus b;
};

/// Equal-amplitude {(up, down), (down, up)} table along `axis` for particles
/// sitting at `position_a` and `position_b`.
std::vector<PathRow> anticorrelated_table(const Vec3 &axis, const Vec3 &position_a, const Vec3 &position_b);

/// Stern-Gerlach apparatus for each member of a two-member spin table. Each
/// apparatus axis must equal the spin axis its member carries in every row.
EprSetup epr_scenario(std::vector<PathRow> rows, const Vec3 &axis_a, const Vec3 &axis_b, double strength = 1.0);

struct EprOutcome {
    MeasurementRecord a;
    MeasurementRecord b;
    bool b_first = false;
};

/// Registers the table as electrons and measures both members in the given
/// order within one registry.
EprOutcome run_epr(const EprSetup &setup, bool b_first, EntanglementRegistry &registry, Rng &rng);

}  // namespace collapse
