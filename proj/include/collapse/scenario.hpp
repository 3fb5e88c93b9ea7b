#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "collapse/harness.hpp"
#include "collapse/pipeline.hpp"

namespace collapse {

/// Builder parameter value: real, integer or 3-vector.
using ParamValue = std::variant<double, std::int64_t, Vec3>;

struct ParameterSpec {
    std::string name;
    ParamValue default_value;
};

/// Parameters accepted by a builder, in canonical order. Throws
/// UnknownScenario for an unknown builder name.
const std::vector<ParameterSpec> &builder_parameters(std::string_view builder);

struct ParticleDecl {
    std::string name;
    ParticleType type = ParticleType::electron;
    /// Own path table; empty when the particle is a collection member.
    std::vector<PathRow> rows;

    friend bool operator==(const ParticleDecl &, const ParticleDecl &) = default;
};

struct CollectionDecl {
    std::string name;
    std::vector<std::string> members;
    std::vector<PathRow> rows;

    friend bool operator==(const CollectionDecl &, const CollectionDecl &) = default;
};

struct EngineSettings {
    int cos_bins = 16;
    int phi_bins = 4;
    double cutoff = 0.999;
    int nodes = 64;
    /// Unset means channels are drawn from channel_weights.
    std::optional<Channel> channel;
    Vec3 spin_axis = Vec3::UnitZ();
    double tolerance = 1e-6;
    bool uniform_fallback = false;

    friend bool operator==(const EngineSettings &, const EngineSettings &) = default;
};

struct HarnessSettings {
    std::uint64_t trials = 1000;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;

    friend bool operator==(const HarnessSettings &, const HarnessSettings &) = default;
};

struct TestSettings {
    double alpha = 0.01;
    std::vector<ExpectedBin> chi_square;
    bool monotone = false;
    std::optional<double> correlation;
    double correlation_tolerance = 0.0;

    friend bool operator==(const TestSettings &, const TestSettings &) = default;
};

struct SweepSettings {
    std::string parameter;
    std::vector<double> values;

    friend bool operator==(const SweepSettings &, const SweepSettings &) = default;
};

/// Parsed scenario file. Only explicitly given builder parameters are kept.
struct ScenarioFile {
    std::string name;
    std::string builder = "custom";
    std::map<std::string, ParamValue> params;
    std::vector<std::string> measure;
    std::vector<ParticleDecl> particles;
    std::vector<CollectionDecl> collections;
    std::vector<Stage> stages;
    std::optional<Detector> detector;
    EngineSettings engine;
    Constants constants;
    HarnessSettings harness;
    TestSettings tests;
    std::optional<SweepSettings> sweep;

    friend bool operator==(const ScenarioFile &, const ScenarioFile &) = default;
};

/// Throws ParseError (line, column) on syntax errors and ValidationError on
/// violated constraints.
ScenarioFile parse_scenario(std::string_view text);

/// Canonical text; parse_scenario(render_scenario(s)) == s.
std::string render_scenario(const ScenarioFile &s);

/// Reads and parses a file; a missing file is a ValidationError.
ScenarioFile load_scenario(const std::filesystem::path &path);

/// Copy with builder parameter `name` set to `value`; integer parameters need
/// an integral value, vector parameters cannot be swept.
ScenarioFile with_parameter(const ScenarioFile &s, const std::string &name, double value);

/// Effective value of a builder parameter (explicit or default).
ParamValue parameter(const ScenarioFile &s, const std::string &name);

InteractionConfig interaction_config(const ScenarioFile &s);

/// Runnable trials for the scenario. Throws UnknownScenario for an unknown
/// builder and ValidationError for inconsistent declarations.
Experiment compile_experiment(const ScenarioFile &s);

}  // namespace collapse
