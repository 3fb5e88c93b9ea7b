#include "collapse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

void require_unit(const Vec3 &axis, const char *what) {
    if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > 1e-12) {
        throw ValidationError(std::string(what) + " axis must be a unit vector");
    }
}

/// Pseudo-particle standing in for the apparatus, with positional support
/// equal to the measured particle's so it always qualifies as partner.
std::vector<std::pair<PathState, Amplitude>> mirrored_support(const EntanglementRegistry &registry, ParticleId id) {
    const ParticleWave &wave = registry.particle(id);
    std::vector<std::pair<PathState, Amplitude>> paths;
    for (const MarginalEntry &e :
         marginal_probabilities(registry.collection(wave.collection), wave.member_index, ComponentKind::position)) {
        if (e.probability > 0.0) {
            paths.emplace_back(PathState({e.value}), std::sqrt(e.probability));
        }
    }
    return paths;
}

struct StageModel {
    ParticleType apparatus_type;
    std::function<std::vector<PathRow>(const PathState &)> project;
};

StageModel model_of(const Stage &stage) {
    if (const auto *field = std::get_if<FieldObject>(&stage)) {
        return {ParticleType::photon, [field = *field](const PathState &s) { return field.project(s); }};
    }
    const auto &screen = std::get<ScreenObject>(stage);
    return {ParticleType::electron, [screen](const PathState &s) { return screen.project(s); }};
}

Amplitude projection_onto(int r, const Vec3 &axis, const Spin &spin) {
    if (spin.axis == axis) {
        return spin.twice_projection == r ? 1.0 : 0.0;
    }
    if (spin.axis == -axis) {
        return spin.twice_projection == -r ? 1.0 : 0.0;
    }
    return spin_overlap({r, axis}, spin);
}

Apparatus stern_gerlach_apparatus(const Vec3 &axis, double strength) {
    Apparatus a;
    a.stages = {FieldObject{axis, strength}, ScreenObject{axis, 1.0}};
    const double inf = std::numeric_limits<double>::infinity();
    a.detector = {axis, {{"down", -inf, 0.0}, {"up", 0.0, inf}}};
    return a;
}

}  // namespace

void FieldObject::validate() const {
    require_unit(axis, "field");
    if (!(gradient_strength > 0.0) || !std::isfinite(gradient_strength)) {
        throw ValidationError("field gradient strength must be positive and finite");
    }
    if (!(match_probability >= 0.0 && match_probability <= 1.0)) {
        throw ValidationError("field match probability must lie in [0, 1]");
    }
    if (!(peak_threshold > 0.0 && peak_threshold <= 1.0)) {
        throw ValidationError("field peak threshold must lie in (0, 1]");
    }
    if (std::sqrt(match_probability) < peak_threshold) {
        throw ValidationError("field mapping amplitude sqrt(" + std::to_string(match_probability) +
                              ") is below the peak threshold " + std::to_string(peak_threshold));
    }
}

std::vector<PathRow> FieldObject::project(const PathState &entry) const {
    const auto spin = entry.spin();
    if (!spin) {
        throw ValidationError("a field stage needs a spin component");
    }
    const Vec3 p = entry.momentum().value_or(Vec3::Zero());
    const double match = std::sqrt(match_probability);
    const double miss = std::sqrt(1.0 - match_probability);
    std::vector<PathRow> rows;
    for (int r : {1, -1}) {
        const Amplitude overlap = projection_onto(r, axis, *spin);
        if (overlap == Amplitude(0.0)) {
            continue;
        }
        for (int d : {1, -1}) {
            const double factor = d == r ? match : miss;
            if (factor == 0.0) {
                continue;
            }
            const PathState exit = entry.with(Momentum{p + d * gradient_strength * axis}).with(Spin{r, axis});
            rows.push_back({{exit}, overlap * factor});
        }
    }
    return rows;
}

void ScreenObject::validate() const {
    require_unit(axis, "screen");
    if (!std::isfinite(lever) || lever == 0.0) {
        throw ValidationError("screen lever must be finite and nonzero");
    }
}

std::vector<PathRow> ScreenObject::project(const PathState &entry) const {
    const auto pos = entry.position();
    if (!pos) {
        throw ValidationError("a screen stage needs a position component");
    }
    const Vec3 p = entry.momentum().value_or(Vec3::Zero());
    return {{{entry.with(Position{*pos + lever * p.dot(axis) * axis})}, 1.0}};
}

void Detector::validate() const {
    require_unit(axis, "detector");
    if (bins.empty()) {
        throw ValidationError("detector needs at least one bin");
    }
    std::set<std::string> labels;
    for (const DetectorBin &b : bins) {
        if (b.label.empty() || !labels.insert(b.label).second) {
            throw ValidationError("detector bin labels must be nonempty and unique");
        }
        if (!(b.lo < b.hi)) {
            throw ValidationError("detector bin '" + b.label + "' has lo >= hi");
        }
    }
    std::vector<DetectorBin> sorted = bins;
    std::sort(sorted.begin(), sorted.end(), [](const auto &x, const auto &y) { return x.lo < y.lo; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].lo < sorted[i - 1].hi) {
            throw ValidationError("detector bins '" + sorted[i - 1].label + "' and '" + sorted[i].label +
                                  "' overlap");
        }
    }
}

std::optional<std::size_t> Detector::bin_of(const Vec3 &position) const {
    const double x = position.dot(axis);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (bins[i].lo < x && x < bins[i].hi) {
            return i;
        }
    }
    return std::nullopt;
}

void Apparatus::validate() const {
    if (stages.empty()) {
        throw ValidationError("apparatus needs at least one stage");
    }
    for (const Stage &s : stages) {
        std::visit([](const auto &stage) { stage.validate(); }, s);
    }
    detector.validate();
    config.validate();
}

MeasurementResult run_measurement(const Apparatus &apparatus, ParticleId input, EntanglementRegistry &registry,
                                  Rng &rng) {
    apparatus.validate();
    const std::size_t first_draw = rng.trace().size();
    MeasurementResult result;
    result.record.seed = rng.seed();
    ParticleId current = input;
    for (const Stage &stage : apparatus.stages) {
        const StageModel model = model_of(stage);
        const ParticleType type = registry.particle(current).type;
        const ParticleId ma = registry.add_particle(model.apparatus_type, mirrored_support(registry, current));
        InteractionConfig config = apparatus.config;
        config.channel_policy = {false, Channel::elastic};
        config.declared = DeclaredProjection{
            {type}, [project = model.project](std::span<const PathState> entry) { return project(entry[0]); }};
        const InteractionResult r = run_interaction(current, ma, config, registry, rng);
        if (!r.interacted) {
            throw NoInteraction("stage " + std::to_string(result.record.stages.size()) + " found no partner");
        }
        result.record.stages.push_back({r.fluctuation.position, r.entry_states[0], r.channel});
        current = r.exit_particles.front();
    }

    const PwCollection &final_collection = registry.collection_of(current);
    const std::size_t row = sample_index(born_probabilities(final_collection), rng.uniform(Decision::readout));
    registry.collapse(final_collection.id, row);
    result.particle = current;
    const PwCollection &definite = registry.collection_of(current);
    result.record.final_state = definite.rows.front().states[definite.member_index(current).value()];
    const auto &trace = rng.trace();
    result.record.draws.assign(trace.begin() + static_cast<std::ptrdiff_t>(first_draw), trace.end());

    const auto position = result.record.final_state.position();
    const auto bin = position ? apparatus.detector.bin_of(*position) : std::nullopt;
    if (!bin) {
        throw DetectorMiss("final position lies outside every detector bin");
    }
    result.record.detector_bin = *bin;
    result.record.detector_label = apparatus.detector.bins[*bin].label;
    return result;
}

SingleParticleSetup stern_gerlach_scenario(const Spin &input, const Vec3 &axis, double strength) {
    SingleParticleSetup setup;
    setup.paths = {{PathState({Position{}, Momentum{}, input}), 1.0}};
    setup.apparatus = stern_gerlach_apparatus(axis, strength);
    return setup;
}

SingleParticleSetup repeated_field_scenario(int repetitions, double q, const Vec3 &axis, double strength) {
    if (repetitions < 1) {
        throw ValidationError("repetition count must be at least 1");
    }
    SingleParticleSetup setup;
    setup.paths = {{PathState({Position{}, Momentum{}, Spin{1, axis}}), 1.0}};
    const FieldObject field{axis, strength, q, std::sqrt(q)};
    for (int i = 0; i < repetitions; ++i) {
        setup.apparatus.stages.emplace_back(field);
    }
    setup.apparatus.stages.emplace_back(ScreenObject{axis, 1.0});
    // Positions are multiples of `strength`; unanimous runs land on +-k.
    const double k = repetitions;
    setup.apparatus.detector = {axis,
                                {{"down", -(k + 0.5) * strength, -(k - 0.5) * strength},
                                 {"up", (k - 0.5) * strength, (k + 0.5) * strength}}};
    return setup;
}

std::vector<PathRow> anticorrelated_table(const Vec3 &axis, const Vec3 &position_a, const Vec3 &position_b) {
    const double h = 1.0 / std::sqrt(2.0);
    auto state = [&](const Vec3 &pos, int spin) { return PathState({Position{pos}, Momentum{}, Spin{spin, axis}}); };
    return {{{state(position_a, 1), state(position_b, -1)}, h}, {{state(position_a, -1), state(position_b, 1)}, h}};
}

EprSetup epr_scenario(std::vector<PathRow> rows, const Vec3 &axis_a, const Vec3 &axis_b, double strength) {
    if (rows.empty()) {
        throw ShapeMismatch("EPR table needs at least one row");
    }
    double norm = 0.0;
    for (const PathRow &row : rows) {
        if (row.states.size() != 2) {
            throw ShapeMismatch("EPR table rows must have exactly two members");
        }
        for (std::size_t m = 0; m < 2; ++m) {
            const auto spin = row.states[m].spin();
            if (!spin || spin->axis != (m == 0 ? axis_a : axis_b)) {
                throw ValidationError("EPR apparatus axis differs from the table's spin axis");
            }
        }
        norm += std::norm(row.amplitude);
    }
    if (std::abs(norm - 1.0) > 1e-12) {
        throw ValidationError("EPR table is not normalized");
    }
    return {std::move(rows), stern_gerlach_apparatus(axis_a, strength), stern_gerlach_apparatus(axis_b, strength)};
}

EprOutcome run_epr(const EprSetup &setup, bool b_first, EntanglementRegistry &registry, Rng &rng) {
    const std::array types{ParticleType::electron, ParticleType::electron};
    const auto ids = registry.add_entangled(types, setup.rows);
    EprOutcome out;
    out.b_first = b_first;
    if (b_first) {
        out.b = run_measurement(setup.b, ids[1], registry, rng).record;
        out.a = run_measurement(setup.a, ids[0], registry, rng).record;
    } else {
        out.a = run_measurement(setup.a, ids[0], registry, rng).record;
        out.b = run_measurement(setup.b, ids[1], registry, rng).record;
    }
    return out;
}

}  // namespace collapse
