#include "collapse/engine.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

/// Born-weighted position cells of one particle's marginal; rows without a
/// position component carry no positional support.
std::vector<std::pair<Vec3, double>> position_support(const EntanglementRegistry &registry, ParticleId id) {
    const PwCollection &c = registry.collection_of(id);
    const std::size_t member = registry.particle(id).member_index;
    const auto p = born_probabilities(c);
    std::vector<std::pair<Vec3, double>> out;
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
        const auto pos = c.rows[i].states[member].position();
        if (!pos || p[i] <= 0.0) {
            continue;
        }
        auto it = std::find_if(out.begin(), out.end(), [&](const auto &e) { return e.first == *pos; });
        if (it == out.end()) {
            out.emplace_back(*pos, p[i]);
        } else {
            it->second += p[i];
        }
    }
    return out;
}

bool has_support_at(const EntanglementRegistry &registry, ParticleId id, const Vec3 &position) {
    for (const auto &[cell, weight] : position_support(registry, id)) {
        if (cell == position && weight > 0.0) {
            return true;
        }
    }
    return false;
}

struct LeptonPairEntry {
    std::size_t fermion;
    std::size_t antifermion;
};

LeptonPairEntry lepton_pair_entry(std::span<const ParticleType> types) {
    if (types.size() != 2 || !is_lepton(types[0]) || !is_lepton(types[1]) ||
        is_antiparticle(types[0]) == is_antiparticle(types[1])) {
        throw InvalidInteraction("lepton pair interactions need one lepton and one antilepton");
    }
    return is_antiparticle(types[0]) ? LeptonPairEntry{1, 0} : LeptonPairEntry{0, 1};
}

std::pair<ParticleType, ParticleType> exit_types_for(Channel channel, ParticleType in_fermion,
                                                     ParticleType in_antifermion) {
    switch (channel) {
        case Channel::electron_pair:
            return {ParticleType::electron, ParticleType::positron};
        case Channel::muon_pair:
            return {ParticleType::muon, ParticleType::antimuon};
        case Channel::tau_pair:
            return {ParticleType::tauon, ParticleType::antitauon};
        case Channel::elastic:
            return {in_fermion, in_antifermion};
    }
    throw InvalidInteraction("unknown channel");
}

Vec3 require_momentum(const PathState &s) {
    const auto p = s.momentum();
    if (!p) {
        throw InvalidInteraction("lepton pair entry state has no momentum");
    }
    return *p;
}

Spin require_spin(const PathState &s) {
    const auto spin = s.spin();
    if (!spin) {
        throw InvalidInteraction("lepton pair entry state has no spin");
    }
    return *spin;
}

/// Orthonormal frame (n, e1, e2) around `n`.
std::array<Vec3, 3> frame_around(Vec3 n) {
    if (n.norm() == 0.0) {
        n = Vec3::UnitZ();
    }
    n.normalize();
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = n.cross(helper).normalized();
    return {n, e1, n.cross(e1)};
}

Projection lepton_pair_projection(std::span<const ParticleType> entry_types, std::span<const PathState> entry_states,
                                  Channel channel, const InteractionConfig &config, const Constants &constants,
                                  const Vec3 &position) {
    const LeptonPairEntry idx = lepton_pair_entry(entry_types);
    const auto [out_f, out_a] = exit_types_for(channel, entry_types[idx.fermion], entry_types[idx.antifermion]);
    const AmplitudeTerms terms =
        allowed_terms(entry_types[idx.fermion], entry_types[idx.antifermion], out_f, out_a);
    if (!terms.annihilation && !terms.exchange) {
        throw InvalidInteraction("channel " + std::string(to_string(channel)) + " is not reachable from this entry");
    }

    ExternalLepton in_f{entry_types[idx.fermion],
                        FourMomentum::on_shell(require_momentum(entry_states[idx.fermion]),
                                               constants.mass(entry_types[idx.fermion])),
                        require_spin(entry_states[idx.fermion]), constants.mass(entry_types[idx.fermion])};
    ExternalLepton in_a{entry_types[idx.antifermion],
                        FourMomentum::on_shell(require_momentum(entry_states[idx.antifermion]),
                                               constants.mass(entry_types[idx.antifermion])),
                        require_spin(entry_states[idx.antifermion]), constants.mass(entry_types[idx.antifermion])};

    const FourMomentum total = in_f.p + in_a.p;
    const double s = total.mass_squared();
    const double m3 = constants.mass(out_f);
    const double m4 = constants.mass(out_a);
    Projection out;
    out.exit_types = {out_f, out_a};
    if (!(s > (m3 + m4) * (m3 + m4))) {
        throw NoOpenExitStates("channel " + std::string(to_string(channel)) + " is closed at sqrt(s) = " +
                               std::to_string(std::sqrt(std::max(s, 0.0))) + " MeV");
    }
    const double sqrt_s = std::sqrt(s);
    const double k = std::sqrt((s - (m3 + m4) * (m3 + m4)) * (s - (m3 - m4) * (m3 - m4))) / (2.0 * sqrt_s);
    const Vec3 beta = total.p / total.E;
    const auto axes = frame_around(boost(in_f.p, -beta).p);

    const ExitGrid &grid = config.grid;
    const double cutoff = config.quadrature.forward_cutoff;
    struct Cell {
        PathRow row;
        bool conserving;
    };
    std::vector<Cell> cells;
    cells.reserve(grid.cell_count());
    bool any_nonzero = false;
    for (int i = 0; i < grid.cos_bins; ++i) {
        const double cos_theta = -1.0 + (i + 0.5) * 2.0 / grid.cos_bins;
        if (terms.exchange && std::abs(cos_theta) > cutoff) {
            continue;
        }
        const double sin_theta = std::sqrt(1.0 - cos_theta * cos_theta);
        for (int j = 0; j < grid.phi_bins; ++j) {
            const double phi = (j + 0.5) * 2.0 * std::numbers::pi / grid.phi_bins;
            const Vec3 dir =
                cos_theta * axes[0] + sin_theta * (std::cos(phi) * axes[1] + std::sin(phi) * axes[2]);
            const FourMomentum p3 = boost(FourMomentum::on_shell(k * dir, m3), beta);
            const FourMomentum p4 = boost(FourMomentum::on_shell(-k * dir, m4), beta);
            const bool conserving =
                conserves(total, FourMomentum::on_shell(p3.p, m3) + FourMomentum::on_shell(p4.p, m4), grid.tolerance);
            for (int s3 : {1, -1}) {
                for (int s4 : {1, -1}) {
                    const Spin spin3{s3, grid.spin_axis};
                    const Spin spin4{s4, grid.spin_axis};
                    const ExternalLepton f{out_f, p3, spin3, m3};
                    const ExternalLepton a{out_a, p4, spin4, m4};
                    Amplitude amp = 0.0;
                    if (conserving) {
                        amp = lepton_pair_amplitude(in_f, in_a, f, a, config.couplings, terms);
                        ++out.amplitude_evaluations;
                        any_nonzero = any_nonzero || amp != Amplitude(0.0);
                    }
                    PathRow row{{PathState({Position{position}, Momentum{p3.p}, spin3}),
                                 PathState({Position{position}, Momentum{p4.p}, spin4})},
                                amp};
                    cells.push_back({std::move(row), conserving});
                }
            }
        }
    }
    const bool fallback = !any_nonzero && config.uniform_fallback;
    for (auto &cell : cells) {
        if (!cell.conserving) {
            continue;
        }
        if (fallback) {
            cell.row.amplitude = 1.0;
        }
        if (cell.row.amplitude != Amplitude(0.0)) {
            out.rows.push_back(std::move(cell.row));
        }
    }
    return out;
}

/// Trials at fixed beam energy ask for the same weights over and over.
const std::vector<ChannelWeight> &cached_channel_weights(double sqrt_s, CouplingConstants couplings,
                                                         const Constants &constants,
                                                         const QuadratureOptions &options) {
    struct Entry {
        double sqrt_s = 0.0;
        double e = 0.0;
        Constants constants;
        double cutoff = 0.0;
        int nodes = 0;
        std::vector<ChannelWeight> weights;
    };
    thread_local Entry last;
    if (last.weights.empty() || last.sqrt_s != sqrt_s || last.e != couplings.e || !(last.constants == constants) ||
        last.cutoff != options.forward_cutoff || last.nodes != options.nodes) {
        last.weights.clear();
        last.weights = channel_weights(sqrt_s, couplings, constants, options);
        last.sqrt_s = sqrt_s;
        last.e = couplings.e;
        last.constants = constants;
        last.cutoff = options.forward_cutoff;
        last.nodes = options.nodes;
    }
    return last.weights;
}

}  // namespace

std::string_view to_string(Action a) {
    switch (a) {
        case Action::position_determination:
            return "position_determination";
        case Action::partner_selection:
            return "partner_selection";
        case Action::path_reduction:
            return "path_reduction";
        case Action::channel_determination:
            return "channel_determination";
        case Action::probabilistic_projection:
            return "probabilistic_projection";
        case Action::collapse:
            return "collapse";
    }
    return "?";
}

void InteractionConfig::validate() const {
    if (grid.cos_bins < 1 || grid.phi_bins < 1) {
        throw ValidationError("exit grid must have at least one cos theta and one phi bin");
    }
    if (!(grid.tolerance > 0.0) || !std::isfinite(grid.tolerance)) {
        throw ValidationError("conservation tolerance must be positive and finite");
    }
    if (!grid.spin_axis.allFinite() || std::abs(grid.spin_axis.norm() - 1.0) > 1e-12) {
        throw ValidationError("exit spin axis must be a unit vector");
    }
    if (!(quadrature.forward_cutoff > 0.0 && quadrature.forward_cutoff < 1.0)) {
        throw ValidationError("forward cutoff must lie in (0, 1)");
    }
    if (quadrature.nodes != 64 && quadrature.nodes != 128 && quadrature.nodes != 256) {
        throw ValidationError("quadrature order must be 64, 128 or 256");
    }
    if (declared) {
        if (channel_policy.dynamic) {
            throw ValidationError("a declared projection needs a fixed channel");
        }
        if (declared->exit_types.empty() || !declared->rows) {
            throw ValidationError("declared projection needs exit types and a row function");
        }
    }
}

std::vector<TraceEntry> InteractionResult::draws() const {
    std::vector<TraceEntry> out;
    for (const auto &entry : log) {
        out.insert(out.end(), entry.draws.begin(), entry.draws.end());
    }
    return out;
}

Vec3 sample_fluctuation_position(std::span<const ParticleId> particles, const EntanglementRegistry &registry,
                                 Rng &rng) {
    std::vector<Vec3> cells;
    std::vector<double> weights;
    for (ParticleId id : particles) {
        for (const auto &[cell, weight] : position_support(registry, id)) {
            auto it = std::find(cells.begin(), cells.end(), cell);
            if (it == cells.end()) {
                cells.push_back(cell);
                weights.push_back(weight);
            } else {
                weights[static_cast<std::size_t>(it - cells.begin())] += weight;
            }
        }
    }
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    if (cells.empty() || !(total > 0.0)) {
        throw EmptySupport("no participant has positional support");
    }
    for (double &w : weights) {
        w /= total;
    }
    return cells[sample_index(weights, rng.uniform(Decision::position))];
}

std::optional<ParticleId> select_partner(const Vec3 &position, std::span<const ParticleId> candidates, Force force,
                                         const EntanglementRegistry &registry, Rng &rng) {
    std::vector<ParticleId> qualifying;
    for (ParticleId id : candidates) {
        if (registry.particle(id).forces.contains(force) && has_support_at(registry, id, position)) {
            qualifying.push_back(id);
        }
    }
    if (qualifying.empty()) {
        return std::nullopt;
    }
    if (qualifying.size() == 1) {
        return qualifying.front();
    }
    const std::vector<double> uniform(qualifying.size(), 1.0 / static_cast<double>(qualifying.size()));
    return qualifying[sample_index(uniform, rng.uniform(Decision::partner))];
}

FourMomentum total_four_momentum(std::span<const PathState> states, std::span<const double> masses) {
    if (states.size() != masses.size()) {
        throw ShapeMismatch("one mass per state is required");
    }
    FourMomentum total;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto p = states[i].momentum();
        if (!p) {
            throw ValidationError("state without momentum has no four-momentum");
        }
        total = total + FourMomentum::on_shell(*p, masses[i]);
    }
    return total;
}

bool conserves(const FourMomentum &entry, const FourMomentum &exit, double tolerance) {
    const double bound = tolerance * std::abs(entry.E);
    for (int mu = 0; mu < 4; ++mu) {
        if (!(std::abs(entry.component(mu) - exit.component(mu)) <= bound)) {
            return false;
        }
    }
    return true;
}

Projection probabilistic_projection(std::span<const ParticleType> entry_types,
                                    std::span<const PathState> entry_states, Channel channel,
                                    const InteractionConfig &config, const Constants &constants,
                                    const Vec3 &position) {
    if (entry_types.size() != entry_states.size()) {
        throw ShapeMismatch("one entry state per entry particle is required");
    }
    if (!config.declared) {
        Projection p = lepton_pair_projection(entry_types, entry_states, channel, config, constants, position);
        if (p.rows.empty()) {
            throw NoOpenExitStates("every exit cell has zero amplitude or violates conservation");
        }
        return p;
    }
    Projection p;
    p.exit_types = config.declared->exit_types;
    for (PathRow &row : config.declared->rows(entry_states)) {
        ++p.amplitude_evaluations;
        if (row.states.size() != p.exit_types.size()) {
            throw ShapeMismatch("declared exit row does not match the exit particle count");
        }
        if (row.amplitude != Amplitude(0.0)) {
            p.rows.push_back(std::move(row));
        }
    }
    if (p.rows.empty()) {
        throw NoOpenExitStates("declared projection produced no nonzero row");
    }
    return p;
}

InteractionResult run_interaction(ParticleId measured, ParticleId ma_object, const InteractionConfig &config,
                                  EntanglementRegistry &registry, Rng &rng) {
    config.validate();
    if (measured == ma_object) {
        throw InvalidInteraction("a particle cannot interact with itself");
    }
    const ParticleWave measured_wave = registry.particle(measured);
    const ParticleWave ma_wave = registry.particle(ma_object);
    if (!measured_wave.forces.contains(Force::electro_weak) || !ma_wave.forces.contains(Force::electro_weak) ||
        !measured_wave.forces.contains(config.force) || !ma_wave.forces.contains(config.force)) {
        throw ForceMismatch("participants do not share the interaction's force tag");
    }

    InteractionResult result;
    result.fluctuation.force = config.force;
    std::size_t mark = rng.trace().size();
    auto record = [&](Action action) {
        const auto &trace = rng.trace();
        result.log.push_back({action, {trace.begin() + static_cast<std::ptrdiff_t>(mark), trace.end()}});
        mark = trace.size();
    };

    // Position determination.
    const std::array<ParticleId, 2> both{measured, ma_object};
    const Vec3 position = sample_fluctuation_position(both, registry, rng);
    result.fluctuation.position = position;
    record(Action::position_determination);

    // Second participant; without one the fluctuation has no durable effect.
    const bool measured_first = has_support_at(registry, measured, position);
    const ParticleId initiator = measured_first ? measured : ma_object;
    const std::array<ParticleId, 1> others{measured_first ? ma_object : measured};
    const auto partner = select_partner(position, others, config.force, registry, rng);
    record(Action::partner_selection);
    if (!partner) {
        result.fluctuation.participants = {initiator};
        return result;
    }
    result.fluctuation.participants = {measured, ma_object};

    // Path reduction: one joint draw over the rows of the participants'
    // collections that put every participant at the fluctuation position.
    std::vector<CollectionId> entry_collections;
    for (ParticleId id : both) {
        const CollectionId c = registry.particle(id).collection;
        if (std::find(entry_collections.begin(), entry_collections.end(), c) == entry_collections.end()) {
            entry_collections.push_back(c);
        }
    }
    std::vector<std::vector<std::size_t>> consistent(entry_collections.size());
    std::vector<std::vector<double>> conditional(entry_collections.size());
    for (std::size_t k = 0; k < entry_collections.size(); ++k) {
        const PwCollection &c = registry.collection(entry_collections[k]);
        const auto p = born_probabilities(c);
        double kept = 0.0;
        for (std::size_t i = 0; i < c.rows.size(); ++i) {
            bool at_position = p[i] > 0.0;
            for (ParticleId id : both) {
                if (const auto m = c.member_index(id); m && at_position) {
                    const auto pos = c.rows[i].states[*m].position();
                    at_position = pos && *pos == position;
                }
            }
            if (at_position) {
                consistent[k].push_back(i);
                conditional[k].push_back(p[i]);
                kept += p[i];
            }
        }
        if (consistent[k].empty()) {
            throw EmptySupport("no entry row places the participants at the fluctuation position");
        }
        for (double &w : conditional[k]) {
            w /= kept;
        }
    }
    std::vector<double> joint{1.0};
    for (const auto &weights : conditional) {
        std::vector<double> next;
        next.reserve(joint.size() * weights.size());
        for (double a : joint) {
            for (double b : weights) {
                next.push_back(a * b);
            }
        }
        joint = std::move(next);
    }
    std::size_t flat = sample_index(joint, rng.uniform(Decision::path));
    std::vector<std::size_t> chosen_rows(entry_collections.size());
    for (std::size_t k = entry_collections.size(); k-- > 0;) {
        chosen_rows[k] = consistent[k][flat % consistent[k].size()];
        flat /= consistent[k].size();
    }
    std::vector<ParticleType> entry_types;
    for (ParticleId id : both) {
        const ParticleWave &w = registry.particle(id);
        const std::size_t k = static_cast<std::size_t>(
            std::find(entry_collections.begin(), entry_collections.end(), w.collection) - entry_collections.begin());
        const PwCollection &c = registry.collection(w.collection);
        result.selected_entry_rows.push_back(chosen_rows[k]);
        result.entry_states.push_back(c.rows[chosen_rows[k]].states[w.member_index]);
        entry_types.push_back(w.type);
    }
    record(Action::path_reduction);

    // Channel determination.
    std::vector<Channel> channels;
    std::vector<double> channel_probabilities;
    const bool electron_positron_entry =
        std::is_permutation(entry_types.begin(), entry_types.end(),
                            std::array{ParticleType::electron, ParticleType::positron}.begin());
    if (config.channel_policy.dynamic && electron_positron_entry) {
        const std::array<double, 2> masses{registry.constants().mass(entry_types[0]),
                                           registry.constants().mass(entry_types[1])};
        const double sqrt_s = std::sqrt(total_four_momentum(result.entry_states, masses).mass_squared());
        for (const ChannelWeight &w :
             cached_channel_weights(sqrt_s, config.couplings, registry.constants(), config.quadrature)) {
            channels.push_back(w.channel);
            channel_probabilities.push_back(w.weight);
        }
    } else {
        channels.push_back(config.channel_policy.dynamic ? Channel::elastic : config.channel_policy.fixed);
        channel_probabilities.push_back(1.0);
    }
    result.channel = channels[sample_index(channel_probabilities, rng.uniform(Decision::channel))];
    record(Action::channel_determination);

    // Probabilistic projection and registration of the exit collection.
    Projection projection = probabilistic_projection(entry_types, result.entry_states, result.channel, config,
                                                     registry.constants(), position);
    result.amplitude_evaluations = projection.amplitude_evaluations;
    result.exit_particles = registry.add_entangled(projection.exit_types, std::move(projection.rows));
    result.exit_collection = registry.particle(result.exit_particles.front()).collection;
    record(Action::probabilistic_projection);

    // Collapse: entry collections reduce to the selected rows, which frees
    // entangled partners into definite states; the entry particles go.
    for (std::size_t k = 0; k < entry_collections.size(); ++k) {
        registry.collapse(entry_collections[k], chosen_rows[k]);
        result.collapsed_ids.push_back(entry_collections[k]);
    }
    registry.retire(measured);
    registry.retire(ma_object);
    record(Action::collapse);
    result.interacted = true;
    return result;
}

}  // namespace collapse
