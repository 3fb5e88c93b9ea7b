#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "collapse/pathspace.hpp"
#include "collapse/qft.hpp"
#include "collapse/rng.hpp"

namespace collapse {

/// Discretized centre-of-mass exit kinematics for two-body lepton pair
/// interactions. The polar axis is the entry fermion's CM direction; cells
/// sit at bin centres, uniform in cos theta and phi.
struct ExitGrid {
    int cos_bins = 16;
    int phi_bins = 4;
    /// Quantization axis of every exit spin label.
    Vec3 spin_axis = Vec3::UnitZ();
    /// Allowed |Delta P^mu| per component, relative to the entry energy.
    double tolerance = 1e-6;

    std::size_t cell_count() const {
        return static_cast<std::size_t>(cos_bins) * static_cast<std::size_t>(phi_bins) * 4;
    }
};

/// Channel choice: dynamic draws from channel_weights at the entry energy,
/// fixed always yields `fixed`. Both consume exactly one channel draw.
struct ChannelPolicy {
    bool dynamic = true;
    Channel fixed = Channel::electron_pair;
};

/// Exit table supplied by a scenario instead of the lepton pair amplitude,
/// e.g. a particle deflected by a field. Receives the definite entry states
/// in participant order and returns rows over `exit_types`.
struct DeclaredProjection {
    std::vector<ParticleType> exit_types;
    std::function<std::vector<PathRow>(std::span<const PathState> entry)> rows;
};

struct InteractionConfig {
    ExitGrid grid;
    /// Defaults to the physical coupling of the default constants.
    CouplingConstants couplings = CouplingConstants::from(Constants{});
    /// forward_cutoff drops exit cells with |cos theta| above it on channels
    /// with an exchange term; nodes is the channel-weight quadrature order.
    QuadratureOptions quadrature;
    ChannelPolicy channel_policy;
    Force force = Force::electro_weak;
    /// When every conserving cell has zero amplitude, spread the exit table
    /// uniformly over those cells instead of failing.
    bool uniform_fallback = false;
    std::optional<DeclaredProjection> declared;

    /// Throws ValidationError on an empty grid or out-of-range settings.
    void validate() const;
};

struct PwFluctuation {
    Vec3 position = Vec3::Zero();
    Force force = Force::electro_weak;
    std::vector<ParticleId> participants;
};

enum class Action : std::uint8_t {
    position_determination,
    partner_selection,
    path_reduction,
    channel_determination,
    probabilistic_projection,
    collapse,
};

std::string_view to_string(Action a);

struct ActionLog {
    Action action;
    std::vector<TraceEntry> draws;
};

struct InteractionResult {
    /// False for a single-particle fluctuation, which leaves the registry
    /// untouched.
    bool interacted = false;
    PwFluctuation fluctuation;
    /// Row of each participant's entry collection, in participant order.
    std::vector<std::size_t> selected_entry_rows;
    std::vector<PathState> entry_states;
    Channel channel = Channel::elastic;
    CollectionId exit_collection;
    std::vector<ParticleId> exit_particles;
    /// Entry collections discarded by the collapse; all dead afterwards.
    std::vector<CollectionId> collapsed_ids;
    std::vector<ActionLog> log;
    std::size_t amplitude_evaluations = 0;

    /// Draws in consumption order across all actions.
    std::vector<TraceEntry> draws() const;
};

/// Fluctuation position drawn from the renormalized sum of the particles'
/// position marginals (one position draw). Candidate cells are ordered by
/// first appearance. Throws EmptySupport when no particle has a position.
Vec3 sample_fluctuation_position(std::span<const ParticleId> particles, const EntanglementRegistry &registry,
                                 Rng &rng);

/// Uniform choice among candidates with nonzero probability at `position`
/// and the `force` tag. Draws only when at least two qualify.
std::optional<ParticleId> select_partner(const Vec3 &position, std::span<const ParticleId> candidates, Force force,
                                         const EntanglementRegistry &registry, Rng &rng);

struct Projection {
    std::vector<ParticleType> exit_types;
    std::vector<PathRow> rows;
    std::size_t amplitude_evaluations = 0;
};

/// Exit table for definite entry states. Lepton pair entries are evaluated
/// cell by cell on the exit grid at the fluctuation position; declared
/// projections are used verbatim. Zero-amplitude and non-conserving rows are
/// dropped; throws NoOpenExitStates when nothing is left.
Projection probabilistic_projection(std::span<const ParticleType> entry_types,
                                    std::span<const PathState> entry_states, Channel channel,
                                    const InteractionConfig &config, const Constants &constants,
                                    const Vec3 &position);

/// Total four-momentum of a set of definite states; energies from the mass
/// shell. Throws ValidationError when a state has no momentum.
FourMomentum total_four_momentum(std::span<const PathState> states, std::span<const double> masses);

/// |Delta P^mu| <= tolerance * E_entry for every component.
bool conserves(const FourMomentum &entry, const FourMomentum &exit, double tolerance);

/// One complete interaction between `measured` and `ma_object`: position
/// determination, partner check, path reduction, channel determination,
/// probabilistic projection with registration of the exit collection, then
/// collapse of the entry collections and retirement of both entry particles.
/// Entangled partners of the entry particles survive in definite states.
InteractionResult run_interaction(ParticleId measured, ParticleId ma_object, const InteractionConfig &config,
                                  EntanglementRegistry &registry, Rng &rng);

}  // namespace collapse
