#pragma once

#include <Eigen/Core>
#include <complex>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "collapse/particles.hpp"
#include "collapse/rng.hpp"

namespace collapse {

using Vec3 = Eigen::Vector3d;
using Amplitude = std::complex<double>;

enum class ComponentKind : std::uint8_t { position, momentum, spin };

std::string_view to_string(ComponentKind k);

/// Grid-cell representative of a position (natural length units).
struct Position {
    Vec3 value = Vec3::Zero();

    friend bool operator==(const Position &a, const Position &b) {
        return a.value == b.value;
    }
};

/// Three-momentum in MeV.
struct Momentum {
    Vec3 value = Vec3::Zero();

    friend bool operator==(const Momentum &a, const Momentum &b) {
        return a.value == b.value;
    }
};

/// Spin projection along a quantization axis, stored as twice the projection:
/// +-1 for spin-1/2 particles, +-2 for photon helicity.
struct Spin {
    int twice_projection = 1;
    Vec3 axis = Vec3::UnitZ();

    friend bool operator==(const Spin &a, const Spin &b) {
        return a.twice_projection == b.twice_projection && a.axis == b.axis;
    }
};

using StateComponent = std::variant<Position, Momentum, Spin>;

ComponentKind kind_of(const StateComponent &c);

/// One definite configuration of a single particle/wave: at most one
/// component per kind.
class PathState {
  public:
    PathState() = default;
    /// Throws ValidationError on a duplicated kind or an invalid spin label.
    explicit PathState(std::vector<StateComponent> components);

    const std::vector<StateComponent> &components() const {
        return components_;
    }
    const StateComponent *find(ComponentKind kind) const;

    std::optional<Vec3> position() const;
    std::optional<Vec3> momentum() const;
    std::optional<Spin> spin() const;

    /// Copy with `c` replacing the component of the same kind (or appended).
    PathState with(const StateComponent &c) const;

    friend bool operator==(const PathState &, const PathState &) = default;

  private:
    std::vector<StateComponent> components_;
};

/// One row of a pw-collection: a state per member plus the joint amplitude.
struct PathRow {
    std::vector<PathState> states;
    Amplitude amplitude;

    friend bool operator==(const PathRow &, const PathRow &) = default;
};

struct CollectionId {
    std::uint64_t value = 0;
    friend auto operator<=>(const CollectionId &, const CollectionId &) = default;
};

struct ParticleId {
    std::uint64_t value = 0;
    friend auto operator<=>(const ParticleId &, const ParticleId &) = default;
};

/// Joint path table over one or more particle/waves. Entanglement is nothing
/// more than several members sharing rows.
struct PwCollection {
    CollectionId id;
    std::vector<ParticleId> members;
    std::vector<PathRow> rows;
    bool normalized = false;

    std::optional<std::size_t> member_index(ParticleId p) const;
};

struct ParticleWave {
    ParticleId id;
    ParticleType type = ParticleType::electron;
    double mass = 0.0;
    ForceTags forces;
    CollectionId collection;
    std::size_t member_index = 0;
};

/// Born weights |a_i|^2 / sum_j |a_j|^2 in row order.
std::vector<double> born_probabilities(std::span<const PathRow> rows);
std::vector<double> born_probabilities(const PwCollection &c);

/// Index chosen by one uniform `u` in [0, 1) against the cumulative
/// distribution in order. Zero-weight entries are never chosen; a draw that
/// lands exactly on a boundary goes to the lower entry.
std::size_t sample_index(std::span<const double> probabilities, double u);

/// Born-weighted row choice, consuming one `Decision::path` draw.
std::size_t select_path(const PwCollection &c, Rng &rng);

struct MarginalEntry {
    StateComponent value;
    double probability;
};

/// Distribution of one member's component of `kind`, distinct values in
/// order of first appearance.
std::vector<MarginalEntry> marginal_probabilities(const PwCollection &c, std::size_t member_index, ComponentKind kind);

/// Owner of every live particle/wave and pw-collection of one trial.
///
/// The registry is location-free global bookkeeping: collapsing a collection
/// re-points every member, including entangled partners far from the
/// interaction.
class EntanglementRegistry {
  public:
    explicit EntanglementRegistry(Constants constants = {});

    const Constants &constants() const {
        return constants_;
    }

    /// New particle in its own (normalized) single-member collection.
    ParticleId add_particle(ParticleType type, const std::vector<std::pair<PathState, Amplitude>> &paths);

    /// New particles sharing one joint collection built from `rows`.
    std::vector<ParticleId> add_entangled(std::span<const ParticleType> types, std::vector<PathRow> rows);

    /// Replaces the single-member collections of `members` by one normalized
    /// joint collection.
    CollectionId join_entangled(std::span<const ParticleId> members, std::vector<PathRow> rows);

    /// Discards collection `id`, keeping only row `selected`. The joint state
    /// is then a product of definite states, so every member is moved into its
    /// own single-row collection; ids are returned in member order.
    std::vector<CollectionId> collapse(CollectionId id, std::size_t selected);

    /// Removes a particle that sits alone in its collection (consumed by an
    /// interaction).
    void retire(ParticleId id);

    const PwCollection &collection(CollectionId id) const;
    const PwCollection &collection_of(ParticleId id) const;
    const ParticleWave &particle(ParticleId id) const;

    bool is_live(CollectionId id) const;
    bool is_live(ParticleId id) const;
    std::vector<CollectionId> live_collections() const;
    std::size_t particle_count() const {
        return particles_.size();
    }

    /// Full-scan coherence and normalization check; throws RegistryIncoherent.
    void audit() const;

    /// When set, every mutating call ends with audit().
    void set_audit_after_mutation(bool on) {
        audit_after_mutation_ = on;
    }
    bool audit_after_mutation() const {
        return audit_after_mutation_;
    }

  private:
    CollectionId install(std::vector<ParticleId> members, std::vector<PathRow> rows);
    ParticleWave &particle_mut(ParticleId id);
    void maybe_audit() const;

    Constants constants_;
    std::map<CollectionId, PwCollection> collections_;
    std::map<ParticleId, ParticleWave> particles_;
    std::uint64_t next_collection_ = 1;
    std::uint64_t next_particle_ = 1;
    bool audit_after_mutation_ = false;
};

}  // namespace collapse
