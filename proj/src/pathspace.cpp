#include "collapse/pathspace.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "collapse/errors.hpp"

namespace collapse {

std::string_view to_string(ComponentKind k) {
    switch (k) {
        case ComponentKind::position:
            return "position";
        case ComponentKind::momentum:
            return "momentum";
        case ComponentKind::spin:
            return "spin";
    }
    return "?";
}

ComponentKind kind_of(const StateComponent &c) {
    return static_cast<ComponentKind>(c.index());
}

PathState::PathState(std::vector<StateComponent> components) : components_(std::move(components)) {
    std::set<ComponentKind> seen;
    for (const auto &c : components_) {
        if (!seen.insert(kind_of(c)).second) {
            throw ValidationError("path state has two " + std::string(to_string(kind_of(c))) + " components");
        }
        if (const auto *s = std::get_if<Spin>(&c)) {
            int t = s->twice_projection;
            if (t != 1 && t != -1 && t != 2 && t != -2) {
                throw ValidationError("spin projection must be +-1/2 or photon helicity +-1");
            }
            if (!s->axis.allFinite() || std::abs(s->axis.norm() - 1.0) > 1e-12) {
                throw ValidationError("spin axis must be a unit vector");
            }
        } else if (const auto *p = std::get_if<Position>(&c); p && !p->value.allFinite()) {
            throw ValidationError("position must be finite");
        } else if (const auto *m = std::get_if<Momentum>(&c); m && !m->value.allFinite()) {
            throw ValidationError("momentum must be finite");
        }
    }
}

const StateComponent *PathState::find(ComponentKind kind) const {
    for (const auto &c : components_) {
        if (kind_of(c) == kind) {
            return &c;
        }
    }
    return nullptr;
}

std::optional<Vec3> PathState::position() const {
    if (const auto *c = find(ComponentKind::position)) {
        return std::get<Position>(*c).value;
    }
    return std::nullopt;
}

std::optional<Vec3> PathState::momentum() const {
    if (const auto *c = find(ComponentKind::momentum)) {
        return std::get<Momentum>(*c).value;
    }
    return std::nullopt;
}

std::optional<Spin> PathState::spin() const {
    if (const auto *c = find(ComponentKind::spin)) {
        return std::get<Spin>(*c);
    }
    return std::nullopt;
}

PathState PathState::with(const StateComponent &c) const {
    std::vector<StateComponent> out = components_;
    auto it = std::find_if(out.begin(), out.end(), [&](const StateComponent &x) { return kind_of(x) == kind_of(c); });
    if (it != out.end()) {
        *it = c;
    } else {
        out.push_back(c);
    }
    return PathState(std::move(out));
}

std::optional<std::size_t> PwCollection::member_index(ParticleId p) const {
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (members[i] == p) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<double> born_probabilities(std::span<const PathRow> rows) {
    std::vector<double> p;
    p.reserve(rows.size());
    double total = 0.0;
    for (const auto &r : rows) {
        p.push_back(std::norm(r.amplitude));
        total += p.back();
    }
    if (!(total > 0.0)) {
        throw AllAmplitudesZero("every row amplitude is zero");
    }
    for (double &x : p) {
        x /= total;
    }
    return p;
}

std::vector<double> born_probabilities(const PwCollection &c) {
    return born_probabilities(std::span<const PathRow>(c.rows));
}

std::size_t sample_index(std::span<const double> probabilities, double u) {
    std::size_t last_open = probabilities.size();
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] <= 0.0) {
            continue;
        }
        cumulative += probabilities[i];
        last_open = i;
        if (u <= cumulative) {
            return i;
        }
    }
    if (last_open == probabilities.size()) {
        throw AllAmplitudesZero("no entry with positive probability");
    }
    // Rounding left the cumulative sum a hair below 1.
    return last_open;
}

std::size_t select_path(const PwCollection &c, Rng &rng) {
    auto p = born_probabilities(c);
    return sample_index(p, rng.uniform(Decision::path));
}

std::vector<MarginalEntry> marginal_probabilities(const PwCollection &c, std::size_t member_index,
                                                  ComponentKind kind) {
    if (member_index >= c.members.size()) {
        throw ShapeMismatch("member index " + std::to_string(member_index) + " out of range");
    }
    auto p = born_probabilities(c);
    std::vector<MarginalEntry> out;
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
        const StateComponent *v = c.rows[i].states[member_index].find(kind);
        if (v == nullptr) {
            throw UnknownComponentKind("row " + std::to_string(i) + " has no " + std::string(to_string(kind)) +
                                       " component");
        }
        auto it = std::find_if(out.begin(), out.end(), [&](const MarginalEntry &e) { return e.value == *v; });
        if (it == out.end()) {
            out.push_back({*v, p[i]});
        } else {
            it->probability += p[i];
        }
    }
    return out;
}

EntanglementRegistry::EntanglementRegistry(Constants constants) : constants_(constants) {
}

ParticleId EntanglementRegistry::add_particle(ParticleType type,
                                              const std::vector<std::pair<PathState, Amplitude>> &paths) {
    ParticleId id{next_particle_++};
    particles_[id] = ParticleWave{id, type, constants_.mass(type), default_forces(type), {}, 0};
    std::vector<PathRow> rows;
    rows.reserve(paths.size());
    for (const auto &[state, amp] : paths) {
        rows.push_back({{state}, amp});
    }
    try {
        install({id}, std::move(rows));
    } catch (...) {
        particles_.erase(id);
        throw;
    }
    maybe_audit();
    return id;
}

std::vector<ParticleId> EntanglementRegistry::add_entangled(std::span<const ParticleType> types,
                                                            std::vector<PathRow> rows) {
    if (rows.empty()) {
        throw ShapeMismatch("joint table has no rows");
    }
    for (const auto &r : rows) {
        if (r.states.size() != types.size()) {
            throw ShapeMismatch("joint row does not have one state per member");
        }
    }
    std::vector<ParticleId> ids;
    for (std::size_t k = 0; k < types.size(); ++k) {
        ids.push_back(add_particle(types[k], {{rows.front().states[k], Amplitude{1.0, 0.0}}}));
    }
    join_entangled(ids, std::move(rows));
    return ids;
}

CollectionId EntanglementRegistry::join_entangled(std::span<const ParticleId> members, std::vector<PathRow> rows) {
    if (members.empty() || rows.empty()) {
        throw ShapeMismatch("join needs at least one member and one row");
    }
    std::set<ParticleId> distinct(members.begin(), members.end());
    if (distinct.size() != members.size()) {
        throw ShapeMismatch("a particle appears twice in the join");
    }
    for (ParticleId m : members) {
        const auto &c = collection_of(m);
        if (c.members.size() != 1) {
            throw MemberAlreadyEntangled("particle " + std::to_string(m.value) + " is already entangled");
        }
    }
    std::vector<CollectionId> old;
    for (ParticleId m : members) {
        old.push_back(particle(m).collection);
    }
    CollectionId fresh = install(std::vector<ParticleId>(members.begin(), members.end()), std::move(rows));
    for (CollectionId c : old) {
        collections_.erase(c);
    }
    maybe_audit();
    return fresh;
}

std::vector<CollectionId> EntanglementRegistry::collapse(CollectionId id, std::size_t selected) {
    auto it = collections_.find(id);
    if (it == collections_.end()) {
        throw StaleCollection("collection " + std::to_string(id.value) + " is not live");
    }
    if (selected >= it->second.rows.size()) {
        throw ShapeMismatch("selected row " + std::to_string(selected) + " out of range");
    }
    PwCollection old = std::move(it->second);
    collections_.erase(it);
    const PathRow &row = old.rows[selected];
    std::vector<CollectionId> out;
    out.reserve(old.members.size());
    for (std::size_t k = 0; k < old.members.size(); ++k) {
        out.push_back(install({old.members[k]}, {PathRow{{row.states[k]}, Amplitude{1.0, 0.0}}}));
    }
    maybe_audit();
    return out;
}

void EntanglementRegistry::retire(ParticleId id) {
    const auto &c = collection_of(id);
    if (c.members.size() != 1) {
        throw MemberAlreadyEntangled("cannot retire an entangled particle");
    }
    collections_.erase(c.id);
    particles_.erase(id);
    maybe_audit();
}

const PwCollection &EntanglementRegistry::collection(CollectionId id) const {
    auto it = collections_.find(id);
    if (it == collections_.end()) {
        throw StaleCollection("collection " + std::to_string(id.value) + " is not live");
    }
    return it->second;
}

const PwCollection &EntanglementRegistry::collection_of(ParticleId id) const {
    return collection(particle(id).collection);
}

const ParticleWave &EntanglementRegistry::particle(ParticleId id) const {
    auto it = particles_.find(id);
    if (it == particles_.end()) {
        throw StaleParticle("particle " + std::to_string(id.value) + " is not live");
    }
    return it->second;
}

ParticleWave &EntanglementRegistry::particle_mut(ParticleId id) {
    auto it = particles_.find(id);
    if (it == particles_.end()) {
        throw StaleParticle("particle " + std::to_string(id.value) + " is not live");
    }
    return it->second;
}

bool EntanglementRegistry::is_live(CollectionId id) const {
    return collections_.contains(id);
}

bool EntanglementRegistry::is_live(ParticleId id) const {
    return particles_.contains(id);
}

std::vector<CollectionId> EntanglementRegistry::live_collections() const {
    std::vector<CollectionId> out;
    out.reserve(collections_.size());
    for (const auto &[id, c] : collections_) {
        out.push_back(id);
    }
    return out;
}

CollectionId EntanglementRegistry::install(std::vector<ParticleId> members, std::vector<PathRow> rows) {
    if (rows.empty()) {
        throw ShapeMismatch("collection needs at least one row");
    }
    double total = 0.0;
    for (const auto &r : rows) {
        if (r.states.size() != members.size()) {
            throw ShapeMismatch("row does not have exactly one state per member");
        }
        if (!std::isfinite(r.amplitude.real()) || !std::isfinite(r.amplitude.imag())) {
            throw ValidationError("amplitude is not finite");
        }
        total += std::norm(r.amplitude);
    }
    if (!(total > 0.0)) {
        throw AllAmplitudesZero("all amplitudes zero");
    }
    const double scale = 1.0 / std::sqrt(total);
    for (auto &r : rows) {
        r.amplitude *= scale;
    }
    CollectionId id{next_collection_++};
    for (std::size_t k = 0; k < members.size(); ++k) {
        auto &pw = particle_mut(members[k]);
        pw.collection = id;
        pw.member_index = k;
    }
    collections_[id] = PwCollection{id, std::move(members), std::move(rows), true};
    return id;
}

void EntanglementRegistry::maybe_audit() const {
    if (audit_after_mutation_) {
        audit();
    }
}

void EntanglementRegistry::audit() const {
    std::map<ParticleId, int> memberships;
    for (const auto &[id, c] : collections_) {
        if (c.id != id || c.members.empty() || c.rows.empty()) {
            throw RegistryIncoherent("collection " + std::to_string(id.value) + " is malformed");
        }
        double total = 0.0;
        for (const auto &r : c.rows) {
            if (r.states.size() != c.members.size()) {
                throw RegistryIncoherent("collection " + std::to_string(id.value) + " has a ragged row");
            }
            total += std::norm(r.amplitude);
        }
        if (!c.normalized || std::abs(total - 1.0) > 1e-12) {
            throw RegistryIncoherent("collection " + std::to_string(id.value) + " is not normalized");
        }
        for (std::size_t k = 0; k < c.members.size(); ++k) {
            auto pit = particles_.find(c.members[k]);
            if (pit == particles_.end()) {
                throw RegistryIncoherent("collection " + std::to_string(id.value) + " holds a dead particle");
            }
            if (pit->second.collection != id || pit->second.member_index != k) {
                throw RegistryIncoherent("particle " + std::to_string(c.members[k].value) +
                                         " does not point back to its collection");
            }
            ++memberships[c.members[k]];
        }
    }
    for (const auto &[pid, pw] : particles_) {
        if (!collections_.contains(pw.collection)) {
            throw RegistryIncoherent("particle " + std::to_string(pid.value) + " references a dead collection");
        }
        if (memberships[pid] != 1) {
            throw RegistryIncoherent("particle " + std::to_string(pid.value) + " is in " +
                                     std::to_string(memberships[pid]) + " collections");
        }
    }
}

}  // namespace collapse
