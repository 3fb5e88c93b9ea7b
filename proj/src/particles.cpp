#include "collapse/particles.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

constexpr std::array<std::string_view, 7> kTypeNames{
    "electron", "positron", "muon-", "muon+", "tauon-", "tauon+", "photon",
};

}  // namespace

std::string_view to_string(ParticleType t) {
    return kTypeNames[static_cast<std::size_t>(t)];
}

ParticleType particle_type_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
        if (kTypeNames[i] == s) {
            return static_cast<ParticleType>(i);
        }
    }
    throw ValidationError("unknown particle type '" + std::string(s) + "'");
}

bool is_lepton(ParticleType t) {
    return t != ParticleType::photon;
}

bool is_antiparticle(ParticleType t) {
    return t == ParticleType::positron || t == ParticleType::antimuon || t == ParticleType::antitauon;
}

ParticleType antiparticle_of(ParticleType t) {
    if (t == ParticleType::photon) {
        return t;
    }
    const int i = static_cast<int>(t);
    return static_cast<ParticleType>(i % 2 == 0 ? i + 1 : i - 1);
}

int flavour(ParticleType t) {
    switch (t) {
        case ParticleType::electron:
        case ParticleType::positron:
            return 0;
        case ParticleType::muon:
        case ParticleType::antimuon:
            return 1;
        case ParticleType::tauon:
        case ParticleType::antitauon:
            return 2;
        case ParticleType::photon:
            break;
    }
    return -1;
}

ForceTags default_forces(ParticleType t) {
    if (t == ParticleType::photon) {
        return {Force::electro_weak};
    }
    return {Force::electro_weak, Force::gravity};
}

double Constants::mass(ParticleType t) const {
    switch (flavour(t)) {
        case 0:
            return electron_mass;
        case 1:
            return muon_mass;
        case 2:
            return tauon_mass;
        default:
            return 0.0;
    }
}

double Constants::coupling() const {
    return std::sqrt(4.0 * std::numbers::pi * alpha);
}

}  // namespace collapse
