#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace collapse {

enum class ParticleType : std::uint8_t {
    electron,
    positron,
    muon,
    antimuon,
    tauon,
    antitauon,
    photon,
};

std::string_view to_string(ParticleType t);
ParticleType particle_type_from_string(std::string_view s);

bool is_lepton(ParticleType t);
bool is_antiparticle(ParticleType t);
/// Charge conjugate; the photon is its own antiparticle.
ParticleType antiparticle_of(ParticleType t);
/// Lepton generation: 0 = electron, 1 = muon, 2 = tauon; -1 for the photon.
int flavour(ParticleType t);

enum class Force : std::uint8_t {
    electro_weak = 1,
    strong = 2,
    gravity = 4,
};

/// Set of force types a particle/wave can take part in.
class ForceTags {
  public:
    constexpr ForceTags() = default;
    constexpr ForceTags(std::initializer_list<Force> forces) {
        for (Force f : forces) {
            bits_ |= static_cast<std::uint8_t>(f);
        }
    }

    constexpr bool contains(Force f) const {
        return (bits_ & static_cast<std::uint8_t>(f)) != 0;
    }
    constexpr bool empty() const {
        return bits_ == 0;
    }

    friend constexpr bool operator==(ForceTags, ForceTags) = default;

  private:
    std::uint8_t bits_ = 0;
};

/// Forces every particle type in the constants table couples to. Only the
/// electro-weak channel is modelled, but the labels are carried through.
ForceTags default_forces(ParticleType t);

/// Physical constants in natural units (hbar = c = 1, energies in MeV).
struct Constants {
    double alpha = 1.0 / 137.035999;
    double electron_mass = 0.5110;
    double muon_mass = 105.66;
    double tauon_mass = 1776.9;

    double mass(ParticleType t) const;
    /// Electric coupling e = sqrt(4 pi alpha).
    double coupling() const;

    friend bool operator==(const Constants &, const Constants &) = default;
};

}  // namespace collapse
