#pragma once

#include <Eigen/Core>
#include <array>
#include <string_view>
#include <vector>

#include "collapse/particles.hpp"
#include "collapse/pathspace.hpp"

namespace collapse {

/// Four-momentum (E, p) in MeV with metric diag(+1, -1, -1, -1).
struct FourMomentum {
    double E = 0.0;
    Vec3 p = Vec3::Zero();

    /// Energy fixed by the mass shell, E = sqrt(|p|^2 + m^2).
    static FourMomentum on_shell(const Vec3 &p, double mass);

    double dot(const FourMomentum &o) const {
        return E * o.E - p.dot(o.p);
    }
    double mass_squared() const {
        return dot(*this);
    }
    double component(int mu) const {
        return mu == 0 ? E : p[mu - 1];
    }

    friend FourMomentum operator+(const FourMomentum &a, const FourMomentum &b) {
        return {a.E + b.E, a.p + b.p};
    }
    friend FourMomentum operator-(const FourMomentum &a, const FourMomentum &b) {
        return {a.E - b.E, a.p - b.p};
    }
};

/// On-shell test: E >= 0 and |E^2 - |p|^2 - m^2| <= rel_tol * max(E^2, m^2).
bool is_on_shell(const FourMomentum &p, double mass, double rel_tol = 1e-9);

/// Pure boost taking a four-momentum at rest in the frame moving with
/// velocity `beta` to the current frame.
FourMomentum boost(const FourMomentum &k, const Vec3 &beta);

using SpinLabel = Spin;
using DiracSpinor = Eigen::Vector4cd;
using DiracAdjoint = Eigen::RowVector4cd;
using Matrix4c = Eigen::Matrix4cd;

/// Dirac-representation gamma matrices.
struct GammaBasis {
    std::array<Matrix4c, 4> gamma;

    static const GammaBasis &dirac();

    static constexpr double metric(int mu) {
        return mu == 0 ? 1.0 : -1.0;
    }
    /// gamma^mu p_mu.
    Matrix4c slash(const FourMomentum &p) const;
};

struct CouplingConstants {
    double e = 0.0;

    static CouplingConstants from(const Constants &c) {
        return {c.coupling()};
    }
};

/// Positive-energy spinor with u-bar u = 2m; spin quantized along the label's
/// axis in the particle rest frame.
DiracSpinor spinor_u(const FourMomentum &p, double mass, const SpinLabel &s);
/// Negative-energy spinor with v-bar v = -2m.
DiracSpinor spinor_v(const FourMomentum &p, double mass, const SpinLabel &s);
/// psi^dagger gamma^0.
DiracAdjoint dirac_adjoint(const DiracSpinor &psi);

/// <onto|state> for two spin-1/2 rest-frame labels, each an eigenstate of
/// sigma along its own axis.
Amplitude spin_overlap(const SpinLabel &onto, const SpinLabel &state);

/// Exit particle-type pair of an interaction.
enum class Channel : std::uint8_t {
    electron_pair,
    muon_pair,
    tau_pair,
    elastic,  // exit types equal entry types
};

std::string_view to_string(Channel c);
Channel channel_from_string(std::string_view s);

/// Lepton pair channels an e- e+ pair can annihilate or scatter into.
constexpr std::array<Channel, 3> kLeptonPairChannels{Channel::electron_pair, Channel::muon_pair, Channel::tau_pair};

struct ExternalLepton {
    ParticleType type = ParticleType::electron;
    FourMomentum p;
    SpinLabel spin;
    double mass = 0.0;
};

/// Which of the two photon-exchange diagrams contribute.
struct AmplitudeTerms {
    bool annihilation = true;  // (p1 + p2)^2 propagator
    bool exchange = true;      // (p1 - p1')^2 propagator
};

/// Annihilation needs a same-flavour fermion/antifermion pair at entry;
/// exchange needs exit flavours equal to entry flavours.
AmplitudeTerms allowed_terms(ParticleType in_fermion, ParticleType in_antifermion, ParticleType out_fermion,
                             ParticleType out_antifermion);

/// Tree-level photon-exchange amplitude for fermion + antifermion ->
/// fermion' + antifermion':
///
///   M = (-ie)^2 [vbar(p2) g_mu u(p1)] (-i g^{mu nu} / (p1+p2)^2) [ubar(p1') g_nu v(p2')]
///     - (-ie)^2 [ubar(p1') g_mu u(p1)] (-i g^{mu nu} / (p1-p1')^2) [vbar(p2) g_nu v(p2')]
///
/// with the terms switched off per `terms`. Throws PropagatorPole when an
/// enabled propagator denominator vanishes.
Amplitude lepton_pair_amplitude(const ExternalLepton &in_fermion, const ExternalLepton &in_antifermion,
                                const ExternalLepton &out_fermion, const ExternalLepton &out_antifermion,
                                CouplingConstants couplings, AmplitudeTerms terms);

/// Same amplitude from explicit external spinors; the momenta only enter the
/// propagators.
Amplitude amplitude_from_spinors(const DiracSpinor &u_in, const DiracSpinor &v_in, const DiracSpinor &u_out,
                                 const DiracSpinor &v_out, const FourMomentum &p_in_fermion,
                                 const FourMomentum &p_in_antifermion, const FourMomentum &p_out_fermion,
                                 CouplingConstants couplings, AmplitudeTerms terms);

/// Electron-positron entry; terms chosen from the exit types.
Amplitude bhabha_amplitude(const ExternalLepton &electron, const ExternalLepton &positron,
                           const ExternalLepton &out_fermion, const ExternalLepton &out_antifermion,
                           CouplingConstants couplings);

/// (1/4) sum over all 16 spin configurations of |M|^2 (spin labels of the
/// arguments are ignored).
double spin_averaged_squared(const ExternalLepton &in_fermion, const ExternalLepton &in_antifermion,
                             const ExternalLepton &out_fermion, const ExternalLepton &out_antifermion,
                             CouplingConstants couplings, AmplitudeTerms terms);

struct QuadratureOptions {
    /// |cos theta| bound for channels with a forward exchange pole.
    double forward_cutoff = 0.999;
    /// Gauss-Legendre order; 64, 128 or 256.
    int nodes = 64;
};

struct ChannelWeight {
    Channel channel;
    double weight;
};

/// Relative probabilities of e- e+ -> {e- e+, mu- mu+, tau- tau+} at
/// centre-of-mass energy `sqrt_s`: spin-averaged |M|^2 times the two-body
/// phase-space factor |p_out| / |p_in|, integrated over the exit solid angle.
/// Closed channels carry weight 0.
std::vector<ChannelWeight> channel_weights(double sqrt_s, CouplingConstants couplings, const Constants &constants,
                                           const QuadratureOptions &options = {});

}  // namespace collapse
