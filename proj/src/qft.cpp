#include "collapse/qft.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <string>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Vector2c = Eigen::Vector2cd;

constexpr Complex kI{0.0, 1.0};

std::array<Matrix2c, 3> pauli() {
    Matrix2c sx, sy, sz;
    sx << 0, 1, 1, 0;
    sy << 0, -kI, kI, 0;
    sz << 1, 0, 0, -1;
    return {sx, sy, sz};
}

Matrix2c sigma_dot(const Vec3 &v) {
    static const auto s = pauli();
    return v.x() * s[0] + v.y() * s[1] + v.z() * s[2];
}

/// Two-component spinor with sigma.n chi = (+-1) chi.
Vector2c pauli_eigenstate(const Vec3 &axis, int sign) {
    const double theta = std::acos(std::clamp(axis.z(), -1.0, 1.0));
    const double phi = std::atan2(axis.y(), axis.x());
    const double c = std::cos(theta / 2.0);
    const double s = std::sin(theta / 2.0);
    Vector2c chi;
    if (sign > 0) {
        chi << c, std::polar(s, phi);
    } else {
        chi << -std::polar(s, -phi), c;
    }
    return chi;
}

void require_on_shell(const FourMomentum &p, double mass) {
    if (!(mass > 0.0)) {
        throw ValidationError("Dirac spinors need a positive mass");
    }
    if (!is_on_shell(p, mass)) {
        throw OffShell("four-momentum is off the mass shell for m = " + std::to_string(mass));
    }
}

int spin_sign(const SpinLabel &s) {
    if (s.twice_projection != 1 && s.twice_projection != -1) {
        throw ValidationError("lepton spin projection must be +-1/2");
    }
    return s.twice_projection;
}

/// J^mu = lhs gamma^mu rhs.
std::array<Complex, 4> current(const DiracAdjoint &lhs, const DiracSpinor &rhs) {
    const auto &g = GammaBasis::dirac();
    std::array<Complex, 4> j;
    for (int mu = 0; mu < 4; ++mu) {
        j[mu] = (lhs * g.gamma[mu] * rhs)(0, 0);
    }
    return j;
}

Complex contract(const std::array<Complex, 4> &a, const std::array<Complex, 4> &b) {
    Complex sum = 0.0;
    for (int mu = 0; mu < 4; ++mu) {
        sum += GammaBasis::metric(mu) * a[mu] * b[mu];
    }
    return sum;
}

template <unsigned N, class F>
double gauss_legendre(F f, double a, double b) {
    return boost::math::quadrature::gauss<double, N>::integrate(f, a, b);
}

template <class F>
double integrate(F f, double a, double b, int nodes) {
    switch (nodes) {
        case 64:
            return gauss_legendre<64>(f, a, b);
        case 128:
            return gauss_legendre<128>(f, a, b);
        case 256:
            return gauss_legendre<256>(f, a, b);
        default:
            throw ValidationError("quadrature order must be 64, 128 or 256");
    }
}

ParticleType fermion_of(Channel c) {
    switch (c) {
        case Channel::muon_pair:
            return ParticleType::muon;
        case Channel::tau_pair:
            return ParticleType::tauon;
        default:
            return ParticleType::electron;
    }
}

}  // namespace

FourMomentum FourMomentum::on_shell(const Vec3 &p, double mass) {
    return {std::sqrt(p.squaredNorm() + mass * mass), p};
}

bool is_on_shell(const FourMomentum &p, double mass, double rel_tol) {
    if (!(p.E >= 0.0) || !p.p.allFinite()) {
        return false;
    }
    const double scale = std::max(p.E * p.E, mass * mass);
    return std::abs(p.E * p.E - p.p.squaredNorm() - mass * mass) <= rel_tol * scale;
}

FourMomentum boost(const FourMomentum &k, const Vec3 &beta) {
    const double b2 = beta.squaredNorm();
    if (b2 == 0.0) {
        return k;
    }
    const double gamma = 1.0 / std::sqrt(1.0 - b2);
    const double bp = beta.dot(k.p);
    FourMomentum out;
    out.E = gamma * (k.E + bp);
    out.p = k.p + ((gamma - 1.0) * bp / b2 + gamma * k.E) * beta;
    return out;
}

const GammaBasis &GammaBasis::dirac() {
    static const GammaBasis basis = [] {
        const auto s = pauli();
        GammaBasis g;
        g.gamma[0].setZero();
        g.gamma[0].topLeftCorner<2, 2>() = Matrix2c::Identity();
        g.gamma[0].bottomRightCorner<2, 2>() = -Matrix2c::Identity();
        for (int i = 0; i < 3; ++i) {
            g.gamma[i + 1].setZero();
            g.gamma[i + 1].topRightCorner<2, 2>() = s[i];
            g.gamma[i + 1].bottomLeftCorner<2, 2>() = -s[i];
        }
        return g;
    }();
    return basis;
}

Matrix4c GammaBasis::slash(const FourMomentum &p) const {
    // gamma^mu p_mu = gamma^0 E - gamma^i p^i
    return gamma[0] * p.E - gamma[1] * p.p.x() - gamma[2] * p.p.y() - gamma[3] * p.p.z();
}

DiracSpinor spinor_u(const FourMomentum &p, double mass, const SpinLabel &s) {
    require_on_shell(p, mass);
    const Vector2c chi = pauli_eigenstate(s.axis, spin_sign(s));
    const double root = std::sqrt(p.E + mass);
    DiracSpinor u;
    u.head<2>() = root * chi;
    u.tail<2>() = sigma_dot(p.p) * chi / root;
    return u;
}

DiracSpinor spinor_v(const FourMomentum &p, double mass, const SpinLabel &s) {
    require_on_shell(p, mass);
    // eta = -i sigma_2 chi*, the charge-conjugate two-spinor.
    const Vector2c chi = pauli_eigenstate(s.axis, spin_sign(s));
    Vector2c eta;
    eta << -std::conj(chi(1)), std::conj(chi(0));
    const double root = std::sqrt(p.E + mass);
    DiracSpinor v;
    v.head<2>() = sigma_dot(p.p) * eta / root;
    v.tail<2>() = root * eta;
    return v;
}

DiracAdjoint dirac_adjoint(const DiracSpinor &psi) {
    return psi.adjoint() * GammaBasis::dirac().gamma[0];
}

Amplitude spin_overlap(const SpinLabel &onto, const SpinLabel &state) {
    return pauli_eigenstate(onto.axis, spin_sign(onto)).dot(pauli_eigenstate(state.axis, spin_sign(state)));
}

std::string_view to_string(Channel c) {
    switch (c) {
        case Channel::electron_pair:
            return "ee";
        case Channel::muon_pair:
            return "mumu";
        case Channel::tau_pair:
            return "tautau";
        case Channel::elastic:
            return "elastic";
    }
    return "?";
}

Channel channel_from_string(std::string_view s) {
    for (Channel c : {Channel::electron_pair, Channel::muon_pair, Channel::tau_pair, Channel::elastic}) {
        if (to_string(c) == s) {
            return c;
        }
    }
    throw ValidationError("unknown channel '" + std::string(s) + "'");
}

AmplitudeTerms allowed_terms(ParticleType in_fermion, ParticleType in_antifermion, ParticleType out_fermion,
                             ParticleType out_antifermion) {
    AmplitudeTerms t;
    t.annihilation = flavour(in_fermion) == flavour(in_antifermion) && flavour(out_fermion) == flavour(out_antifermion);
    t.exchange = flavour(in_fermion) == flavour(out_fermion) && flavour(in_antifermion) == flavour(out_antifermion);
    return t;
}

Amplitude amplitude_from_spinors(const DiracSpinor &u_in, const DiracSpinor &v_in, const DiracSpinor &u_out,
                                 const DiracSpinor &v_out, const FourMomentum &p_in_fermion,
                                 const FourMomentum &p_in_antifermion, const FourMomentum &p_out_fermion,
                                 CouplingConstants couplings, AmplitudeTerms terms) {
    const DiracAdjoint v_in_bar = dirac_adjoint(v_in);
    const DiracAdjoint u_out_bar = dirac_adjoint(u_out);
    const FourMomentum total = p_in_fermion + p_in_antifermion;
    const double scale = std::max(1.0, total.E * total.E);
    // (-ie)^2 (-i) = i e^2
    const Complex vertex = kI * couplings.e * couplings.e;
    Complex m = 0.0;
    if (terms.annihilation) {
        const double s = total.mass_squared();
        if (std::abs(s) <= 1e-12 * scale) {
            throw PropagatorPole("annihilation propagator (p1 + p2)^2 vanishes");
        }
        m += vertex * contract(current(v_in_bar, u_in), current(u_out_bar, v_out)) / s;
    }
    if (terms.exchange) {
        const double t = (p_in_fermion - p_out_fermion).mass_squared();
        if (std::abs(t) <= 1e-12 * scale) {
            throw PropagatorPole("exchange propagator (p1 - p1')^2 vanishes");
        }
        m -= vertex * contract(current(u_out_bar, u_in), current(v_in_bar, v_out)) / t;
    }
    return m;
}

Amplitude lepton_pair_amplitude(const ExternalLepton &in_fermion, const ExternalLepton &in_antifermion,
                                const ExternalLepton &out_fermion, const ExternalLepton &out_antifermion,
                                CouplingConstants couplings, AmplitudeTerms terms) {
    return amplitude_from_spinors(spinor_u(in_fermion.p, in_fermion.mass, in_fermion.spin),
                                  spinor_v(in_antifermion.p, in_antifermion.mass, in_antifermion.spin),
                                  spinor_u(out_fermion.p, out_fermion.mass, out_fermion.spin),
                                  spinor_v(out_antifermion.p, out_antifermion.mass, out_antifermion.spin),
                                  in_fermion.p, in_antifermion.p, out_fermion.p, couplings, terms);
}

Amplitude bhabha_amplitude(const ExternalLepton &electron, const ExternalLepton &positron,
                           const ExternalLepton &out_fermion, const ExternalLepton &out_antifermion,
                           CouplingConstants couplings) {
    if (electron.type != ParticleType::electron || positron.type != ParticleType::positron) {
        throw InvalidInteraction("Bhabha entry must be an electron and a positron");
    }
    return lepton_pair_amplitude(electron, positron, out_fermion, out_antifermion, couplings,
                                 allowed_terms(electron.type, positron.type, out_fermion.type, out_antifermion.type));
}

double spin_averaged_squared(const ExternalLepton &in_fermion, const ExternalLepton &in_antifermion,
                             const ExternalLepton &out_fermion, const ExternalLepton &out_antifermion,
                             CouplingConstants couplings, AmplitudeTerms terms) {
    ExternalLepton a = in_fermion, b = in_antifermion, c = out_fermion, d = out_antifermion;
    double sum = 0.0;
    for (int sa : {1, -1}) {
        for (int sb : {1, -1}) {
            for (int sc : {1, -1}) {
                for (int sd : {1, -1}) {
                    a.spin = {sa, Vec3::UnitZ()};
                    b.spin = {sb, Vec3::UnitZ()};
                    c.spin = {sc, Vec3::UnitZ()};
                    d.spin = {sd, Vec3::UnitZ()};
                    sum += std::norm(lepton_pair_amplitude(a, b, c, d, couplings, terms));
                }
            }
        }
    }
    return sum / 4.0;
}

std::vector<ChannelWeight> channel_weights(double sqrt_s, CouplingConstants couplings, const Constants &constants,
                                           const QuadratureOptions &options) {
    const double me = constants.electron_mass;
    if (!(sqrt_s > 2.0 * me)) {
        throw BelowThreshold("sqrt(s) = " + std::to_string(sqrt_s) + " MeV is below the e- e+ threshold");
    }
    if (!(options.forward_cutoff > 0.0 && options.forward_cutoff < 1.0)) {
        throw ValidationError("forward cutoff must lie in (0, 1)");
    }
    const double energy = sqrt_s / 2.0;
    const double p_in = std::sqrt(energy * energy - me * me);
    const ExternalLepton electron{ParticleType::electron, {energy, Vec3(0, 0, p_in)}, {}, me};
    const ExternalLepton positron{ParticleType::positron, {energy, Vec3(0, 0, -p_in)}, {}, me};

    std::vector<ChannelWeight> out;
    double total = 0.0;
    for (Channel ch : kLeptonPairChannels) {
        const ParticleType f = fermion_of(ch);
        const double mf = constants.mass(f);
        if (!(sqrt_s > 2.0 * mf)) {
            out.push_back({ch, 0.0});
            continue;
        }
        const double p_out = std::sqrt(energy * energy - mf * mf);
        const ParticleType fbar = antiparticle_of(f);
        const AmplitudeTerms terms = allowed_terms(ParticleType::electron, ParticleType::positron, f, fbar);
        auto msq = [&](double cos_theta) {
            const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
            const Vec3 k(p_out * sin_theta, 0.0, p_out * cos_theta);
            const ExternalLepton fermion{f, {energy, k}, {}, mf};
            const ExternalLepton antifermion{fbar, {energy, -k}, {}, mf};
            return spin_averaged_squared(electron, positron, fermion, antifermion, couplings, terms);
        };
        double integral = 0.0;
        if (terms.exchange) {
            // The forward pole goes like (1 - cos)^-2; in y = ln(1 - cos) the
            // integrand is smooth.
            const double c = options.forward_cutoff;
            integral = integrate([&](double y) { return msq(1.0 - std::exp(y)) * std::exp(y); }, std::log1p(-c),
                                 std::log1p(c), options.nodes);
        } else {
            integral = integrate(msq, -1.0, 1.0, options.nodes);
        }
        const double w = integral * p_out / p_in;
        out.push_back({ch, w});
        total += w;
    }
    if (!(total > 0.0)) {
        throw BelowThreshold("no exit channel has positive weight");
    }
    for (auto &w : out) {
        w.weight /= total;
    }
    return out;
}

}  // namespace collapse
