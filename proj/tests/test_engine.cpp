#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "collapse/engine.hpp"
#include "collapse/errors.hpp"

using namespace collapse;

namespace {

PathState beam_state(const Vec3 &pos, double pz, int spin) {
    return PathState({Position{pos}, Momentum{Vec3(0, 0, pz)}, Spin{spin, Vec3::UnitZ()}});
}

struct BhabhaPair {
    ParticleId electron;
    ParticleId positron;
};

BhabhaPair add_beams(EntanglementRegistry &reg, double momentum = 1000.0) {
    return {reg.add_particle(ParticleType::electron, {{beam_state(Vec3::Zero(), momentum, 1), 1.0}}),
            reg.add_particle(ParticleType::positron, {{beam_state(Vec3::Zero(), -momentum, -1), 1.0}})};
}

InteractionConfig bhabha_config(const Constants &c = {}) {
    InteractionConfig config;
    config.couplings = CouplingConstants::from(c);
    return config;
}

InteractionConfig declared_config(std::vector<PathRow> rows, ParticleType exit = ParticleType::electron) {
    InteractionConfig config;
    config.channel_policy = {false, Channel::elastic};
    config.declared = DeclaredProjection{{exit}, [rows](std::span<const PathState>) { return rows; }};
    return config;
}

PathState at(double x) {
    return PathState({Position{Vec3(x, 0, 0)}});
}

double three_sigma(int n, double p) {
    return 3.0 * std::sqrt(n * p * (1.0 - p));
}

}  // namespace

TEST(FluctuationPosition, single_cell_is_always_chosen) {
    EntanglementRegistry reg;
    const ParticleId a = reg.add_particle(ParticleType::electron, {{at(2), 1.0}});
    Rng rng(1);
    const std::array ids{a};
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(sample_fluctuation_position(ids, reg, rng), Vec3(2, 0, 0));
    }
    EXPECT_EQ(rng.trace().size(), 100u);
    EXPECT_EQ(rng.trace().back().decision, Decision::position);
}

TEST(FluctuationPosition, follows_born_weights_of_the_position_marginal) {
    EntanglementRegistry reg;
    const ParticleId a = reg.add_particle(ParticleType::electron, {{at(0), 0.5}, {at(1), std::sqrt(0.75)}});
    Rng rng(2);
    const std::array ids{a};
    const int n = 100000;
    int first = 0;
    for (int i = 0; i < n; ++i) {
        first += sample_fluctuation_position(ids, reg, rng).x() == 0.0 ? 1 : 0;
    }
    EXPECT_LE(std::abs(first - 0.25 * n), three_sigma(n, 0.25));
}

TEST(FluctuationPosition, disjoint_supports_share_the_draw_equally) {
    EntanglementRegistry reg;
    const std::array ids{reg.add_particle(ParticleType::electron, {{at(0), 1.0}}),
                         reg.add_particle(ParticleType::positron, {{at(7), 1.0}})};
    Rng rng(3);
    const int n = 20000;
    int first = 0;
    for (int i = 0; i < n; ++i) {
        first += sample_fluctuation_position(ids, reg, rng).x() == 0.0 ? 1 : 0;
    }
    EXPECT_LE(std::abs(first - 0.5 * n), three_sigma(n, 0.5));
}

TEST(FluctuationPosition, no_positional_support_is_an_error) {
    EntanglementRegistry reg;
    const std::array ids{reg.add_particle(ParticleType::electron, {{PathState({Spin{}}), 1.0}})};
    Rng rng(4);
    EXPECT_THROW(sample_fluctuation_position(ids, reg, rng), EmptySupport);
}

TEST(SelectPartner, absent_single_and_uniform_cases) {
    EntanglementRegistry reg;
    const ParticleId far = reg.add_particle(ParticleType::positron, {{at(5), 1.0}});
    const ParticleId near1 = reg.add_particle(ParticleType::positron, {{at(0), 1.0}});
    const ParticleId near2 = reg.add_particle(ParticleType::positron, {{at(0), 0.6}, {at(1), 0.8}});
    Rng rng(5);
    const Vec3 origin = Vec3::Zero();

    const std::array none{far};
    EXPECT_FALSE(select_partner(origin, none, Force::electro_weak, reg, rng).has_value());
    const std::array one{far, near1};
    EXPECT_EQ(select_partner(origin, one, Force::electro_weak, reg, rng), near1);
    EXPECT_TRUE(rng.trace().empty());
    EXPECT_FALSE(select_partner(origin, one, Force::strong, reg, rng).has_value());

    const std::array two{near1, far, near2};
    const int n = 10000;
    int first = 0;
    for (int i = 0; i < n; ++i) {
        first += select_partner(origin, two, Force::electro_weak, reg, rng) == near1 ? 1 : 0;
    }
    EXPECT_LE(std::abs(first - 0.5 * n), three_sigma(n, 0.5));
    EXPECT_EQ(rng.trace().size(), static_cast<std::size_t>(n));
    EXPECT_EQ(rng.trace().front().decision, Decision::partner);
}

TEST(Projection, zero_coupling_without_fallback_has_no_open_exit_states) {
    const std::array types{ParticleType::electron, ParticleType::positron};
    const std::array states{beam_state(Vec3::Zero(), 500, 1), beam_state(Vec3::Zero(), -500, 1)};
    InteractionConfig config;
    config.couplings = {0.0};
    config.channel_policy = {false, Channel::electron_pair};
    EXPECT_THROW(probabilistic_projection(types, states, Channel::electron_pair, config, {}, Vec3::Zero()),
                 NoOpenExitStates);

    config.uniform_fallback = true;
    const Projection p = probabilistic_projection(types, states, Channel::electron_pair, config, {}, Vec3::Zero());
    EXPECT_EQ(p.rows.size(), config.grid.cell_count());
    const auto born = born_probabilities(p.rows);
    for (double w : born) {
        EXPECT_DOUBLE_EQ(w, 1.0 / static_cast<double>(born.size()));
    }
}

TEST(Projection, bhabha_rows_match_direct_per_cell_evaluation) {
    const Constants constants;
    const double e = constants.coupling();
    const std::array types{ParticleType::electron, ParticleType::positron};
    const std::array states{beam_state(Vec3(1, 2, 3), 800, 1), beam_state(Vec3(1, 2, 3), -800, -1)};
    InteractionConfig config;
    config.couplings = {e};
    config.grid.cos_bins = 64;
    config.grid.phi_bins = 1;
    const Projection p =
        probabilistic_projection(types, states, Channel::electron_pair, config, constants, Vec3(1, 2, 3));
    ASSERT_EQ(p.rows.size(), 64u * 4u);
    EXPECT_EQ(p.exit_types, (std::vector{ParticleType::electron, ParticleType::positron}));

    const double m = constants.electron_mass;
    const ExternalLepton in_e{ParticleType::electron, FourMomentum::on_shell({0, 0, 800}, m), {1, Vec3::UnitZ()}, m};
    const ExternalLepton in_p{ParticleType::positron, FourMomentum::on_shell({0, 0, -800}, m), {-1, Vec3::UnitZ()},
                              m};
    double total = 0.0;
    std::vector<double> direct;
    std::vector<double> cos_seen;
    for (const PathRow &row : p.rows) {
        ASSERT_EQ(*row.states[0].position(), Vec3(1, 2, 3));
        const Vec3 k3 = *row.states[0].momentum();
        const Vec3 k4 = *row.states[1].momentum();
        const ExternalLepton out_e{ParticleType::electron, FourMomentum::on_shell(k3, m), *row.states[0].spin(), m};
        const ExternalLepton out_p{ParticleType::positron, FourMomentum::on_shell(k4, m), *row.states[1].spin(), m};
        const double w = std::norm(bhabha_amplitude(in_e, in_p, out_e, out_p, {e}));
        direct.push_back(w);
        total += w;
        cos_seen.push_back(k3.z() / k3.norm());
    }
    const auto born = born_probabilities(p.rows);
    for (std::size_t i = 0; i < born.size(); ++i) {
        EXPECT_NEAR(born[i], direct[i] / total, 1e-9 * born[i] + 1e-15) << i;
    }
    // Bin centres in cos theta for the lab = CM frame here.
    for (std::size_t bin = 0; bin < 64; ++bin) {
        EXPECT_NEAR(cos_seen[bin * 4], -1.0 + (bin + 0.5) / 32.0, 1e-9);
    }
}

TEST(Projection, declared_toy_function_gives_equal_born_weights) {
    const InteractionConfig config =
        declared_config({{{at(0)}, Amplitude(1, 0)}, {{at(1)}, Amplitude(0, 1)}});
    const std::array types{ParticleType::electron, ParticleType::photon};
    const std::array states{at(0), at(0)};
    const Projection p = probabilistic_projection(types, states, Channel::elastic, config, {}, Vec3::Zero());
    const auto born = born_probabilities(p.rows);
    ASSERT_EQ(born.size(), 2u);
    EXPECT_DOUBLE_EQ(born[0], 0.5);
    EXPECT_DOUBLE_EQ(born[1], 0.5);
}

TEST(Projection, closed_fixed_channel_is_rejected) {
    const std::array types{ParticleType::electron, ParticleType::positron};
    const std::array states{beam_state(Vec3::Zero(), 50, 1), beam_state(Vec3::Zero(), -50, 1)};
    InteractionConfig config;
    config.couplings = {1.0};
    EXPECT_THROW(probabilistic_projection(types, states, Channel::muon_pair, config, {}, Vec3::Zero()),
                 NoOpenExitStates);
}

TEST(Projection, elastic_scattering_off_a_different_flavour) {
    const Constants constants;
    const std::array types{ParticleType::electron, ParticleType::antimuon};
    const std::array states{beam_state(Vec3::Zero(), 300, 1),
                            PathState({Position{}, Momentum{Vec3::Zero()}, Spin{1, Vec3::UnitZ()}})};
    InteractionConfig config;
    config.couplings = CouplingConstants::from(constants);
    const Projection p = probabilistic_projection(types, states, Channel::elastic, config, constants, Vec3::Zero());
    EXPECT_EQ(p.exit_types, (std::vector{ParticleType::electron, ParticleType::antimuon}));
    const std::array masses{constants.electron_mass, constants.muon_mass};
    const FourMomentum entry = total_four_momentum(states, masses);
    for (const PathRow &row : p.rows) {
        EXPECT_TRUE(conserves(entry, total_four_momentum(row.states, masses), 1e-6));
    }
    EXPECT_THROW(probabilistic_projection(types, states, Channel::electron_pair, config, constants, Vec3::Zero()),
                 InvalidInteraction);
}

TEST(RunInteraction, single_path_single_cell_is_deterministic) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        EntanglementRegistry reg;
        reg.set_audit_after_mutation(true);
        const ParticleId a = reg.add_particle(ParticleType::electron, {{at(0), 1.0}});
        const ParticleId b = reg.add_particle(ParticleType::photon, {{at(0), 1.0}});
        Rng rng(seed);
        const auto r = run_interaction(a, b, declared_config({{{at(4)}, 1.0}}), reg, rng);
        ASSERT_TRUE(r.interacted);
        EXPECT_EQ(r.exit_particles.size(), 1u);
        EXPECT_EQ(reg.collection(r.exit_collection).rows, (std::vector<PathRow>{{{at(4)}, 1.0}}));
        EXPECT_EQ(reg.particle_count(), 1u);
        EXPECT_FALSE(reg.is_live(a));
        EXPECT_FALSE(reg.is_live(b));
        EXPECT_EQ(r.channel, Channel::elastic);
    }
}

TEST(RunInteraction, two_position_superposition_splits_evenly) {
    const int n = 20000;
    int first = 0;
    const double h = 1.0 / std::sqrt(2.0);
    for (int trial = 0; trial < n; ++trial) {
        EntanglementRegistry reg;
        const ParticleId a = reg.add_particle(ParticleType::electron, {{at(0), h}, {at(1), h}});
        const ParticleId b = reg.add_particle(ParticleType::photon, {{at(0), h}, {at(1), h}});
        Rng rng(derive_seed(17, trial));
        const auto r = run_interaction(a, b, declared_config({{{at(9)}, 1.0}}), reg, rng);
        ASSERT_TRUE(r.interacted);
        first += r.fluctuation.position.x() == 0.0 ? 1 : 0;
    }
    EXPECT_LE(std::abs(first - 0.5 * n), three_sigma(n, 0.5));
}

TEST(RunInteraction, path_reduction_only_considers_rows_at_the_position) {
    EntanglementRegistry reg;
    const ParticleId a = reg.add_particle(ParticleType::electron, {{at(0), 0.6}, {at(1), 0.8}});
    const ParticleId b = reg.add_particle(ParticleType::photon, {{at(0), 1.0}});
    Rng rng(8);
    const auto r = run_interaction(a, b, declared_config({{{at(9)}, 1.0}}), reg, rng);
    ASSERT_TRUE(r.interacted);
    EXPECT_EQ(r.fluctuation.position, Vec3::Zero());
    EXPECT_EQ(r.selected_entry_rows, (std::vector<std::size_t>{0, 0}));
}

TEST(RunInteraction, partner_without_support_is_a_no_op) {
    EntanglementRegistry reg;
    const ParticleId a = reg.add_particle(ParticleType::electron, {{at(0), 1.0}});
    const ParticleId b = reg.add_particle(ParticleType::photon, {{at(3), 1.0}});
    const CollectionId before = reg.particle(a).collection;
    Rng rng(9);
    const auto r = run_interaction(a, b, declared_config({{{at(9)}, 1.0}}), reg, rng);
    EXPECT_FALSE(r.interacted);
    EXPECT_EQ(r.fluctuation.participants.size(), 1u);
    EXPECT_TRUE(reg.is_live(before));
    EXPECT_EQ(reg.particle_count(), 2u);
    EXPECT_EQ(rng.trace().size(), 1u);
}

TEST(RunInteraction, force_tags_must_match) {
    EntanglementRegistry reg;
    const auto beams = add_beams(reg);
    InteractionConfig config = bhabha_config();
    config.force = Force::strong;
    Rng rng(1);
    EXPECT_THROW(run_interaction(beams.electron, beams.positron, config, reg, rng), ForceMismatch);
}

TEST(RunInteraction, bhabha_runs_keep_the_registry_coherent) {
    const Constants constants;
    const InteractionConfig config = bhabha_config(constants);
    std::map<Channel, int> channels;
    for (int trial = 0; trial < 1000; ++trial) {
        EntanglementRegistry reg(constants);
        reg.set_audit_after_mutation(true);
        const auto beams = add_beams(reg, 1000.0);
        const CollectionId ce = reg.particle(beams.electron).collection;
        const CollectionId cp = reg.particle(beams.positron).collection;
        Rng rng(derive_seed(99, trial));
        const auto r = run_interaction(beams.electron, beams.positron, config, reg, rng);
        ASSERT_TRUE(r.interacted);
        ++channels[r.channel];

        const PwCollection &exit = reg.collection(r.exit_collection);
        double norm = 0.0;
        for (const PathRow &row : exit.rows) {
            norm += std::norm(row.amplitude);
        }
        EXPECT_NEAR(norm, 1.0, 1e-12);
        ASSERT_EQ(r.exit_particles.size(), 2u);
        EXPECT_EQ(reg.particle(r.exit_particles[0]).collection, reg.particle(r.exit_particles[1]).collection);
        EXPECT_EQ(r.collapsed_ids, (std::vector<CollectionId>{ce, cp}));
        EXPECT_FALSE(reg.is_live(ce));
        EXPECT_FALSE(reg.is_live(cp));
        EXPECT_LE(r.amplitude_evaluations, config.grid.cell_count() * kLeptonPairChannels.size());

        const auto draws = r.draws();
        ASSERT_EQ(draws.size(), 3u);
        EXPECT_EQ(draws[0].decision, Decision::position);
        EXPECT_EQ(draws[1].decision, Decision::path);
        EXPECT_EQ(draws[2].decision, Decision::channel);
        EXPECT_EQ(draws, rng.trace());
    }
    // Below the tau threshold, and the forward Bhabha peak makes mu pairs rare.
    EXPECT_EQ(channels[Channel::tau_pair], 0);
    EXPECT_GE(channels[Channel::electron_pair], 990);
}

TEST(RunInteraction, channel_frequencies_follow_channel_weights) {
    const Constants constants;
    InteractionConfig config = bhabha_config(constants);
    config.quadrature.forward_cutoff = 0.5;
    const auto weights = channel_weights(2000.0, config.couplings, constants, config.quadrature);
    const int n = 3000;
    int muons = 0;
    for (int trial = 0; trial < n; ++trial) {
        EntanglementRegistry reg(constants);
        const auto beams = add_beams(reg, std::sqrt(1000.0 * 1000.0 - constants.electron_mass * constants.electron_mass));
        Rng rng(derive_seed(5, trial));
        muons += run_interaction(beams.electron, beams.positron, config, reg, rng).channel == Channel::muon_pair;
    }
    EXPECT_LE(std::abs(muons - n * weights[1].weight), three_sigma(n, weights[1].weight));
}

TEST(RunInteraction, exit_collection_is_registered_before_collapse) {
    EntanglementRegistry reg;
    const auto beams = add_beams(reg);
    Rng rng(4);
    const auto r = run_interaction(beams.electron, beams.positron, bhabha_config(), reg, rng);
    std::vector<Action> order;
    for (const auto &entry : r.log) {
        order.push_back(entry.action);
    }
    EXPECT_EQ(order, (std::vector{Action::position_determination, Action::partner_selection, Action::path_reduction,
                                  Action::channel_determination, Action::probabilistic_projection,
                                  Action::collapse}));
    EXPECT_LT(r.collapsed_ids.back(), r.exit_collection);
}

TEST(RunInteraction, exit_rows_conserve_four_momentum) {
    const Constants constants;
    InteractionConfig config = bhabha_config(constants);
    config.channel_policy = {false, Channel::muon_pair};
    EntanglementRegistry reg(constants);
    const ParticleId e = reg.add_particle(
        ParticleType::electron,
        {{PathState({Position{}, Momentum{Vec3(30, -20, 700)}, Spin{1, Vec3::UnitZ()}}), 1.0}});
    const ParticleId p = reg.add_particle(
        ParticleType::positron,
        {{PathState({Position{}, Momentum{Vec3(-10, 5, -400)}, Spin{1, Vec3::UnitX()}}), 1.0}});
    Rng rng(6);
    const auto r = run_interaction(e, p, config, reg, rng);
    const std::array entry_masses{constants.electron_mass, constants.electron_mass};
    const std::array exit_masses{constants.muon_mass, constants.muon_mass};
    const FourMomentum entry = total_four_momentum(r.entry_states, entry_masses);
    for (const PathRow &row : reg.collection(r.exit_collection).rows) {
        EXPECT_TRUE(conserves(entry, total_four_momentum(row.states, exit_masses), config.grid.tolerance));
    }
}

TEST(RunInteraction, exit_table_depends_only_on_the_selected_entry_row) {
    const Constants constants;
    const InteractionConfig config = bhabha_config(constants);
    int compared = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        std::vector<PathRow> tables[2];
        std::size_t rows[2];
        for (int variant = 0; variant < 2; ++variant) {
            EntanglementRegistry reg(constants);
            const Amplitude discarded = variant == 0 ? Amplitude(0.6) : Amplitude(0.1, -0.55);
            const ParticleId e = reg.add_particle(
                ParticleType::electron,
                {{beam_state(Vec3::Zero(), 900, 1), 0.8}, {beam_state(Vec3::Zero(), 300, -1), discarded}});
            const ParticleId p =
                reg.add_particle(ParticleType::positron, {{beam_state(Vec3::Zero(), -900, -1), 1.0}});
            Rng rng(seed);
            const auto r = run_interaction(e, p, config, reg, rng);
            tables[variant] = reg.collection(r.exit_collection).rows;
            rows[variant] = r.selected_entry_rows[0];
        }
        if (rows[0] == 0 && rows[1] == 0) {
            ++compared;
            EXPECT_EQ(tables[0], tables[1]) << seed;
        }
    }
    EXPECT_GT(compared, 10);
}

TEST(RunInteraction, collapse_frees_an_entangled_partner_in_a_definite_state) {
    EntanglementRegistry reg;
    reg.set_audit_after_mutation(true);
    const double h = 1.0 / std::sqrt(2.0);
    const PathState up_a({Position{Vec3(0, 0, 0)}, Spin{1, Vec3::UnitZ()}});
    const PathState down_a({Position{Vec3(0, 0, 0)}, Spin{-1, Vec3::UnitZ()}});
    const PathState up_b({Position{Vec3(50, 0, 0)}, Spin{1, Vec3::UnitZ()}});
    const PathState down_b({Position{Vec3(50, 0, 0)}, Spin{-1, Vec3::UnitZ()}});
    const std::array types{ParticleType::electron, ParticleType::electron};
    const auto ids = reg.add_entangled(types, {{{up_a, down_b}, h}, {{down_a, up_b}, h}});
    const ParticleId field = reg.add_particle(ParticleType::photon, {{PathState({Position{}}), 1.0}});
    const CollectionId joint = reg.particle(ids[0]).collection;
    Rng rng(21);
    const auto r = run_interaction(ids[0], field, declared_config({{{at(1)}, 1.0}}), reg, rng);
    ASSERT_TRUE(r.interacted);
    EXPECT_FALSE(reg.is_live(joint));
    EXPECT_TRUE(reg.is_live(ids[1]));
    const PwCollection &b = reg.collection_of(ids[1]);
    ASSERT_EQ(b.rows.size(), 1u);
    EXPECT_EQ(b.members.size(), 1u);
    EXPECT_EQ(b.rows[0].states[0].spin()->twice_projection, -r.entry_states[0].spin()->twice_projection);
}

TEST(RunInteraction, participants_sharing_a_collection_draw_one_joint_row) {
    EntanglementRegistry reg;
    const std::array types{ParticleType::electron, ParticleType::positron};
    const PathState e0({Position{Vec3(0, 0, 0)}, Momentum{Vec3(0, 0, 600)}, Spin{1, Vec3::UnitZ()}});
    const PathState p0({Position{Vec3(0, 0, 0)}, Momentum{Vec3(0, 0, -600)}, Spin{1, Vec3::UnitZ()}});
    const PathState e1 = e0.with(Position{Vec3(1, 0, 0)});
    const PathState p1 = p0.with(Position{Vec3(2, 0, 0)});
    const auto ids = reg.add_entangled(types, {{{e0, p0}, 0.6}, {{e1, p1}, 0.8}});
    Rng rng(2);
    for (int attempt = 0; attempt < 50; ++attempt) {
        EntanglementRegistry copy = reg;
        const auto r = run_interaction(ids[0], ids[1], bhabha_config(), copy, rng);
        if (r.interacted) {
            EXPECT_EQ(r.fluctuation.position, Vec3::Zero());
            EXPECT_EQ(r.selected_entry_rows, (std::vector<std::size_t>{0, 0}));
            EXPECT_EQ(r.collapsed_ids.size(), 1u);
        } else {
            EXPECT_NE(r.fluctuation.position, Vec3::Zero());
        }
    }
}

TEST(InteractionConfig, validation) {
    InteractionConfig c;
    EXPECT_NO_THROW(c.validate());
    c.grid.cos_bins = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.quadrature.forward_cutoff = 1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = declared_config({{{at(0)}, 1.0}});
    c.channel_policy.dynamic = true;
    EXPECT_THROW(c.validate(), ValidationError);
}
