#include <gtest/gtest.h>

#include <cmath>

#include "collapse/errors.hpp"
#include "collapse/pipeline.hpp"

using namespace collapse;

namespace {

struct Prepared {
    EntanglementRegistry registry;
    ParticleId particle;
};

std::unique_ptr<Prepared> prepare(const SingleParticleSetup &setup) {
    auto p = std::make_unique<Prepared>();
    p->particle = p->registry.add_particle(setup.type, setup.paths);
    return p;
}

const Vec3 kX = Vec3::UnitX();
const Vec3 kZ = Vec3::UnitZ();

}  // namespace

TEST(FieldObject, decomposes_an_off_axis_spin_along_the_field) {
    const FieldObject field{kZ, 2.0};
    const PathState plus_x({Position{}, Spin{1, kX}});
    const auto rows = field.project(plus_x);
    ASSERT_EQ(rows.size(), 2u);
    const auto born = born_probabilities(rows);
    EXPECT_NEAR(born[0], 0.5, 1e-15);
    EXPECT_NEAR(born[1], 0.5, 1e-15);
    EXPECT_EQ(*rows[0].states[0].momentum(), Vec3(0, 0, 2.0));
    EXPECT_EQ(rows[0].states[0].spin()->twice_projection, 1);
    EXPECT_EQ(*rows[1].states[0].momentum(), Vec3(0, 0, -2.0));
    EXPECT_EQ(rows[1].states[0].spin()->twice_projection, -1);
}

TEST(FieldObject, eigenstates_map_to_a_single_deflection) {
    const FieldObject field{kZ, 1.0};
    const auto up = field.project(PathState({Position{}, Spin{1, kZ}}));
    ASSERT_EQ(up.size(), 1u);
    EXPECT_EQ(up[0].amplitude, Amplitude(1.0));
    const auto flipped_axis = field.project(PathState({Position{}, Spin{1, -kZ}}));
    ASSERT_EQ(flipped_axis.size(), 1u);
    EXPECT_EQ(flipped_axis[0].states[0].spin()->twice_projection, -1);
}

TEST(FieldObject, mapping_must_reach_the_peak_threshold) {
    FieldObject field{kZ, 1.0, 0.8};
    EXPECT_THROW(field.validate(), ValidationError);
    field.peak_threshold = std::sqrt(0.8);
    EXPECT_NO_THROW(field.validate());
    EXPECT_THROW(FieldObject({Vec3(1, 1, 0), 1.0}).validate(), ValidationError);
}

TEST(Detector, rejects_overlapping_bins_and_reports_misses) {
    Detector d{kZ, {{"a", 0.0, 2.0}, {"b", 1.0, 3.0}}};
    EXPECT_THROW(d.validate(), ValidationError);
    d.bins = {{"a", 0.0, 1.0}, {"b", 1.0, 3.0}};
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(d.bin_of(Vec3(0, 0, 0.5)), 0u);
    EXPECT_EQ(d.bin_of(Vec3(0, 0, 2.0)), 1u);
    EXPECT_FALSE(d.bin_of(Vec3(0, 0, 1.0)).has_value());
    EXPECT_FALSE(d.bin_of(Vec3(0, 0, -1.0)).has_value());
}

TEST(RunMeasurement, single_identity_stage_returns_the_input_value) {
    SingleParticleSetup setup;
    const PathState input({Position{Vec3(0, 0, 0.25)}, Momentum{}, Spin{1, kZ}});
    setup.paths = {{input, 1.0}};
    setup.apparatus.stages = {ScreenObject{kZ, 1.0}};
    setup.apparatus.detector = {kZ, {{"here", 0.0, 1.0}}};
    auto p = prepare(setup);
    Rng rng(1);
    const auto result = run_measurement(setup.apparatus, p->particle, p->registry, rng);
    ASSERT_EQ(result.record.stages.size(), 1u);
    EXPECT_EQ(result.record.stages[0].entry_state, input);
    EXPECT_EQ(result.record.final_state, input);
    EXPECT_EQ(result.record.detector_label, "here");
}

TEST(RunMeasurement, detector_bin_follows_the_field_deflection) {
    const auto setup = stern_gerlach_scenario({1, kX}, kZ, 1.0);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto p = prepare(setup);
        Rng rng(seed);
        const auto r = run_measurement(setup.apparatus, p->particle, p->registry, rng).record;
        const double pz = r.final_state.momentum()->z();
        EXPECT_EQ(r.detector_label, pz > 0 ? "up" : "down");
        EXPECT_EQ(r.final_state.spin()->twice_projection, pz > 0 ? 1 : -1);
        EXPECT_EQ(r.stages.size(), setup.apparatus.stages.size());
    }
}

TEST(RunMeasurement, stern_gerlach_on_plus_x_splits_evenly) {
    const auto setup = stern_gerlach_scenario({1, kX}, kZ, 1.0);
    const int n = 100000;
    int up = 0;
    for (int trial = 0; trial < n; ++trial) {
        auto p = prepare(setup);
        Rng rng(derive_seed(42, trial));
        up += run_measurement(setup.apparatus, p->particle, p->registry, rng).record.detector_label == "up";
    }
    EXPECT_LE(std::abs(up - 0.5 * n), 3.0 * std::sqrt(n * 0.25));
}

TEST(RunMeasurement, eigenstates_land_in_their_bin_every_trial) {
    for (int spin : {1, -1}) {
        const auto setup = stern_gerlach_scenario({spin, kZ}, kZ, 1.0);
        for (int trial = 0; trial < 10000; ++trial) {
            auto p = prepare(setup);
            Rng rng(derive_seed(7, trial));
            const auto r = run_measurement(setup.apparatus, p->particle, p->registry, rng).record;
            ASSERT_EQ(r.detector_label, spin > 0 ? "up" : "down");
        }
    }
}

TEST(RunMeasurement, repeated_measurement_gives_the_same_bin) {
    const auto setup = stern_gerlach_scenario({1, kX}, kZ, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        auto p = prepare(setup);
        Rng rng(derive_seed(3, trial));
        const auto first = run_measurement(setup.apparatus, p->particle, p->registry, rng);
        const auto second = run_measurement(setup.apparatus, first.particle, p->registry, rng);
        ASSERT_EQ(first.record.detector_bin, second.record.detector_bin);
    }
}

TEST(RunMeasurement, input_collection_is_dead_after_the_first_stage) {
    const auto setup = stern_gerlach_scenario({1, kX}, kZ, 1.0);
    auto p = prepare(setup);
    p->registry.set_audit_after_mutation(true);
    const CollectionId before = p->registry.particle(p->particle).collection;
    Rng rng(5);
    run_measurement(setup.apparatus, p->particle, p->registry, rng);
    EXPECT_FALSE(p->registry.is_live(before));
    EXPECT_FALSE(p->registry.is_live(p->particle));
}

TEST(RunMeasurement, draws_are_position_path_channel_per_stage_then_readout) {
    const auto setup = stern_gerlach_scenario({1, kX}, kZ, 1.0);
    auto p = prepare(setup);
    Rng rng(8);
    const auto r = run_measurement(setup.apparatus, p->particle, p->registry, rng).record;
    std::vector<Decision> kinds;
    for (const auto &d : r.draws) {
        kinds.push_back(d.decision);
    }
    EXPECT_EQ(kinds, (std::vector{Decision::position, Decision::path, Decision::channel, Decision::position,
                                  Decision::path, Decision::channel, Decision::readout}));
    EXPECT_EQ(r.seed, 8u);
}

TEST(RunMeasurement, final_position_outside_every_bin_is_a_detector_miss) {
    const auto setup = repeated_field_scenario(2, 0.5 * (1 + 1e-9), kZ, 1.0);
    int misses = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto p = prepare(setup);
        Rng rng(derive_seed(1, trial));
        try {
            run_measurement(setup.apparatus, p->particle, p->registry, rng);
        } catch (const DetectorMiss &) {
            ++misses;
        }
    }
    EXPECT_GT(misses, 50);
    EXPECT_LT(misses, 150);
}

TEST(Epr, aligned_axes_give_perfect_anticorrelation_in_either_order) {
    const auto setup = epr_scenario(anticorrelated_table(kZ, Vec3(-10, 0, 0), Vec3(10, 0, 0)), kZ, kZ);
    int a_up[2] = {0, 0};
    const int n = 5000;
    for (int order = 0; order < 2; ++order) {
        for (int trial = 0; trial < n; ++trial) {
            EntanglementRegistry reg;
            Rng rng(derive_seed(11, trial));
            const auto out = run_epr(setup, order == 1, reg, rng);
            ASSERT_NE(out.a.detector_label, out.b.detector_label);
            a_up[order] += out.a.detector_label == "up";
        }
    }
    for (int count : a_up) {
        EXPECT_LE(std::abs(count - 0.5 * n), 3.0 * std::sqrt(n * 0.25));
    }
}

TEST(Epr, measuring_a_terminates_entanglement_and_fixes_b) {
    const auto setup = epr_scenario(anticorrelated_table(kZ, Vec3(-10, 0, 0), Vec3(10, 0, 0)), kZ, kZ);
    for (int trial = 0; trial < 500; ++trial) {
        EntanglementRegistry reg;
        reg.set_audit_after_mutation(true);
        const std::array types{ParticleType::electron, ParticleType::electron};
        const auto ids = reg.add_entangled(types, setup.rows);
        const auto b_before = marginal_probabilities(reg.collection_of(ids[1]), 1, ComponentKind::spin);
        ASSERT_EQ(b_before.size(), 2u);
        Rng rng(derive_seed(12, trial));
        const auto a = run_measurement(setup.a, ids[0], reg, rng);
        for (CollectionId c : reg.live_collections()) {
            ASSERT_EQ(reg.collection(c).members.size(), 1u);
        }
        const PwCollection &b = reg.collection_of(ids[1]);
        ASSERT_EQ(b.rows.size(), 1u);
        EXPECT_EQ(b.rows[0].states[0].spin()->twice_projection, -a.record.final_state.spin()->twice_projection);

        const auto a_again = run_measurement(setup.a, a.particle, reg, rng);
        EXPECT_EQ(a_again.record.detector_label, a.record.detector_label);
        const auto b_result = run_measurement(setup.b, ids[1], reg, rng);
        EXPECT_NE(b_result.record.detector_label, a.record.detector_label);
    }
}

TEST(Epr, basis_rotation_and_bad_shapes_are_rejected) {
    const auto rows = anticorrelated_table(kZ, Vec3::Zero(), Vec3(1, 0, 0));
    EXPECT_THROW(epr_scenario(rows, kZ, kX), ValidationError);
    std::vector<PathRow> three = rows;
    three[0].states.push_back(three[0].states[0]);
    EXPECT_THROW(epr_scenario(three, kZ, kZ), ShapeMismatch);
    EXPECT_THROW(epr_scenario({}, kZ, kZ), ShapeMismatch);
}

TEST(RepeatedField, accepted_runs_follow_the_compounded_peak) {
    const double q = 0.8;
    for (int k : {1, 2, 3}) {
        const auto setup = repeated_field_scenario(k, q, kZ, 1.0);
        const int n = 20000;
        int up = 0, accepted = 0;
        for (int trial = 0; trial < n; ++trial) {
            auto p = prepare(setup);
            Rng rng(derive_seed(k, trial));
            try {
                up += run_measurement(setup.apparatus, p->particle, p->registry, rng).record.detector_label == "up";
                ++accepted;
            } catch (const DetectorMiss &) {
            }
        }
        const double pk = std::pow(q, k), qk = std::pow(1 - q, k);
        const double accept = pk + qk;
        const double peak = pk / accept;
        EXPECT_LE(std::abs(accepted - n * accept), 3.0 * std::sqrt(n * accept * (1 - accept))) << k;
        EXPECT_LE(std::abs(up - accepted * peak), 3.0 * std::sqrt(accepted * peak * (1 - peak)) + 1) << k;
    }
}
