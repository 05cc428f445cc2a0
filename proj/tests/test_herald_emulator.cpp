#include "hsps/herald_emulator.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "hsps/cascade_sim.hpp"

using namespace hsps;

namespace {

PulseGroups hand_groups() {
    // Times in ps.
    PulseGroups g(10, 100000);
    const std::vector<std::vector<LocalEvent>> pulses{
        {{1, 200}, {2, 2000}},              // 0: BX early, X late
        {{1, 500}},                         // 1: single early photon
        {{2, 3000}},                        // 2: single late photon
        {{1, 400}, {2, 600}},               // 3: both before a 1 ns cutoff
        {{1, 400}, {2, 1500}, {3, 2500}},   // 4: trigger + two signal photons
        {{3, 100}, {1, 800}},               // 5: first photon removed by a 0.3 ns filter
    };
    for (std::size_t i = 0; i < pulses.size(); ++i) g.add(i, pulses[i]);
    return g;
}

const DetectorConfig kResolving = DetectorConfig::ideal();

}  // namespace

TEST(Timed, HandCounts) {
    const HeraldReport r = emulate_timed(hand_groups(), 1.0, 0.0, 0.5, kResolving);
    EXPECT_EQ(r.n_pulses, 10u);
    EXPECT_EQ(r.n_triggers, 5u);  // every pulse with a photon before the cutoff
    EXPECT_EQ(r.n_success, 2u);
    EXPECT_EQ(r.n_signal_1, 1u);
    EXPECT_EQ(r.n_signal_2, 1u);
    EXPECT_DOUBLE_EQ(r.efficiency, 0.2);
    EXPECT_DOUBLE_EQ(*r.purity, 1.0 - 1.0 / 0.5);
    EXPECT_DOUBLE_EQ(*r.determinicity, 0.4);
    EXPECT_EQ(*r.t_c_ns, 1.0);
}

TEST(Timed, FilterDropsEarlyPhotons) {
    const HeraldReport r = emulate_timed(hand_groups(), 1.0, 0.3, 1.0, kResolving);
    // Pulse 0 loses its idler at 200 ps; pulse 5 keeps only its 800 ps photon.
    EXPECT_EQ(r.n_success, 1u);
    EXPECT_EQ(r.n_signal_2, 1u);
    EXPECT_THROW(emulate_timed(hand_groups(), 0.2, 0.3, 1.0, kResolving), DomainError);
}

TEST(Ash, HandCounts) {
    const HeraldReport r = emulate_ash(hand_groups(), 0.5, 0.0, 1.0, kResolving);
    EXPECT_EQ(r.n_triggers, 6u);
    // 0: 1.8 ns gap ok; 3: 0.2 ns gap fails; 4: two signal photons; 5: 0.7 ns gap ok.
    EXPECT_EQ(r.n_success, 3u);
    EXPECT_EQ(r.n_signal_1, 2u);
    EXPECT_EQ(r.n_signal_2, 1u);
    EXPECT_DOUBLE_EQ(*r.purity, 0.5);
    EXPECT_DOUBLE_EQ(*r.determinicity, 0.5);
}

TEST(Ash, ResponseTimeIsStrict) {
    PulseGroups g(1, 10000);
    const std::vector<LocalEvent> ev{{1, 1000}, {2, 1500}};
    g.add(0, ev);
    EXPECT_EQ(emulate_ash(g, 0.5, 0.0, 1.0, kResolving).n_success, 0u);
    EXPECT_EQ(emulate_ash(g, 0.499, 0.0, 1.0, kResolving).n_success, 1u);
}

TEST(Tgf, HandCounts) {
    const HeraldReport r = emulate_tgf(hand_groups(), 0.3, 1.0, kResolving);
    // After 0.3 ns: pulse 0 -> 1, 1 -> 1, 2 -> 1, 3 -> 2, 4 -> 3, 5 -> 1 photons.
    EXPECT_EQ(r.n_success, 4u);
    EXPECT_DOUBLE_EQ(r.efficiency, 0.4);
    EXPECT_DOUBLE_EQ(*r.purity, 4.0 / (4.0 + 1.0 + 1.0));
    EXPECT_FALSE(r.determinicity);
}

TEST(Tgf, GateBeyondLastPhoton) {
    const HeraldReport r = emulate_tgf(hand_groups(), 50.0, 1.0, kResolving);
    EXPECT_EQ(r.n_success, 0u);
    EXPECT_EQ(r.efficiency, 0.0);
    EXPECT_FALSE(r.purity);
}

TEST(BeamSplitter, ChannelRoles) {
    const HeraldReport r = emulate_bs_herald(hand_groups(), 1.0, DetectorConfig{});
    // Idler on channel 1: pulses 0, 1, 3, 4, 5. Signal present in 0, 3, 4, 5.
    EXPECT_EQ(r.n_triggers, 5u);
    EXPECT_EQ(r.n_success, 4u);
    EXPECT_EQ(r.n_signal_2, 1u);
}

TEST(BeamSplitter, SingleChannelStreamIsRejected) {
    PulseGroups g(2, 1000);
    const std::vector<LocalEvent> ev{{1, 100}};
    g.add(0, ev);
    EXPECT_THROW(emulate_bs_herald(g, 1.0, DetectorConfig{}), DomainError);
    EXPECT_THROW(emulate_bs_herald(g, 1.0, DetectorConfig::ideal()), DomainError);
}

TEST(Emulate, EmptyStreamGivesZeroReport) {
    const PulseGroups empty;
    for (Scheme s : {Scheme::kTimed, Scheme::kAsh, Scheme::kTgf, Scheme::kBeamSplitter}) {
        SchemeSettings set{s, 0.3, 1.0, 0.0};
        const HeraldReport r = emulate(empty, set, 1.0, DetectorConfig{});
        EXPECT_EQ(r.n_pulses, 0u);
        EXPECT_EQ(r.efficiency, 0.0);
        EXPECT_FALSE(r.purity);
    }
}

TEST(Emulate, CorrectionWeights) {
    PulseGroups g(4, 100000);
    const std::vector<LocalEvent> two{{1, 200}, {2, 2000}};
    const std::vector<LocalEvent> three{{1, 200}, {2, 2000}, {3, 3000}};
    g.add(0, two);
    g.add(1, three);
    const DetectorConfig d{0.4, 0.5, std::nullopt, 0.0};
    const CorrectionFactors k = correction_factors(d);
    const HeraldReport r = emulate_ash(g, 0.0, 0.0, 0.5, d);
    EXPECT_DOUBLE_EQ(r.n_success_corrected, k.c2 + k.c3);
    EXPECT_DOUBLE_EQ(r.efficiency, (k.c2 + k.c3) / 4.0);
    EXPECT_DOUBLE_EQ(*r.purity, 1.0 - k.c3 / (0.5 * k.c2));
}

TEST(Emulate, InvariantsOnSimulatedData) {
    SimConfig c;
    c.emitter = EmitterParams{0.5, 0.4, 1.0, 0.25, 4.0, 0.8};
    c.noise = NoiseParams{0.02, 0.3, 0.01};
    c.n_pulses = 50000;
    c.rep_period_ns = 20.0;
    const PulseGroups g = localize(simulate_stream(c));
    for (double tf : {0.0, 0.3, 1.0}) {
        for (const HeraldReport& r :
             {emulate_timed(g, 1.2, tf, 0.8, c.detectors), emulate_ash(g, 0.2, tf, 0.8, c.detectors)}) {
            EXPECT_LE(r.n_success, r.n_triggers);
            EXPECT_LE(r.n_triggers, r.n_pulses);
            EXPECT_GE(r.efficiency, 0.0);
            EXPECT_LE(r.efficiency, 1.0);
            ASSERT_TRUE(r.determinicity);
            EXPECT_LE(*r.determinicity, 1.0);
            ASSERT_TRUE(r.purity);
            EXPECT_LE(*r.purity, 1.0);
        }
    }
}

TEST(Emulate, MatchesAnalyticOnIdealStream) {
    SimConfig c;
    c.emitter = EmitterParams{0.7, 0.5, 1.0, 0.25, 4.0, 1.0};
    c.detectors = DetectorConfig::ideal();
    c.n_pulses = 100000;
    c.rep_period_ns = 20.0;
    const PulseGroups g = localize(simulate_stream(c));
    const double n = static_cast<double>(c.n_pulses);
    auto check = [&](double measured, double p) {
        EXPECT_NEAR(measured, p, 5.0 * std::sqrt(p * (1 - p) / n)) << "expected " << p;
    };
    const double tc = tc_opt(1.0, 0.25);
    check(emulate_timed(g, tc, 0.0, 1.0, c.detectors).efficiency, eta_timed(c.emitter, tc));
    check(emulate_ash(g, 0.2, 0.0, 1.0, c.detectors).efficiency, eta_ash(c.emitter, 0.2));
    check(emulate_tgf(g, 1.0, 1.0, c.detectors).efficiency, tgf_metrics(c.emitter, 1.0).efficiency);
}

TEST(Sweep, GridOrderAndOptimum) {
    SimConfig c;
    c.emitter = EmitterParams{1.0, 1.0, 1.0, 0.25, 4.0, 1.0};
    c.detectors = DetectorConfig::ideal();
    c.n_pulses = 200000;
    c.rep_period_ns = 20.0;
    const PulseGroups g = localize(simulate_stream(c));
    std::vector<double> cutoffs;
    for (double t = 0.1; t <= 1.2001; t += 0.1) cutoffs.push_back(t);
    const auto grid = make_grid(SchemeSettings{Scheme::kTimed, 0.0, 0.0, 0.0}, SweepParameter::kCutoff, cutoffs);
    const auto reports = sweep(g, grid, 1.0, c.detectors);
    ASSERT_EQ(reports.size(), cutoffs.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        EXPECT_DOUBLE_EQ(*reports[i].t_c_ns, cutoffs[i]);
        if (reports[i].efficiency > reports[best].efficiency) best = i;
    }
    EXPECT_NEAR(cutoffs[best], tc_opt(1.0, 0.25), 0.1 + 1e-9);
    EXPECT_THROW(sweep(g, std::vector<SchemeSettings>{}, 1.0, c.detectors), DomainError);
}
