#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "epn_recovery/planner.hpp"
#include "epn_recovery/recovery_sim.hpp"
#include "epn_recovery/testbed.hpp"
#include "toy.hpp"

using namespace epn;

namespace {

ComponentRecord rec(int id, std::optional<int> parent) {
    ComponentRecord r;
    r.id = id;
    r.cls = parent ? ComponentClass::distribution : ComponentClass::substation;
    r.parent = parent;
    return r;
}

// Chain 1 -> 2 -> 3; 50 people fed at 2, 100 at 3.
Community chain3() {
    return Community(EpnTree::build({rec(1, std::nullopt), rec(2, 1), rec(3, 2)}), {{1, 50, 2, {}}, {2, 100, 3, {}}},
                     {}, {});
}

DamageScenario days(std::vector<double> d) {
    DamageScenario s;
    s.repair_days = d;
    for (double x : d) s.states.push_back(x > 0 ? DamageState::minor : DamageState::undamaged);
    return s;
}

RecoveryTrajectory traj(double p, double h0, std::vector<std::pair<double, double>> kh) {
    RecoveryTrajectory t;
    t.total_population = p;
    t.initial_level = h0;
    double clock = 0.0;
    int i = 0;
    for (auto [k, h] : kh) {
        clock += k;
        t.epochs.push_back({++i, k, h, clock});
    }
    t.terminal = true;
    return t;
}

Policy fixed_order(std::vector<int> seq, int n) {
    auto order = std::make_shared<PriorityOrder>(PriorityOrder::from_sequence(std::move(seq)));
    return [order, n](const SimState& s) { return base_action(*order, s, n); };
}

}  // namespace

TEST(Step, EarliestCompletion) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    auto s = m.initial_state(days({0.0, 1.0, 3.0}));
    EXPECT_EQ(s.damaged, 2);
    auto r = step(m, s, {{1, 2}});
    EXPECT_EQ(r.k, 1.0);
    EXPECT_EQ(r.repaired, std::vector<int>{1});
    EXPECT_EQ(s.remaining[2], 2.0);
    EXPECT_EQ(s.clock, 1.0);
}

TEST(Step, SimultaneousCompletion) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    auto s = m.initial_state(days({0.0, 2.0, 2.0}));
    auto r = step(m, s, {{1, 2}});
    EXPECT_EQ(r.k, 2.0);
    EXPECT_EQ(r.repaired, (std::vector<int>{1, 2}));
    EXPECT_EQ(s.damaged, 0);
    EXPECT_EQ(s.served, 150.0);
}

TEST(Step, PreemptedProgressPersists) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    auto s = m.initial_state(days({1.0, 3.0, 4.0}));
    step(m, s, {{0, 1}});           // 1 done, component 2 has 2.0 left
    EXPECT_EQ(s.remaining[1], 2.0);
    step(m, s, {{2}});              // 2 preempted; 3 works for 4 days
    EXPECT_EQ(s.remaining[1], 2.0);
    const auto r = step(m, s, {{1}});
    EXPECT_EQ(r.k, 2.0);            // resumes from 2.0, not 3.0
}

TEST(Step, ContractViolations) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    auto s = m.initial_state(days({0.0, 1.0, 3.0}));
    EXPECT_THROW(step(m, s, {{0}}), ContractViolation);
    EXPECT_THROW(step(m, s, {{}}), ContractViolation);
    EXPECT_THROW(step(m, s, {{2, 1}}), ContractViolation);
    EXPECT_THROW(step(m, s, {{1, 1}}), ContractViolation);
    EXPECT_THROW(step(m, s, {{7}}), ContractViolation);
}

TEST(RunPolicy, ZeroDamage) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    const auto run = run_policy(m, days({0, 0, 0}), fixed_order({0, 1, 2}, 1), 1);
    EXPECT_TRUE(run.trajectory.epochs.empty());
    EXPECT_EQ(run.trajectory.initial_level, 150.0);
    EXPECT_EQ(evaluate_F1(run.trajectory, 0.8), 0.0);
    EXPECT_THROW(evaluate_F2(run.trajectory), std::domain_error);
}

TEST(RunPolicy, SingleMinorDistribution) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    const auto table = RestorationTable::standard();
    const auto run = run_policy(m, days({0, 0, table.days(ComponentClass::distribution, DamageState::minor)}),
                                fixed_order({0, 1, 2}, 1), 1);
    ASSERT_EQ(run.trajectory.epochs.size(), 1u);
    EXPECT_EQ(run.trajectory.epochs[0].k, 0.5);
    EXPECT_TRUE(run.actions.empty());
}

TEST(RunPolicy, HandTracedChainLeafFirst) {
    // Times (1, 2, 0.5), N = 1, priority 3, 2, 1:
    //   t1 repair 3: k 0.5, clock 0.5, h 0
    //   t2 repair 2: k 2.0, clock 2.5, h 0
    //   t3 trivial 1: k 1.0, clock 3.5, h 150
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    const auto run = run_policy(m, days({1.0, 2.0, 0.5}), fixed_order({2, 1, 0}, 1), 1);
    const auto& e = run.trajectory.epochs;
    ASSERT_EQ(e.size(), 3u);
    EXPECT_EQ(e[0].k, 0.5);
    EXPECT_EQ(e[0].h, 0.0);
    EXPECT_EQ(e[1].k, 2.0);
    EXPECT_EQ(e[1].clock, 2.5);
    EXPECT_EQ(e[2].k, 1.0);
    EXPECT_EQ(e[2].clock, 3.5);
    EXPECT_EQ(e[2].h, 150.0);
    EXPECT_EQ(run.actions.size(), 2u);
    EXPECT_EQ(evaluate_F1(run.trajectory, 0.5), 3.5);
    EXPECT_EQ(evaluate_F2(run.trajectory), 150.0);
    EXPECT_NEAR(evaluate_F2(run.trajectory, F2Normalization::cumulative_time), 150.0 / 3.5, 1e-12);
}

TEST(RunPolicy, HandTracedChainRootFirst) {
    //   t1 repair 1: k 1, clock 1, h 0
    //   t2 repair 2: k 2, clock 3, h 50
    //   t3 trivial 3: k 0.5, clock 3.5, h 150
    // F2 = (0 + 50*2 + 150*0.5) / 0.5 = 350
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    const auto run = run_policy(m, days({1.0, 2.0, 0.5}), fixed_order({0, 1, 2}, 1), 1);
    ASSERT_EQ(run.trajectory.epochs.size(), 3u);
    EXPECT_EQ(run.trajectory.epochs[1].h, 50.0);
    EXPECT_EQ(evaluate_F2(run.trajectory), 350.0);
    EXPECT_EQ(evaluate_F1(run.trajectory, 0.3), 3.0);
    EXPECT_EQ(evaluate_F1(run.trajectory, 0.0), 0.0);
    EXPECT_EQ(evaluate_F1(run.trajectory, 1.0), 3.5);
}

TEST(Objectives, F2Arithmetic) {
    EXPECT_EQ(evaluate_F2(traj(100, 0, {{2, 100}})), 100.0);
    EXPECT_EQ(evaluate_F2(traj(100, 0, {{1, 50}, {2, 100}})), 125.0);
    EXPECT_NEAR(evaluate_F2(traj(100, 0, {{1, 50}, {2, 100}}), F2Normalization::cumulative_time), 250.0 / 3.0, 1e-12);
}

TEST(Objectives, F1CrossingAtEpoch) {
    const auto t = traj(100, 0, {{1.5, 20}, {3.0, 85}, {1.0, 100}});
    EXPECT_EQ(evaluate_F1(t, 0.8), 4.5);
    EXPECT_EQ(evaluate_F1(t, 0.2), 1.5);
    EXPECT_THROW(evaluate_F1(t, 1.5), std::domain_error);
}

TEST(Objectives, ResilienceIndex) {
    // Level 0 on [0,1), 0.5 on [1,3), 1 on [3,4]: area 2 over T_LC 4.
    const auto t = traj(100, 0, {{1, 50}, {2, 100}});
    EXPECT_NEAR(resilience_index(t, 4.0), 0.5, 1e-15);
    EXPECT_NEAR(resilience_index(traj(100, 100, {}), 10.0), 1.0, 1e-15);
    EXPECT_NEAR(resilience_index(traj(100, 0, {{5, 0}}), 5.0), 0.0, 1e-15);
    EXPECT_THROW(resilience_index(t, 2.0), std::domain_error);
}

TEST(Objectives, TrackerMatchesTrajectory) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto inst = toy::make(seed);
        RecoveryModel m(*inst.community, inst.mode);
        const auto order = random_order(m.components(), seed);
        const auto run = run_policy(m, inst.scenario, [&](const SimState& s) { return base_action(order, s, inst.resources); },
                                    inst.resources);
        for (auto obj : {Objective::f1(0.8), Objective::f2(), Objective::f2(F2Normalization::cumulative_time)}) {
            const double threshold = service_threshold(obj.gamma, m.total_population());
            auto s = m.initial_state(inst.scenario);
            auto t = start_tracker(s, threshold);
            for (const auto& e : run.trajectory.epochs) record_epoch(t, e.k, e.h, e.clock, threshold);
            EXPECT_EQ(score(obj, t), evaluate(obj, run.trajectory));
        }
    }
}

TEST(Properties, InvariantsOnRandomPolicies) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto inst = toy::make(seed);
        RecoveryModel m(*inst.community, inst.mode);
        Rng rng(seed * 31 + 7);
        auto s = m.initial_state(inst.scenario);
        std::map<int, double> work;
        int epochs = 0;
        double prev_h = s.served;
        const int M = s.damaged;
        while (s.damaged > 0) {
            auto d = s.damaged_set();
            std::shuffle(d.begin(), d.end(), rng);
            d.resize(static_cast<std::size_t>(std::min(inst.resources, s.damaged)));
            std::sort(d.begin(), d.end());
            const int before = s.damaged;
            const auto r = step(m, s, {d});
            for (int c : d) work[c] += r.k;
            EXPECT_LT(s.damaged, before);
            EXPECT_GE(s.served, prev_h);
            EXPECT_GT(r.k, 0.0);
            prev_h = s.served;
            ++epochs;
        }
        EXPECT_LE(epochs, M);
        for (int i = 0; i < m.components(); ++i) {
            const double init = inst.scenario.repair_days[static_cast<std::size_t>(i)];
            EXPECT_NEAR(work.count(i) ? work[i] : 0.0, init, 1e-9);
        }
        // Incremental h agrees with the reference definition.
        std::unique_ptr<bool[]> f(new bool[static_cast<std::size_t>(m.components())]);
        for (int i = 0; i < m.components(); ++i) f[static_cast<std::size_t>(i)] = true;
        EXPECT_NEAR(s.served,
                    served_population(*inst.community, std::span<const bool>(f.get(), static_cast<std::size_t>(m.components())), inst.mode),
                    1e-9);
    }
}

TEST(Properties, IncrementalServedMatchesReference) {
    const auto d = testbed::make();
    const auto c = testbed::community(d);
    const auto sites = testbed::sites(d);
    const FieldSampler sampler(d.event, sites, d.attenuation);
    const auto scen = generate_scenario(sampler.sample(3), c.tree(), nearest_sites(c.tree(), sites),
                                        testbed::fragilities(), RestorationTable::standard(), 4);
    for (auto mode : {ServiceMode::households, ServiceMode::households_and_retailers}) {
        RecoveryModel m(c, mode);
        const auto order = random_order(m.components(), 9);
        auto s = m.initial_state(scen);
        const auto n = static_cast<std::size_t>(m.components());
        std::unique_ptr<bool[]> f(new bool[n]);
        while (s.damaged > 0) {
            for (std::size_t i = 0; i < n; ++i) f[i] = !s.is_damaged(static_cast<int>(i));
            EXPECT_NEAR(s.served, served_population(c, std::span<const bool>(f.get(), n), mode), 1e-9);
            m.advance(s, base_action(order, s, 10).components);
        }
    }
}

TEST(RunPolicy, DeterministicAndReplayable) {
    const auto inst = toy::make(12345);
    RecoveryModel m(*inst.community, inst.mode);
    const auto order = random_order(m.components(), 1);
    auto policy = [&](const SimState& s) { return base_action(order, s, inst.resources); };
    const auto a = run_policy(m, inst.scenario, policy, inst.resources);
    const auto b = run_policy(m, inst.scenario, policy, inst.resources);
    const auto r = replay(m, inst.scenario, a.actions, inst.resources);
    ASSERT_EQ(a.trajectory.epochs.size(), b.trajectory.epochs.size());
    ASSERT_EQ(a.trajectory.epochs.size(), r.trajectory.epochs.size());
    for (std::size_t i = 0; i < a.trajectory.epochs.size(); ++i) {
        EXPECT_EQ(a.trajectory.epochs[i].clock, b.trajectory.epochs[i].clock);
        EXPECT_EQ(a.trajectory.epochs[i].h, r.trajectory.epochs[i].h);
    }
    auto longer = a.actions;
    longer.push_back(longer.empty() ? RepairAction{} : longer.back());
    EXPECT_THROW(replay(m, inst.scenario, longer, inst.resources), ContractViolation);
}

TEST(RunPolicy, RejectsInvalidPolicyActions) {
    const auto c = chain3();
    RecoveryModel m(c, ServiceMode::households);
    EXPECT_THROW(run_policy(m, days({1, 1, 1}), [](const SimState&) { return RepairAction{{0}}; }, 2),
                 ContractViolation);
    EXPECT_THROW(run_policy(m, days({1, 1, 1}), fixed_order({0, 1, 2}, 1), 0), ConfigError);
}

TEST(Trajectory, CsvLayout) {
    std::ostringstream out;
    write_trajectory_csv(out, traj(200, 0, {{0.5, 50}, {1.0, 200}}));
    EXPECT_EQ(out.str(),
              "epoch,clock_days,k_days,h_people,served_fraction\n"
              "0,0,0,0,0\n"
              "1,0.5,0.5,50,0.25\n"
              "2,1.5,1,200,1\n");
}
