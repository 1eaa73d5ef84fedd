// Plans one damage scenario on the synthetic testbed and prints both schedules.
//
//   single_scenario [seed]

#include <cstdlib>
#include <iostream>

#include "epn_recovery/planner.hpp"
#include "epn_recovery/testbed.hpp"

int main(int argc, char** argv) {
    using namespace epn;
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

    const auto data = testbed::make();
    const auto community = testbed::community(data);
    const auto sites = testbed::sites(data);
    const FieldSampler sampler(data.event, sites, data.attenuation);
    const auto scenario = generate_scenario(sampler.sample(derive_seed(seed, 1)), community.tree(),
                                            nearest_sites(community.tree(), sites), testbed::fragilities(),
                                            RestorationTable::standard(), derive_seed(seed, 2));
    std::cout << scenario.damaged_count() << " of " << scenario.size() << " components damaged\n";

    const RecoveryModel model(community, ServiceMode::households);
    const auto order = importance_order(community);
    PlanOptions opt;
    opt.objective = Objective::f1(0.8);
    opt.pooling = Pooling::random_cap;
    opt.cap = 1000;
    opt.seed = seed;

    const auto base = base_plan(model, scenario, order, opt);
    const auto roll = rollout_plan(model, scenario, order, opt);
    std::cout << "days to 80% served: base " << base.objective << ", rollout " << roll.objective << '\n'
              << "final repair day:   base " << base.trajectory.final_clock() << ", rollout "
              << roll.trajectory.final_clock() << "\n\nrollout trajectory:\n";
    write_trajectory_csv(std::cout, roll.trajectory);
}
