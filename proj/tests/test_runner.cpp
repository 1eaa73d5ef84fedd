#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "epn_recovery/runner.hpp"
#include "epn_recovery/testbed.hpp"

using namespace epn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("epn_runner_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_testbed(const std::string& name) {
    const auto dir = scratch_dir(name) / "in";
    testbed::write(testbed::make(), dir);
    auto cfg = load_config(dir / "experiment.cfg");
    cfg.scenarios = 3;
    cfg.cap = 20;
    cfg.threads = 1;
    return cfg;
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
    return t;
}

}  // namespace

TEST(Config, ParsesKeysCommentsAndPaths) {
    std::istringstream in(
        "# comment\n"
        "components = net/c.csv  # trailing\n"
        "\n"
        "objective = f1\n"
        "gamma = 0.75\n"
        "lookahead = full\n"
        "pooling = n-step\n"
        "mode = case2\n"
        "base = smart\n"
        "c2 = -1.25\n");
    const auto cfg = parse_config(in, "x.cfg", "/data");
    EXPECT_EQ(cfg.components, fs::path("/data/net/c.csv"));
    EXPECT_EQ(cfg.objective, ObjectiveKind::f1);
    EXPECT_EQ(cfg.gamma, 0.75);
    EXPECT_EQ(cfg.lookahead, full_horizon);
    EXPECT_EQ(cfg.pooling, Pooling::n_step);
    EXPECT_EQ(cfg.mode, ServiceMode::households_and_retailers);
    EXPECT_EQ(cfg.base, BaseKind::smart);
    EXPECT_EQ(cfg.attenuation.c[2], -1.25);
}

TEST(Config, ErrorsNameFileAndLine) {
    auto message = [](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_config(in, "exp.cfg");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("seed = 1\nbogus = 3\n").find("exp.cfg:2"), std::string::npos);
    EXPECT_NE(message("\n\nresources = two\n").find("exp.cfg:3"), std::string::npos);
    EXPECT_NE(message("resources = 2.5\n").find("exp.cfg:1"), std::string::npos);
    EXPECT_NE(message("no equals sign\n").find("exp.cfg:1"), std::string::npos);
    EXPECT_NE(message("pooling = greedy\n").find("exp.cfg:1"), std::string::npos);
    ExperimentConfig bad;
    bad.gamma = 1.5;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/exp.cfg"), LoadError);
}

TEST(Aggregates, CumulativeMovingAverageByHand) {
    const auto cma = cumulative_moving_average({4.0, 8.0, 3.0});
    ASSERT_EQ(cma.size(), 3u);
    EXPECT_EQ(cma[0], 4.0);
    EXPECT_EQ(cma[1], 6.0);
    EXPECT_EQ(cma[2], 5.0);
}

TEST(Aggregates, ServedFractionStepFunction) {
    const auto t = traj(200, 20, {{1.0, 50}, {2.0, 200}});
    EXPECT_EQ(served_fraction_at(t, 0.0), 0.1);
    EXPECT_EQ(served_fraction_at(t, 0.99), 0.1);
    EXPECT_EQ(served_fraction_at(t, 1.0), 0.25);
    EXPECT_EQ(served_fraction_at(t, 3.0), 1.0);
    EXPECT_EQ(served_fraction_at(t, 50.0), 1.0);
}

TEST(Aggregates, MeanTrajectoryBands) {
    const auto a = traj(100, 0, {{1.0, 100}});
    const auto b = traj(100, 0, {{2.0, 100}});
    const auto one = mean_trajectory({&a}, 0.5);
    for (const auto& r : one) EXPECT_EQ(r.std, 0.0);
    const auto same = mean_trajectory({&a, &a, &a}, 0.5);
    for (std::size_t i = 0; i < same.size(); ++i) {
        EXPECT_EQ(same[i].mean, one[i].mean);
        EXPECT_EQ(same[i].std, 0.0);
    }
    // At t = 1.5 one trajectory is at 1 and the other at 0.
    const auto two = mean_trajectory({&a, &b}, 0.5);
    ASSERT_EQ(two.size(), 5u);
    EXPECT_EQ(two[3].t, 1.5);
    EXPECT_NEAR(two[3].mean, 0.5, 1e-15);
    EXPECT_NEAR(two[3].std, 0.5, 1e-15);
    EXPECT_EQ(two[4].mean, 1.0);
    EXPECT_THROW(mean_trajectory({}, 0.5), std::invalid_argument);
}

TEST(Experiment, ZeroDamageScenario) {
    auto cfg = small_testbed("zero");
    cfg.attenuation.c[0] = -30.0;
    cfg.scenarios = 1;
    const auto s = run_experiment(cfg);
    ASSERT_EQ(s.scenarios.size(), 1u);
    const auto& r = s.scenarios[0];
    EXPECT_EQ(r.damaged, 0);
    EXPECT_EQ(r.base.days_to_gamma, 0.0);
    EXPECT_EQ(r.rollout.f2, s.total_population);
    EXPECT_TRUE(r.rollout.trajectory.epochs.empty());
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
    auto cfg = small_testbed("det");
    const auto root = cfg.components.parent_path().parent_path();
    run_experiment(cfg, root / "a");
    cfg.threads = 3;
    run_experiment(cfg, root / "b");
    const auto a = slurp(root / "a" / "summary.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(root / "b" / "summary.csv"));

    for (const char* f : {"manifest.json", "plotdata_mean_base.csv", "plotdata_mean_rollout.csv",
                          "plotdata_hist_f2.csv", "plotdata_cma_f1.csv", "trajectory_0_base.csv",
                          "trajectory_2_rollout.csv"})
        EXPECT_TRUE(fs::exists(root / "a" / f)) << f;

    const auto m = nlohmann::json::parse(slurp(root / "a" / "manifest.json"));
    EXPECT_EQ(m["scenario_seeds"].size(), 3u);
    EXPECT_EQ(m["scenario_seeds"][1].get<std::uint64_t>(), cfg.seed + 1);
    EXPECT_EQ(m["pooling"], "random-cap");
    EXPECT_EQ(m["cap"].get<std::uint64_t>(), 20u);

    // Summary: 3 scenario rows, mean and std rows.
    std::istringstream lines(a);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    EXPECT_EQ(n, 1 + 3 + 2);
}

TEST(Experiment, RolloutNoWorseAndDamageSevere) {
    auto cfg = small_testbed("f1");
    cfg.objective = ObjectiveKind::f1;
    const auto s = run_experiment(cfg);
    for (const auto& r : s.scenarios) {
        EXPECT_LE(r.rollout.objective, r.base.objective);
        EXPECT_LE(r.rollout.max_candidates, cfg.cap + 2);
    }
    EXPECT_GT(s.mean_damaged_fraction(), 0.6);
}

TEST(Experiment, MissingInputFileFails) {
    auto cfg = small_testbed("missing");
    cfg.cells = cfg.cells.parent_path() / "nope.csv";
    EXPECT_THROW(run_experiment(cfg), LoadError);
}
