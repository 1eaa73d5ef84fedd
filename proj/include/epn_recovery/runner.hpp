#pragma once

// Batch experiment driver: scenario generation, paired base/rollout plans,
// trajectory/summary/plot-data output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "damage.hpp"
#include "errors.hpp"
#include "hazard_field.hpp"
#include "network.hpp"
#include "parallel.hpp"
#include "planner.hpp"
#include "recovery_sim.hpp"
#include "rng.hpp"

namespace epn {

// Rollout scored worse than its own base heuristic.
class InvariantBreach : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class BaseKind : std::uint8_t { random, smart };

struct ExperimentConfig {
    EventSpec event;
    AttenuationParams attenuation;
    double vs30 = 760.0;
    double gravity_b = -0.1;

    std::filesystem::path components, cells, retailers, travel_times, fragility, restoration, sites;

    int resources = 10;
    ObjectiveKind objective = ObjectiveKind::f2;
    double gamma = 0.8;
    F2Normalization normalization = F2Normalization::final_interval;
    ServiceMode mode = ServiceMode::households;
    BaseKind base = BaseKind::random;
    Pooling pooling = Pooling::random_cap;
    std::uint64_t cap = 100000;
    int lookahead = 1;
    int scenarios = 20;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = all hardware threads
    double grid_step_days = 0.25;

    void validate() const {
        event.validate();
        attenuation.validate();
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
        if (resources < 1) throw ConfigError("resources must be >= 1");
        if (cap < 1) throw ConfigError("cap must be >= 1");
        if (lookahead < 1) throw ConfigError("lookahead must be >= 1");
        if (scenarios < 1) throw ConfigError("scenarios must be >= 1");
        if (!(vs30 > 0.0)) throw ConfigError("vs30 must be > 0");
        if (!(gravity_b < 0.0)) throw ConfigError("gravity_b must be negative");
        if (!(grid_step_days > 0.0)) throw ConfigError("grid step must be > 0");
    }

    Objective objective_spec() const {
        return {objective, gamma, normalization};
    }
};

inline const char* to_string(BaseKind b) { return b == BaseKind::random ? "random" : "smart"; }
inline const char* to_string(ObjectiveKind o) { return o == ObjectiveKind::f1 ? "f1" : "f2"; }
inline const char* to_string(ServiceMode m) { return m == ServiceMode::households ? "case1" : "case2"; }

// Applies one `key = value` setting. Relative paths resolve against `base_dir`.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                          const std::filesystem::path& base_dir = {}) {
    auto real = [&] {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size() || value.empty()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
        return v;
    };
    auto integer = [&] {
        const double v = real();
        if (v != std::floor(v)) throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
        return static_cast<long long>(v);
    };
    auto path = [&] {
        std::filesystem::path p(value);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    static const std::map<std::string, int> coeff{{"c0", 0}, {"c1", 1}, {"c2", 2}, {"c3", 3}, {"c4", 4}};

    if (key == "components") cfg.components = path();
    else if (key == "cells") cfg.cells = path();
    else if (key == "retailers") cfg.retailers = path();
    else if (key == "travel_times") cfg.travel_times = path();
    else if (key == "fragility") cfg.fragility = path();
    else if (key == "restoration") cfg.restoration = path();
    else if (key == "sites") cfg.sites = path();
    else if (key == "magnitude") cfg.event.magnitude = real();
    else if (key == "epicenter_x_km") cfg.event.epicenter.x_km = real();
    else if (key == "epicenter_y_km") cfg.event.epicenter.y_km = real();
    else if (coeff.count(key)) cfg.attenuation.c[static_cast<std::size_t>(coeff.at(key))] = real();
    else if (key == "sigma_intra") cfg.attenuation.sigma_intra = real();
    else if (key == "tau_inter") cfg.attenuation.tau_inter = real();
    else if (key == "correlation_range_km") cfg.attenuation.correlation_range_km = real();
    else if (key == "nugget") cfg.attenuation.nugget = real();
    else if (key == "vs30") cfg.vs30 = real();
    else if (key == "gravity_b") cfg.gravity_b = real();
    else if (key == "resources") cfg.resources = static_cast<int>(integer());
    else if (key == "gamma") cfg.gamma = real();
    else if (key == "cap") cfg.cap = static_cast<std::uint64_t>(integer());
    else if (key == "scenarios") cfg.scenarios = static_cast<int>(integer());
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
    else if (key == "threads") cfg.threads = static_cast<unsigned>(integer());
    else if (key == "grid_step_days") cfg.grid_step_days = real();
    else if (key == "lookahead") cfg.lookahead = value == "full" ? full_horizon : static_cast<int>(integer());
    else if (key == "objective") {
        if (value == "f1") cfg.objective = ObjectiveKind::f1;
        else if (value == "f2") cfg.objective = ObjectiveKind::f2;
        else throw ConfigError("objective must be f1 or f2");
    } else if (key == "f2_normalization") {
        if (value == "final") cfg.normalization = F2Normalization::final_interval;
        else if (value == "cumulative") cfg.normalization = F2Normalization::cumulative_time;
        else throw ConfigError("f2_normalization must be final or cumulative");
    } else if (key == "mode") {
        if (value == "case1" || value == "households") cfg.mode = ServiceMode::households;
        else if (value == "case2" || value == "households_and_retailers") cfg.mode = ServiceMode::households_and_retailers;
        else throw ConfigError("mode must be case1 or case2");
    } else if (key == "base") {
        if (value == "random") cfg.base = BaseKind::random;
        else if (value == "smart") cfg.base = BaseKind::smart;
        else throw ConfigError("base must be random or smart");
    } else if (key == "pooling") {
        if (value == "full") cfg.pooling = Pooling::full;
        else if (value == "one-step") cfg.pooling = Pooling::one_step;
        else if (value == "n-step") cfg.pooling = Pooling::n_step;
        else if (value == "random-cap") cfg.pooling = Pooling::random_cap;
        else throw ConfigError("pooling must be full, one-step, n-step or random-cap");
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& name,
                                     const std::filesystem::path& base_dir = {}) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const auto text = csv::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            apply_setting(cfg, csv::trim(text.substr(0, eq)), csv::trim(text.substr(eq + 1)), base_dir);
        } catch (const ConfigError& e) {
            throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(LoadError::Kind::io, path.string() + ": cannot open");
    return parse_config(in, path.string(), path.parent_path());
}

// Everything a scenario run needs, loaded and validated once.
struct ExperimentInputs {
    std::unique_ptr<Community> community;
    FragilitySet fragility;
    RestorationTable restoration;
    std::vector<Site> sites;
    std::vector<int> site_of;
};

inline std::vector<Site> load_sites(const std::filesystem::path& path) {
    const auto t = csv::Table::read(path.string());
    t.require({"x_km", "y_km", "vs30"}, path.string());
    std::vector<Site> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto row = t.row(i);
        out.push_back({{row.real("x_km"), row.real("y_km")}, row.real("vs30")});
    }
    return out;
}

inline ExperimentInputs load_inputs(const ExperimentConfig& cfg) {
    cfg.validate();
    for (const auto* p : {&cfg.components, &cfg.cells, &cfg.fragility})
        if (p->empty()) throw ConfigError("config is missing a required input file path");
    ExperimentInputs in;
    auto tree = EpnTree::build(load_components(cfg.components.string()));
    auto cells = load_cells(cfg.cells.string());
    std::vector<Retailer> retailers;
    std::vector<std::vector<double>> travel;
    if (!cfg.retailers.empty()) {
        retailers = load_retailers(cfg.retailers.string());
        if (cfg.travel_times.empty()) throw ConfigError("retailers given without travel_times");
        travel = load_travel_times(cfg.travel_times.string(), cells, retailers);
    }
    in.community = std::make_unique<Community>(std::move(tree), std::move(cells), std::move(retailers),
                                               std::move(travel), cfg.gravity_b);
    in.fragility = FragilitySet::load(cfg.fragility.string());
    in.restoration = cfg.restoration.empty() ? RestorationTable::standard() : RestorationTable::load(cfg.restoration.string());
    const auto& t = in.community->tree();
    for (int i = 0; i < t.size(); ++i) {
        in.fragility.at(t.cls(i));
        in.restoration.days(t.cls(i), DamageState::minor);
    }
    if (!cfg.sites.empty()) {
        in.sites = load_sites(cfg.sites);
    } else {
        for (int i = 0; i < t.size(); ++i) in.sites.push_back({t.location(i), cfg.vs30});
    }
    in.site_of = nearest_sites(t, in.sites);
    return in;
}

// ---------------------------------------------------------------------------
// Results

struct PolicyOutcome {
    double objective = 0.0;      // under the configured objective
    double days_to_gamma = 0.0;  // F1 at the configured gamma
    double f2 = 0.0;             // F2 with the configured normalization (full service if nothing failed)
    RecoveryTrajectory trajectory;
    std::size_t actions = 0;
    std::size_t max_candidates = 0;
};

struct ScenarioResult {
    int index = 0;
    std::uint64_t seed = 0;
    int damaged = 0;
    int components = 0;
    PolicyOutcome base, rollout;
    double improvement() const { return rollout.objective - base.objective; }
};

struct RunSummary {
    std::vector<ScenarioResult> scenarios;
    double total_population = 0.0;
    Objective objective;

    double mean(double PolicyOutcome::*field, bool rollout) const {
        double s = 0.0;
        for (const auto& r : scenarios) s += (rollout ? r.rollout : r.base).*field;
        return s / static_cast<double>(scenarios.size());
    }
    double stddev(double PolicyOutcome::*field, bool rollout) const {
        const double m = mean(field, rollout);
        double s = 0.0;
        for (const auto& r : scenarios) {
            const double d = (rollout ? r.rollout : r.base).*field - m;
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(scenarios.size()));
    }
    double mean_damaged_fraction() const {
        double s = 0.0;
        for (const auto& r : scenarios) s += static_cast<double>(r.damaged) / r.components;
        return s / static_cast<double>(scenarios.size());
    }
};

inline PolicyOutcome summarize(const PlanResult& plan, const ExperimentConfig& cfg) {
    PolicyOutcome o;
    o.objective = plan.objective;
    o.trajectory = plan.trajectory;
    o.days_to_gamma = evaluate_F1(plan.trajectory, cfg.gamma);
    o.f2 = plan.trajectory.epochs.empty() ? plan.trajectory.initial_level
                                          : evaluate_F2(plan.trajectory, cfg.normalization);
    o.actions = plan.actions.size();
    for (auto c : plan.candidate_counts) o.max_candidates = std::max(o.max_candidates, c);
    return o;
}

// Scenario seeds are master seed + scenario index; sub-streams hang off them.
inline std::uint64_t scenario_seed(std::uint64_t master, int index) { return master + static_cast<std::uint64_t>(index); }

inline ScenarioResult run_scenario(const ExperimentConfig& cfg, const ExperimentInputs& in, const FieldSampler& sampler,
                                   const RecoveryModel& model, const PriorityOrder* smart, int index, unsigned threads) {
    ScenarioResult r;
    r.index = index;
    r.seed = scenario_seed(cfg.seed, index);
    const auto field = sampler.sample(derive_seed(r.seed, 1));
    const auto scenario =
        generate_scenario(field, in.community->tree(), in.site_of, in.fragility, in.restoration, derive_seed(r.seed, 2));
    r.damaged = scenario.damaged_count();
    r.components = scenario.size();

    const PriorityOrder order = smart ? *smart : random_order(model.components(), derive_seed(r.seed, 3));
    PlanOptions opt;
    opt.objective = cfg.objective_spec();
    opt.resources = cfg.resources;
    opt.pooling = cfg.pooling;
    opt.cap = cfg.cap;
    opt.lookahead = cfg.lookahead;
    opt.seed = derive_seed(r.seed, 4);
    opt.threads = threads;

    r.base = summarize(base_plan(model, scenario, order, opt), cfg);
    r.rollout = summarize(rollout_plan(model, scenario, order, opt), cfg);
    if (opt.objective.better(r.base.objective, r.rollout.objective))
        throw InvariantBreach("scenario " + std::to_string(index) + ": rollout objective " +
                              std::to_string(r.rollout.objective) + " is worse than base " +
                              std::to_string(r.base.objective));
    return r;
}

// ---------------------------------------------------------------------------
// Plot data

struct BandRow {
    double t = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

// Served fraction at time t (right-continuous step function).
inline double served_fraction_at(const RecoveryTrajectory& traj, double t) {
    double level = traj.initial_level;
    for (const auto& e : traj.epochs) {
        if (e.clock > t) break;
        level = e.h;
    }
    return traj.total_population > 0.0 ? level / traj.total_population : 0.0;
}

// Mean and population standard deviation of the served fraction on a uniform grid.
inline std::vector<BandRow> mean_trajectory(const std::vector<const RecoveryTrajectory*>& trajs, double step) {
    if (trajs.empty()) throw std::invalid_argument("mean_trajectory needs at least one trajectory");
    double horizon = 0.0;
    for (const auto* t : trajs) horizon = std::max(horizon, t->final_clock());
    const auto points = static_cast<std::size_t>(std::ceil(horizon / step - 1e-12)) + 1;
    std::vector<BandRow> rows;
    rows.reserve(points);
    for (std::size_t i = 0; i < points; ++i) {
        BandRow row;
        row.t = static_cast<double>(i) * step;
        double s = 0.0, s2 = 0.0;
        for (const auto* t : trajs) {
            const double f = served_fraction_at(*t, row.t);
            s += f;
            s2 += f * f;
        }
        const double n = static_cast<double>(trajs.size());
        row.mean = s / n;
        row.std = std::sqrt(std::max(0.0, s2 / n - row.mean * row.mean));
        if (trajs.size() == 1 || row.std < 1e-15) row.std = 0.0;
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<double> cumulative_moving_average(const std::vector<double>& values) {
    std::vector<double> out;
    out.reserve(values.size());
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        s += values[i];
        out.push_back(s / static_cast<double>(i + 1));
    }
    return out;
}

struct HistogramBin {
    double lo = 0.0, hi = 0.0;
    std::size_t base = 0, rollout = 0;
};

inline std::vector<HistogramBin> f2_histogram(const RunSummary& summary, int bins = 10) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : summary.scenarios)
        for (double v : {r.base.f2, r.rollout.f2}) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi <= lo) hi = lo + 1.0;
    const double width = (hi - lo) / bins;
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) out[static_cast<std::size_t>(b)] = {lo + b * width, lo + (b + 1) * width, 0, 0};
    auto bin_of = [&](double v) {
        return static_cast<std::size_t>(std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1));
    };
    for (const auto& r : summary.scenarios) {
        ++out[bin_of(r.base.f2)].base;
        ++out[bin_of(r.rollout.f2)].rollout;
    }
    return out;
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw LoadError(LoadError::Kind::io, p.string() + ": cannot write");
    out << std::setprecision(12);
    return out;
}
}  // namespace detail

inline void write_summary_csv(std::ostream& out, const RunSummary& s) {
    out << std::setprecision(12);
    out << "scenario,seed,damaged,damaged_fraction,base_objective,rollout_objective,improvement,"
           "base_days_to_gamma,rollout_days_to_gamma,base_f2,rollout_f2,base_final_day,rollout_final_day,"
           "max_candidates\n";
    for (const auto& r : s.scenarios)
        out << r.index << ',' << r.seed << ',' << r.damaged << ',' << static_cast<double>(r.damaged) / r.components
            << ',' << r.base.objective << ',' << r.rollout.objective << ',' << r.improvement() << ','
            << r.base.days_to_gamma << ',' << r.rollout.days_to_gamma << ',' << r.base.f2 << ',' << r.rollout.f2
            << ',' << r.base.trajectory.final_clock() << ',' << r.rollout.trajectory.final_clock() << ','
            << r.rollout.max_candidates << '\n';
    using P = PolicyOutcome;
    out << "mean,,," << s.mean_damaged_fraction() << ',' << s.mean(&P::objective, false) << ','
        << s.mean(&P::objective, true) << ',' << s.mean(&P::objective, true) - s.mean(&P::objective, false) << ','
        << s.mean(&P::days_to_gamma, false) << ',' << s.mean(&P::days_to_gamma, true) << ','
        << s.mean(&P::f2, false) << ',' << s.mean(&P::f2, true) << ",,,\n";
    out << "std,,,," << s.stddev(&P::objective, false) << ',' << s.stddev(&P::objective, true) << ",,"
        << s.stddev(&P::days_to_gamma, false) << ',' << s.stddev(&P::days_to_gamma, true) << ','
        << s.stddev(&P::f2, false) << ',' << s.stddev(&P::f2, true) << ",,,\n";
}

inline void emit_plot_data(const RunSummary& s, const std::filesystem::path& dir, double step) {
    if (s.scenarios.empty()) throw std::invalid_argument("emit_plot_data needs at least one scenario");
    for (bool rollout : {false, true}) {
        std::vector<const RecoveryTrajectory*> trajs;
        for (const auto& r : s.scenarios) trajs.push_back(&(rollout ? r.rollout : r.base).trajectory);
        auto out = detail::open_out(dir / (std::string("plotdata_mean_") + (rollout ? "rollout" : "base") + ".csv"));
        out << "t_days,mean_served_fraction,lower_1std,upper_1std,std\n";
        for (const auto& row : mean_trajectory(trajs, step))
            out << row.t << ',' << row.mean << ',' << row.mean - row.std << ',' << row.mean + row.std << ','
                << row.std << '\n';
    }
    {
        auto out = detail::open_out(dir / "plotdata_hist_f2.csv");
        out << "bin_lo,bin_hi,base_count,rollout_count\n";
        for (const auto& b : f2_histogram(s)) out << b.lo << ',' << b.hi << ',' << b.base << ',' << b.rollout << '\n';
    }
    {
        std::vector<double> base, roll;
        for (const auto& r : s.scenarios) {
            base.push_back(r.base.days_to_gamma);
            roll.push_back(r.rollout.days_to_gamma);
        }
        const auto cb = cumulative_moving_average(base), cr = cumulative_moving_average(roll);
        auto out = detail::open_out(dir / "plotdata_cma_f1.csv");
        out << "scenario,base_days,rollout_days,base_cma,rollout_cma\n";
        for (std::size_t i = 0; i < base.size(); ++i)
            out << s.scenarios[i].index << ',' << base[i] << ',' << roll[i] << ',' << cb[i] << ',' << cr[i] << '\n';
    }
}

inline nlohmann::json manifest(const ExperimentConfig& cfg, const RunSummary& s) {
    nlohmann::json j;
    j["event"] = {{"magnitude", cfg.event.magnitude},
                  {"epicenter_km", {cfg.event.epicenter.x_km, cfg.event.epicenter.y_km}}};
    j["attenuation"] = {{"c", cfg.attenuation.c},
                        {"sigma_intra", cfg.attenuation.sigma_intra},
                        {"tau_inter", cfg.attenuation.tau_inter},
                        {"correlation_range_km", cfg.attenuation.correlation_range_km},
                        {"nugget", cfg.attenuation.nugget},
                        {"vs30", cfg.vs30}};
    j["inputs"] = {{"components", cfg.components.string()}, {"cells", cfg.cells.string()},
                   {"retailers", cfg.retailers.string()},   {"travel_times", cfg.travel_times.string()},
                   {"fragility", cfg.fragility.string()},   {"restoration", cfg.restoration.string()},
                   {"sites", cfg.sites.string()}};
    j["resources"] = cfg.resources;
    j["objective"] = to_string(cfg.objective);
    j["gamma"] = cfg.gamma;
    j["f2_normalization"] = cfg.normalization == F2Normalization::final_interval ? "final" : "cumulative";
    j["mode"] = to_string(cfg.mode);
    j["base"] = to_string(cfg.base);
    j["pooling"] = to_string(cfg.pooling);
    j["cap"] = cfg.cap;
    j["lookahead"] = cfg.lookahead == full_horizon ? nlohmann::json("full") : nlohmann::json(cfg.lookahead);
    j["gravity_b"] = cfg.gravity_b;
    j["grid_step_days"] = cfg.grid_step_days;
    j["master_seed"] = cfg.seed;
    auto& seeds = j["scenario_seeds"] = nlohmann::json::array();
    for (const auto& r : s.scenarios) seeds.push_back(r.seed);
    return j;
}

// Runs every scenario and, if `out_dir` is non-empty, writes all output files.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {}) {
    const auto in = load_inputs(cfg);
    const FieldSampler sampler(cfg.event, in.sites, cfg.attenuation);
    const RecoveryModel model(*in.community, cfg.mode);
    std::optional<PriorityOrder> smart;
    if (cfg.base == BaseKind::smart) smart = importance_order(*in.community);

    RunSummary summary;
    summary.total_population = in.community->total_population();
    summary.objective = cfg.objective_spec();
    summary.scenarios.resize(static_cast<std::size_t>(cfg.scenarios));

    const unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    const unsigned outer = std::min<unsigned>(threads, static_cast<unsigned>(cfg.scenarios));
    const unsigned inner = std::max(1u, threads / outer);
    parallel_for(static_cast<std::size_t>(cfg.scenarios), outer, [&](std::size_t i, unsigned) {
        summary.scenarios[i] = run_scenario(cfg, in, sampler, model, smart ? &*smart : nullptr, static_cast<int>(i), inner);
    }, 1);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        for (const auto& r : summary.scenarios) {
            for (bool rollout : {false, true}) {
                auto out = detail::open_out(out_dir / ("trajectory_" + std::to_string(r.index) + "_" +
                                                       (rollout ? "rollout" : "base") + ".csv"));
                write_trajectory_csv(out, (rollout ? r.rollout : r.base).trajectory);
            }
        }
        {
            auto out = detail::open_out(out_dir / "summary.csv");
            write_summary_csv(out, summary);
        }
        emit_plot_data(summary, out_dir, cfg.grid_step_days);
        auto out = detail::open_out(out_dir / "manifest.json");
        out << manifest(cfg, summary).dump(2) << '\n';
    }
    return summary;
}

}  // namespace epn
