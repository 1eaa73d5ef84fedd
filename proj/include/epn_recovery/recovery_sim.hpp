#pragma once

// Discrete-event recovery engine.
//
// A decision epoch ends when at least one assigned component finishes. Each
// assigned component's remaining work drops by the epoch length k_t; progress on
// components that are later unassigned is kept. Service h_t is sampled after
// each completion and is piecewise constant in between.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "damage.hpp"
#include "errors.hpp"
#include "network.hpp"

namespace epn {

inline constexpr double completion_tolerance_days = 1e-9;

// A set of component indices (ascending-id order), kept sorted.
struct RepairAction {
    std::vector<int> components;

    friend bool operator==(const RepairAction&, const RepairAction&) = default;
    friend auto operator<=>(const RepairAction&, const RepairAction&) = default;
};

using ActionString = std::vector<RepairAction>;

struct SimState {
    double clock = 0.0;
    std::vector<double> remaining;     // days of work left per component; > 0 iff damaged
    std::vector<std::int32_t> blocked; // per service point: damaged components on its supply path
    int damaged = 0;                   // |D_t|
    double served = 0.0;               // h at the current clock

    bool is_damaged(int index) const { return remaining[static_cast<std::size_t>(index)] > 0.0; }

    std::vector<int> damaged_set() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(damaged));
        for (std::size_t i = 0; i < remaining.size(); ++i)
            if (remaining[i] > 0.0) out.push_back(static_cast<int>(i));
        return out;
    }
};

// Running objective accumulators; updated once per epoch in trajectory order so
// the incremental score is bit-identical to evaluating the finished trajectory.
struct ObjectiveTracker {
    double sum_hk = 0.0;
    double sum_k = 0.0;
    double last_k = 0.0;
    double crossing_clock = -1.0;  // first completion clock with h >= threshold; -1 = not yet
    int epochs = 0;
};

struct Epoch {
    int index = 0;      // t, from 1
    double k = 0.0;     // days since the previous completion
    double h = 0.0;     // people served after the completion
    double clock = 0.0; // days since the event
};

struct RecoveryTrajectory {
    double initial_level = 0.0;
    double total_population = 0.0;
    std::vector<Epoch> epochs;
    bool terminal = false;

    double final_clock() const { return epochs.empty() ? 0.0 : epochs.back().clock; }
};

struct StepResult {
    double k = 0.0;
    std::vector<int> repaired;  // R_t, ascending
};

// Immutable view of a community specialized for fast playouts: for every
// component, the service points (cells, then retailers) whose supply path
// contains it.
class RecoveryModel {
public:
    RecoveryModel(const Community& community, ServiceMode mode)
        : community_(&community), mode_(mode) {
        const auto& tree = community.tree();
        const int n = tree.size();
        dependents_offset_.assign(static_cast<std::size_t>(n) + 1, 0);
        std::vector<std::vector<int>> deps(static_cast<std::size_t>(n));
        auto add_point = [&](int sink_id) {
            const int point = static_cast<int>(path_length_.size());
            const auto path = tree.path_indices(tree.index_of(sink_id));
            path_length_.push_back(static_cast<int>(path.size()));
            for (int u : path) deps[static_cast<std::size_t>(u)].push_back(point);
        };
        for (const auto& c : community.cells()) {
            add_point(c.sink_id);
            population_.push_back(c.population);
        }
        cell_count_ = static_cast<int>(community.cells().size());
        if (mode == ServiceMode::households_and_retailers) {
            if (community.retailers().empty())
                throw ConfigError("retailer service mode requires at least one retailer");
            for (const auto& r : community.retailers()) add_point(r.sink_id);
            retailer_count_ = static_cast<int>(community.retailers().size());
            probs_.reserve(static_cast<std::size_t>(cell_count_ * retailer_count_));
            for (int c = 0; c < cell_count_; ++c)
                for (double p : community.demand().probs(static_cast<std::size_t>(c))) probs_.push_back(p);
        }
        for (int i = 0; i < n; ++i)
            dependents_offset_[static_cast<std::size_t>(i) + 1] =
                dependents_offset_[static_cast<std::size_t>(i)] + static_cast<int>(deps[static_cast<std::size_t>(i)].size());
        dependents_.reserve(static_cast<std::size_t>(dependents_offset_.back()));
        for (const auto& d : deps) dependents_.insert(dependents_.end(), d.begin(), d.end());
    }

    const Community& community() const { return *community_; }
    ServiceMode mode() const { return mode_; }
    int components() const { return static_cast<int>(dependents_offset_.size()) - 1; }
    double total_population() const { return community_->total_population(); }

    std::span<const int> dependents(int component) const {
        const auto b = static_cast<std::size_t>(dependents_offset_[static_cast<std::size_t>(component)]);
        const auto e = static_cast<std::size_t>(dependents_offset_[static_cast<std::size_t>(component) + 1]);
        return {dependents_.data() + b, e - b};
    }

    SimState initial_state(const DamageScenario& scenario) const {
        if (scenario.size() != components()) throw ConfigError("scenario size does not match the network");
        SimState s;
        s.remaining = scenario.repair_days;
        s.blocked.assign(path_length_.size(), 0);
        for (int i = 0; i < components(); ++i) {
            const double r = s.remaining[static_cast<std::size_t>(i)];
            if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("repair time must be finite and non-negative");
            if (r > 0.0) {
                ++s.damaged;
                for (int p : dependents(i)) ++s.blocked[static_cast<std::size_t>(p)];
            }
        }
        s.served = served(s);
        return s;
    }

    // h from the blocked counters, summed in a fixed order (so it is a pure
    // function of the functional set and monotone in it).
    double served(const SimState& s) const {
        double total = 0.0;
        if (mode_ == ServiceMode::households) {
            for (int c = 0; c < cell_count_; ++c)
                if (s.blocked[static_cast<std::size_t>(c)] == 0) total += population_[static_cast<std::size_t>(c)];
            return total;
        }
        for (int c = 0; c < cell_count_; ++c) {
            if (s.blocked[static_cast<std::size_t>(c)] != 0) continue;
            double share = 0.0;
            const double* row = probs_.data() + static_cast<std::size_t>(c * retailer_count_);
            for (int r = 0; r < retailer_count_; ++r)
                if (s.blocked[static_cast<std::size_t>(cell_count_ + r)] == 0) share += row[r];
            total += population_[static_cast<std::size_t>(c)] * share;
        }
        return total;
    }

    // Unchecked epoch advance. `assigned` must be distinct damaged components.
    // Repaired components are appended to `repaired` (if non-null). Returns k_t.
    double advance(SimState& s, std::span<const int> assigned, std::vector<int>* repaired = nullptr) const {
        double k = std::numeric_limits<double>::infinity();
        for (int c : assigned) k = std::min(k, s.remaining[static_cast<std::size_t>(c)]);
        bool flipped = false;
        for (int c : assigned) {
            double& r = s.remaining[static_cast<std::size_t>(c)];
            r -= k;
            if (r <= completion_tolerance_days) {
                r = 0.0;
                --s.damaged;
                if (repaired) repaired->push_back(c);
                for (int p : dependents(c))
                    if (--s.blocked[static_cast<std::size_t>(p)] == 0) flipped = true;
            }
        }
        s.clock += k;
        if (flipped) s.served = served(s);
        return k;
    }

private:
    const Community* community_;
    ServiceMode mode_;
    int cell_count_ = 0;
    int retailer_count_ = 0;
    std::vector<double> population_;
    std::vector<double> probs_;      // cell-major P(r|c)
    std::vector<int> path_length_;   // per service point
    std::vector<int> dependents_offset_;
    std::vector<int> dependents_;
};

inline void validate_action(const SimState& s, const RepairAction& a, int resources) {
    const auto expected = static_cast<std::size_t>(std::min(resources, s.damaged));
    if (a.components.size() != expected)
        throw ContractViolation("repair action assigns " + std::to_string(a.components.size()) + " units, expected " +
                                std::to_string(expected));
    for (std::size_t i = 0; i < a.components.size(); ++i) {
        const int c = a.components[i];
        if (c < 0 || static_cast<std::size_t>(c) >= s.remaining.size())
            throw ContractViolation("repair action references unknown component index " + std::to_string(c));
        if (!s.is_damaged(c))
            throw ContractViolation("repair action assigns non-damaged component index " + std::to_string(c));
        if (i > 0 && a.components[i - 1] >= c)
            throw ContractViolation("repair action components must be distinct and sorted");
    }
}

// One decision epoch with contract checks. The action must be non-empty and
// reference only damaged components.
inline StepResult step(const RecoveryModel& model, SimState& state, const RepairAction& action) {
    if (action.components.empty()) throw ContractViolation("repair action is empty");
    for (std::size_t i = 0; i < action.components.size(); ++i) {
        const int c = action.components[i];
        if (c < 0 || c >= model.components() || !state.is_damaged(c))
            throw ContractViolation("repair action assigns non-damaged component index " + std::to_string(c));
        if (i > 0 && action.components[i - 1] >= c)
            throw ContractViolation("repair action components must be distinct and sorted");
    }
    StepResult r;
    r.k = model.advance(state, action.components, &r.repaired);
    std::sort(r.repaired.begin(), r.repaired.end());
    return r;
}

// ---------------------------------------------------------------------------
// Objectives

enum class ObjectiveKind : std::uint8_t { f1, f2 };
enum class F2Normalization : std::uint8_t { final_interval, cumulative_time };

struct Objective {
    ObjectiveKind kind = ObjectiveKind::f2;
    double gamma = 0.8;
    F2Normalization normalization = F2Normalization::final_interval;

    static Objective f1(double gamma) { return {ObjectiveKind::f1, gamma, F2Normalization::final_interval}; }
    static Objective f2(F2Normalization n = F2Normalization::final_interval) { return {ObjectiveKind::f2, 0.8, n}; }

    bool maximize() const { return kind == ObjectiveKind::f2; }

    // True when a is strictly better than b.
    bool better(double a, double b) const { return maximize() ? a > b : a < b; }
};

inline double service_threshold(double gamma, double total_population) {
    // Full repair restores everyone up to floating-point noise in the
    // retailer-weighted sum.
    return gamma * total_population - 1e-9 * total_population;
}

inline void record_epoch(ObjectiveTracker& t, double k, double h, double clock, double threshold) {
    t.sum_hk += h * k;
    t.sum_k += k;
    t.last_k = k;
    ++t.epochs;
    if (t.crossing_clock < 0.0 && h >= threshold) t.crossing_clock = clock;
}

inline ObjectiveTracker start_tracker(const SimState& s, double threshold) {
    ObjectiveTracker t;
    if (s.served >= threshold) t.crossing_clock = 0.0;
    return t;
}

inline double evaluate_F1(const RecoveryTrajectory& traj, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::domain_error("gamma must lie in [0, 1]");
    const double threshold = service_threshold(gamma, traj.total_population);
    if (traj.initial_level >= threshold) return 0.0;
    for (const auto& e : traj.epochs)
        if (e.h >= threshold) return e.clock;
    assert(!traj.terminal && "full repair must reach every service threshold");
    throw std::logic_error("service threshold never reached; trajectory incomplete");
}

inline double evaluate_F2(const RecoveryTrajectory& traj, F2Normalization norm = F2Normalization::final_interval) {
    if (traj.epochs.empty()) throw std::domain_error("F2 is undefined for an empty trajectory");
    double sum_hk = 0.0, sum_k = 0.0;
    for (const auto& e : traj.epochs) {
        sum_hk += e.h * e.k;
        sum_k += e.k;
    }
    return norm == F2Normalization::final_interval ? sum_hk / traj.epochs.back().k : sum_hk / sum_k;
}

inline double evaluate(const Objective& obj, const RecoveryTrajectory& traj) {
    return obj.kind == ObjectiveKind::f1 ? evaluate_F1(traj, obj.gamma) : evaluate_F2(traj, obj.normalization);
}

// Score from running accumulators; matches evaluate() on the same trajectory.
inline double score(const Objective& obj, const ObjectiveTracker& t) {
    if (obj.kind == ObjectiveKind::f1) return t.crossing_clock;
    if (t.epochs == 0) throw std::domain_error("F2 is undefined for an empty trajectory");
    return obj.normalization == F2Normalization::final_interval ? t.sum_hk / t.last_k : t.sum_hk / t.sum_k;
}

// Integral of h(t)/p over [0, T_LC] divided by T_LC. Service is h_0 until the
// first completion and stays at the last level after the final one.
inline double resilience_index(const RecoveryTrajectory& traj, double control_time) {
    if (!(control_time > 0.0) || control_time < traj.final_clock())
        throw std::domain_error("control time must be positive and cover the whole trajectory");
    if (!(traj.total_population > 0.0)) throw std::domain_error("resilience index needs a positive population");
    double area = 0.0, level = traj.initial_level, t = 0.0;
    for (const auto& e : traj.epochs) {
        area += level * (e.clock - t);
        t = e.clock;
        level = e.h;
    }
    area += level * (control_time - t);
    return area / (traj.total_population * control_time);
}

// ---------------------------------------------------------------------------
// Policy execution

using Policy = std::function<RepairAction(const SimState&)>;

struct PolicyRun {
    RecoveryTrajectory trajectory;
    ActionString actions;  // non-trivial epochs only
};

// Calls `policy` while more components are damaged than there are resource
// units; afterwards every remaining damaged component gets its own unit.
inline PolicyRun run_policy(const RecoveryModel& model, const DamageScenario& scenario, const Policy& policy,
                            int resources) {
    if (resources < 1) throw ConfigError("resource units N must be >= 1");
    SimState s = model.initial_state(scenario);
    PolicyRun run;
    run.trajectory.initial_level = s.served;
    run.trajectory.total_population = model.total_population();
    std::vector<int> repaired;
    int t = 0;
    while (s.damaged > 0) {
        RepairAction action;
        if (s.damaged > resources) {
            action = policy(s);
            try {
                validate_action(s, action, resources);
            } catch (const ContractViolation& e) {
                throw ContractViolation(std::string("policy returned an invalid action at epoch ") +
                                        std::to_string(t + 1) + ": " + e.what());
            }
            run.actions.push_back(action);
        } else {
            action.components = s.damaged_set();
        }
        const int before = s.damaged;
        const double k = model.advance(s, action.components, &repaired);
        assert(s.damaged < before);
        (void)before;
        run.trajectory.epochs.push_back({++t, k, s.served, s.clock});
    }
    run.trajectory.terminal = true;
    return run;
}

// Replays a fixed action string, then the trivial phase.
inline PolicyRun replay(const RecoveryModel& model, const DamageScenario& scenario, const ActionString& actions,
                        int resources) {
    std::size_t next = 0;
    auto run = run_policy(
        model, scenario,
        [&](const SimState&) {
            if (next >= actions.size()) throw ContractViolation("action string ended before the trivial phase");
            return actions[next++];
        },
        resources);
    if (next != actions.size()) throw ContractViolation("action string longer than the non-trivial phase");
    return run;
}

inline void write_trajectory_csv(std::ostream& out, const RecoveryTrajectory& traj) {
    out << "epoch,clock_days,k_days,h_people,served_fraction\n";
    const double p = traj.total_population;
    auto frac = [&](double h) { return p > 0.0 ? h / p : 0.0; };
    out << 0 << ',' << 0.0 << ',' << 0.0 << ',' << traj.initial_level << ',' << frac(traj.initial_level) << '\n';
    for (const auto& e : traj.epochs)
        out << e.index << ',' << e.clock << ',' << e.k << ',' << e.h << ',' << frac(e.h) << '\n';
}

}  // namespace epn
