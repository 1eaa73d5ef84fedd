#pragma once

// Repair planning over action strings.
//
// The base heuristics assign resource units by a fixed priority order, which
// makes them sequentially consistent: restarted from any state on their own
// path they reproduce the rest of that path. Rollout scores every candidate
// action by completing the string with the base heuristic and commits the best
// first action, so it can never do worse than the base heuristic as long as the
// base action is among the candidates.

#include <algorithm>
#include <bit>
#include <climits>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "errors.hpp"
#include "network.hpp"
#include "parallel.hpp"
#include "recovery_sim.hpp"
#include "rng.hpp"

namespace epn {

// ---------------------------------------------------------------------------
// Priority orders (base heuristics)

struct PriorityOrder {
    enum class Provenance : std::uint8_t { random, importance, explicit_list };

    std::vector<int> sequence;  // component indices, highest priority first
    std::vector<int> rank;      // rank[index] = position in sequence
    Provenance provenance = Provenance::explicit_list;
    std::uint64_t seed = 0;

    static PriorityOrder from_sequence(std::vector<int> seq, Provenance p = Provenance::explicit_list,
                                       std::uint64_t seed = 0) {
        PriorityOrder o;
        o.rank.assign(seq.size(), -1);
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const int c = seq[i];
            if (c < 0 || static_cast<std::size_t>(c) >= seq.size() || o.rank[static_cast<std::size_t>(c)] >= 0)
                throw ConfigError("priority order must be a permutation of all component indices");
            o.rank[static_cast<std::size_t>(c)] = static_cast<int>(i);
        }
        o.sequence = std::move(seq);
        o.provenance = p;
        o.seed = seed;
        return o;
    }

    std::size_t size() const { return sequence.size(); }
};

// Uniformly random permutation (Fisher-Yates on the portable uniform draw).
inline PriorityOrder random_order(int components, std::uint64_t seed) {
    std::vector<int> seq(static_cast<std::size_t>(components));
    std::iota(seq.begin(), seq.end(), 0);
    Rng rng(seed);
    for (std::size_t i = seq.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(seq[i - 1], seq[std::min(j, i - 1)]);
    }
    return PriorityOrder::from_sequence(std::move(seq), PriorityOrder::Provenance::random, seed);
}

// Descending population whose supply paths pass through each component; ties
// go to the lower id.
inline PriorityOrder importance_order(const Community& community) {
    const auto& tree = community.tree();
    std::vector<double> demand(static_cast<std::size_t>(tree.size()), 0.0);
    for (const auto& cell : community.cells())
        for (int u = tree.index_of(cell.sink_id); u >= 0; u = tree.parent(u))
            demand[static_cast<std::size_t>(u)] += cell.population;
    std::vector<int> seq(static_cast<std::size_t>(tree.size()));
    std::iota(seq.begin(), seq.end(), 0);
    std::stable_sort(seq.begin(), seq.end(), [&](int a, int b) {
        return demand[static_cast<std::size_t>(a)] > demand[static_cast<std::size_t>(b)];
    });
    return PriorityOrder::from_sequence(std::move(seq), PriorityOrder::Provenance::importance);
}

// The min(N, |D_t|) damaged components earliest in the order.
inline RepairAction base_action(const PriorityOrder& order, const SimState& state, int resources) {
    RepairAction a;
    const auto want = static_cast<std::size_t>(std::min(resources, state.damaged));
    for (int c : order.sequence) {
        if (a.components.size() == want) break;
        if (state.is_damaged(c)) a.components.push_back(c);
    }
    std::sort(a.components.begin(), a.components.end());
    return a;
}

// ---------------------------------------------------------------------------
// Candidate pools

enum class Pooling : std::uint8_t { full, one_step, n_step, random_cap };

inline const char* to_string(Pooling p) {
    switch (p) {
        case Pooling::full: return "full";
        case Pooling::one_step: return "one-step";
        case Pooling::n_step: return "n-step";
        case Pooling::random_cap: return "random-cap";
    }
    return "?";
}

namespace detail {

// Damaged components grouped by segment, segments grouped by level.
struct LevelView {
    std::vector<std::vector<int>> segments_by_level;
    std::vector<std::vector<int>> damaged_in_segment;
    int first_damaged_level = -1;
};

inline LevelView level_view(const EpnTree& tree, const SimState& state) {
    LevelView v;
    const auto& segs = tree.segments();
    v.segments_by_level.resize(static_cast<std::size_t>(tree.segment_levels()));
    v.damaged_in_segment.resize(segs.size());
    for (std::size_t s = 0; s < segs.size(); ++s) {
        v.segments_by_level[static_cast<std::size_t>(segs[s].level)].push_back(static_cast<int>(s));
        for (int c : segs[s].members)
            if (state.is_damaged(c)) v.damaged_in_segment[s].push_back(c);
    }
    for (std::size_t l = 0; l < v.segments_by_level.size() && v.first_damaged_level < 0; ++l)
        for (int s : v.segments_by_level[l])
            if (!v.damaged_in_segment[static_cast<std::size_t>(s)].empty()) {
                v.first_damaged_level = static_cast<int>(l);
                break;
            }
    return v;
}

}  // namespace detail

// Whole tree levels are added, shallowest damaged level first, until the pool
// holds at least N components or the tree is exhausted.
inline std::vector<int> candidate_pool_1step(const EpnTree& tree, const SimState& state, int resources) {
    const auto v = detail::level_view(tree, state);
    std::vector<int> pool;
    if (v.first_damaged_level < 0) return pool;
    for (auto l = static_cast<std::size_t>(v.first_damaged_level); l < v.segments_by_level.size(); ++l) {
        for (int s : v.segments_by_level[l]) {
            const auto& d = v.damaged_in_segment[static_cast<std::size_t>(s)];
            pool.insert(pool.end(), d.begin(), d.end());
        }
        if (static_cast<int>(pool.size()) >= resources) break;
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Like the 1-step pool, but below the first damaged level segments are added one
// at a time, fewest damaged components first (ties by label).
inline std::vector<int> candidate_pool_Nstep(const EpnTree& tree, const SimState& state, int resources) {
    const auto v = detail::level_view(tree, state);
    std::vector<int> pool;
    if (v.first_damaged_level < 0) return pool;
    const auto first = static_cast<std::size_t>(v.first_damaged_level);
    for (int s : v.segments_by_level[first]) {
        const auto& d = v.damaged_in_segment[static_cast<std::size_t>(s)];
        pool.insert(pool.end(), d.begin(), d.end());
    }
    const auto& segs = tree.segments();
    for (auto l = first + 1; l < v.segments_by_level.size() && static_cast<int>(pool.size()) < resources; ++l) {
        auto level = v.segments_by_level[l];
        std::sort(level.begin(), level.end(), [&](int a, int b) {
            const auto na = v.damaged_in_segment[static_cast<std::size_t>(a)].size();
            const auto nb = v.damaged_in_segment[static_cast<std::size_t>(b)].size();
            if (na != nb) return na < nb;
            return segs[static_cast<std::size_t>(a)].label < segs[static_cast<std::size_t>(b)].label;
        });
        for (int s : level) {
            const auto& d = v.damaged_in_segment[static_cast<std::size_t>(s)];
            pool.insert(pool.end(), d.begin(), d.end());
            if (static_cast<int>(pool.size()) >= resources) break;
        }
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

// ---------------------------------------------------------------------------
// Action enumeration

// C(n, k), saturating at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
    }
    return static_cast<std::uint64_t>(r);
}

inline double log10_binomial(double n, double k) {
    if (k > n || k < 0) return -std::numeric_limits<double>::infinity();
    return (std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1)) / std::log(10.0);
}

namespace detail {

struct ActionHash {
    std::size_t operator()(const std::vector<int>& v) const noexcept {
        std::uint64_t h = 0x84222325CBF29CE4ULL;
        for (int x : v) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)));
        return static_cast<std::size_t>(h);
    }
};

}  // namespace detail

// All N-subsets of the pool in lexicographic order when there are at most `cap`
// of them; otherwise `cap` distinct uniformly random N-subsets. `must_include`
// is appended when it is not already present.
inline std::vector<RepairAction> enumerate_actions(std::span<const int> pool_in, int resources, std::uint64_t cap,
                                                   std::uint64_t seed,
                                                   const std::optional<RepairAction>& must_include = std::nullopt) {
    if (cap < 1) throw ConfigError("action cap must be >= 1");
    if (pool_in.empty()) throw ConfigError("candidate pool is empty");
    std::vector<int> pool(pool_in.begin(), pool_in.end());
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    const auto n = pool.size();
    const auto k = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(resources), n));

    std::vector<RepairAction> out;
    bool have_required = false;
    const auto total = binomial(n, k);
    if (total <= cap) {
        out.reserve(static_cast<std::size_t>(total) + 1);
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            RepairAction a;
            a.components.reserve(k);
            for (auto i : idx) a.components.push_back(pool[i]);
            if (must_include && a == *must_include) have_required = true;
            out.push_back(std::move(a));
            // next combination
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    } else {
        Rng rng(seed);
        std::unordered_set<std::vector<int>, detail::ActionHash> seen;
        seen.reserve(static_cast<std::size_t>(cap) * 2);
        out.reserve(static_cast<std::size_t>(cap) + 1);
        std::vector<int> scratch = pool;
        while (out.size() < cap) {
            for (std::size_t i = 0; i < k; ++i) {
                const auto j = i + std::min(n - i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i)));
                std::swap(scratch[i], scratch[j]);
            }
            std::vector<int> pick(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k));
            std::sort(pick.begin(), pick.end());
            if (!seen.insert(pick).second) continue;
            if (must_include && pick == must_include->components) have_required = true;
            out.push_back({std::move(pick)});
        }
    }
    if (must_include && !have_required) out.push_back(*must_include);
    return out;
}

// ---------------------------------------------------------------------------
// Plans

inline constexpr int full_horizon = INT_MAX;

struct PlanOptions {
    Objective objective = Objective::f2();
    int resources = 10;
    Pooling pooling = Pooling::full;
    std::uint64_t cap = 100000;
    int lookahead = 1;  // full_horizon searches exhaustively
    std::uint64_t seed = 0;
    unsigned threads = 1;
    // Hard limit on the number of actions the `full` strategy may enumerate.
    std::uint64_t full_pool_limit = 10'000'000;
};

struct PlanResult {
    ActionString actions;
    double objective = 0.0;
    RecoveryTrajectory trajectory;
    std::vector<std::size_t> candidate_counts;  // enumerated actions per committed epoch
    double log10_table_size = 0.0;              // log10 of the product of C(|D_t|, N) along the path
};

namespace detail {

struct Scratch {
    SimState state;
    std::vector<int> next, prev, assigned, repaired;
};

class Planner {
public:
    Planner(const RecoveryModel& model, const PriorityOrder& order, const PlanOptions& opt)
        : model_(model), order_(order), opt_(opt),
          threshold_(service_threshold(opt.objective.gamma, model.total_population())),
          importance_(importance_order(model.community())) {
        if (opt.resources < 1) throw ConfigError("resource units N must be >= 1");
        if (opt.cap < 1) throw ConfigError("action cap must be >= 1");
        if (opt.lookahead < 1) throw ConfigError("lookahead must be >= 1");
        if (order.size() != static_cast<std::size_t>(model.components()))
            throw ConfigError("priority order does not cover every component");
    }

    double threshold() const { return threshold_; }
    const Objective& objective() const { return opt_.objective; }

    bool settled(const ObjectiveTracker& t) const {
        return opt_.objective.kind == ObjectiveKind::f1 && t.crossing_clock >= 0.0;
    }

    void apply(SimState& s, ObjectiveTracker& t, std::span<const int> action, std::vector<int>* repaired = nullptr) const {
        const double k = model_.advance(s, action, repaired);
        record_epoch(t, k, s.served, s.clock, threshold_);
    }

    // Runs the base heuristic from `s` to full repair (or, for F1, until the
    // threshold is crossed) and returns the score of the completed string.
    double complete_with_base(SimState& s, ObjectiveTracker& t, Scratch& w) const {
        if (settled(t) || s.damaged == 0) return final_score(t);
        const int n = model_.components();
        const int sentinel = n;
        w.next.resize(static_cast<std::size_t>(n) + 1);
        w.prev.resize(static_cast<std::size_t>(n) + 1);
        int last = sentinel;
        for (int c : order_.sequence) {
            if (!s.is_damaged(c)) continue;
            w.next[static_cast<std::size_t>(last)] = c;
            w.prev[static_cast<std::size_t>(c)] = last;
            last = c;
        }
        w.next[static_cast<std::size_t>(last)] = sentinel;
        w.prev[static_cast<std::size_t>(sentinel)] = last;

        const auto units = static_cast<std::size_t>(opt_.resources);
        while (s.damaged > 0) {
            w.assigned.clear();
            for (int u = w.next[static_cast<std::size_t>(sentinel)]; u != sentinel && w.assigned.size() < units;
                 u = w.next[static_cast<std::size_t>(u)])
                w.assigned.push_back(u);
            w.repaired.clear();
            apply(s, t, w.assigned, &w.repaired);
            for (int c : w.repaired) {
                const int p = w.prev[static_cast<std::size_t>(c)], q = w.next[static_cast<std::size_t>(c)];
                w.next[static_cast<std::size_t>(p)] = q;
                w.prev[static_cast<std::size_t>(q)] = p;
            }
            if (settled(t)) break;
        }
        return final_score(t);
    }

    double final_score(const ObjectiveTracker& t) const { return score(opt_.objective, t); }

    // Candidate first actions at `s`. The base action is always present.
    std::vector<RepairAction> candidates(const SimState& s, std::uint64_t seed) const {
        auto base = base_action(order_, s, opt_.resources);
        switch (opt_.pooling) {
            case Pooling::full: {
                const auto pool = s.damaged_set();
                const auto count = binomial(pool.size(), static_cast<std::uint64_t>(opt_.resources));
                if (count > opt_.full_pool_limit)
                    throw PlanningRefused("full pooling would enumerate " + std::to_string(count) +
                                          " actions; use a capped strategy");
                return enumerate_actions(pool, opt_.resources, count, seed, base);
            }
            case Pooling::random_cap: {
                // The importance heuristic's pick joins the random sample as well.
                auto out = enumerate_actions(s.damaged_set(), opt_.resources, opt_.cap, seed, base);
                auto smart = base_action(importance_, s, opt_.resources);
                if (std::find(out.begin(), out.end(), smart) == out.end()) out.push_back(std::move(smart));
                return out;
            }
            case Pooling::one_step:
                return enumerate_actions(candidate_pool_1step(model_.community().tree(), s, opt_.resources),
                                         opt_.resources, opt_.cap, seed, base);
            case Pooling::n_step:
                return enumerate_actions(candidate_pool_Nstep(model_.community().tree(), s, opt_.resources),
                                         opt_.resources, opt_.cap, seed, base);
        }
        return {std::move(base)};
    }

    // Value of taking `action` at `s` and then searching `depth - 1` further
    // epochs before handing over to the base heuristic.
    double lookahead_value(const SimState& s, const ObjectiveTracker& t, const RepairAction& action, int depth,
                           Scratch& w) const {
        if (depth <= 1) {
            w.state = s;
            ObjectiveTracker tt = t;
            apply(w.state, tt, action.components);
            return complete_with_base(w.state, tt, w);
        }
        SimState next = s;
        ObjectiveTracker tt = t;
        apply(next, tt, action.components);
        if (settled(tt) || next.damaged == 0) return final_score(tt);
        if (next.damaged <= opt_.resources) return complete_with_base(next, tt, w);
        const auto cands = candidates(next, state_seed(next));
        double best = 0.0;
        bool have = false;
        const int child_depth = depth == full_horizon ? full_horizon : depth - 1;
        for (const auto& a : cands) {
            const double v = lookahead_value(next, tt, a, child_depth, w);
            if (!have || opt_.objective.better(v, best)) {
                best = v;
                have = true;
            }
        }
        return best;
    }

    std::uint64_t state_seed(const SimState& s) const {
        std::uint64_t h = opt_.seed;
        for (double r : s.remaining) h = mix64(h ^ std::bit_cast<std::uint64_t>(r));
        return h;
    }

    const RecoveryModel& model() const { return model_; }
    const PriorityOrder& order() const { return order_; }
    const PlanOptions& options() const { return opt_; }

private:
    const RecoveryModel& model_;
    const PriorityOrder& order_;
    PlanOptions opt_;
    double threshold_;
    PriorityOrder importance_;
};

inline PlanResult finish(const RecoveryModel& model, const DamageScenario& scenario, ActionString actions,
                         const PlanOptions& opt) {
    PlanResult r;
    auto run = replay(model, scenario, actions, opt.resources);
    r.actions = std::move(run.actions);
    r.trajectory = std::move(run.trajectory);
    r.objective = r.trajectory.epochs.empty()
                      ? (opt.objective.kind == ObjectiveKind::f1 ? 0.0 : r.trajectory.initial_level)
                      : evaluate(opt.objective, r.trajectory);
    return r;
}

}  // namespace detail

// Runs the base heuristic alone.
inline PlanResult base_plan(const RecoveryModel& model, const DamageScenario& scenario, const PriorityOrder& order,
                            const PlanOptions& opt) {
    auto run = run_policy(model, scenario, [&](const SimState& s) { return base_action(order, s, opt.resources); },
                          opt.resources);
    PlanResult r;
    r.actions = std::move(run.actions);
    r.trajectory = std::move(run.trajectory);
    r.objective = r.trajectory.epochs.empty()
                      ? (opt.objective.kind == ObjectiveKind::f1 ? 0.0 : r.trajectory.initial_level)
                      : evaluate(opt.objective, r.trajectory);
    r.candidate_counts.assign(r.actions.size(), 1);
    return r;
}

// Commits, at every non-trivial epoch, the first action of the best candidate
// string; candidates are completed with the base heuristic. Ties go to the
// lexicographically smallest component tuple.
inline PlanResult rollout_plan(const RecoveryModel& model, const DamageScenario& scenario, const PriorityOrder& order,
                               const PlanOptions& opt) {
    detail::Planner planner(model, order, opt);
    const unsigned threads = std::max(1u, opt.threads);
    std::vector<detail::Scratch> scratch(threads);

    SimState s = model.initial_state(scenario);
    ObjectiveTracker tracker = start_tracker(s, planner.threshold());
    ActionString committed;
    std::vector<std::size_t> counts;
    double log10_size = 0.0;
    std::uint64_t epoch = 0;

    while (s.damaged > opt.resources) {
        ++epoch;
        log10_size += log10_binomial(s.damaged, opt.resources);
        auto base = base_action(order, s, opt.resources);
        if (planner.settled(tracker)) {
            // F1 already met: every completion scores the same, so the base action wins the tie.
            counts.push_back(1);
            planner.apply(s, tracker, base.components);
            committed.push_back(std::move(base));
            continue;
        }
        const auto cands = planner.candidates(s, derive_seed(opt.seed, epoch));
        counts.push_back(cands.size());
        std::vector<double> values(cands.size());
        parallel_for(cands.size(), threads, [&](std::size_t i, unsigned w) {
            values[i] = planner.lookahead_value(s, tracker, cands[i], opt.lookahead, scratch[w]);
        }, 16);

        std::size_t best = 0;
        for (std::size_t i = 1; i < cands.size(); ++i) {
            if (opt.objective.better(values[i], values[best])) {
                best = i;
            } else if (values[i] == values[best] && cands[i] < cands[best]) {
                best = i;
            }
        }
        planner.apply(s, tracker, cands[best].components);
        committed.push_back(cands[best]);
    }

    auto r = detail::finish(model, scenario, std::move(committed), opt);
    r.candidate_counts = std::move(counts);
    r.log10_table_size = log10_size;
    return r;
}

// Upper bound on the number of action strings: assumes one completion per epoch.
inline double log10_search_space(int damaged, int resources) {
    double total = 0.0;
    for (int m = damaged; m > resources; --m) total += log10_binomial(m, resources);
    return total;
}

// True optimum by depth-first enumeration of every action string over the full
// candidate sets. Refuses instances whose estimated size exceeds `budget`.
inline PlanResult exact_plan(const RecoveryModel& model, const DamageScenario& scenario, const PlanOptions& opt_in,
                             double budget = 1e7) {
    PlanOptions opt = opt_in;
    opt.pooling = Pooling::full;
    opt.lookahead = 1;
    const auto order = PriorityOrder::from_sequence([&] {
        std::vector<int> seq(static_cast<std::size_t>(model.components()));
        std::iota(seq.begin(), seq.end(), 0);
        return seq;
    }());
    detail::Planner planner(model, order, opt);

    SimState s0 = model.initial_state(scenario);
    if (s0.damaged == 0) return detail::finish(model, scenario, {}, opt);
    const double estimate = log10_search_space(s0.damaged, opt.resources);
    if (estimate > std::log10(budget))
        throw PlanningRefused("exact search space ~1e" + std::to_string(static_cast<int>(std::ceil(estimate))) +
                              " action strings exceeds the budget of " + std::to_string(budget));

    ObjectiveTracker t0 = start_tracker(s0, planner.threshold());
    ActionString prefix, best_prefix;
    double best = 0.0;
    bool have = false;
    detail::Scratch w;

    auto dfs = [&](auto&& self, const SimState& s, const ObjectiveTracker& t) -> void {
        if (planner.settled(t) || s.damaged <= opt.resources) {
            SimState tail = s;
            ObjectiveTracker tt = t;
            const double v = planner.complete_with_base(tail, tt, w);
            if (!have || opt.objective.better(v, best)) {
                best = v;
                best_prefix = prefix;
                have = true;
            }
            return;
        }
        const auto cands = enumerate_actions(s.damaged_set(), opt.resources, std::numeric_limits<std::uint64_t>::max(), 0);
        for (const auto& a : cands) {
            SimState next = s;
            ObjectiveTracker tt = t;
            planner.apply(next, tt, a.components);
            prefix.push_back(a);
            self(self, next, tt);
            prefix.pop_back();
        }
    };
    dfs(dfs, s0, t0);

    // Complete the prefix (F1 may stop early) with the fixed order to a full string.
    SimState s = s0;
    std::vector<int> repaired;
    for (const auto& a : best_prefix) model.advance(s, a.components);
    ActionString full = best_prefix;
    while (s.damaged > opt.resources) {
        auto a = base_action(order, s, opt.resources);
        model.advance(s, a.components);
        full.push_back(std::move(a));
    }
    auto r = detail::finish(model, scenario, std::move(full), opt);
    r.log10_table_size = estimate;
    return r;
}

}  // namespace epn
