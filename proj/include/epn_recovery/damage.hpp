#pragma once

// Lognormal fragility curves, damage-state sampling and restoration times.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"
#include "hazard_field.hpp"
#include "network.hpp"
#include "rng.hpp"

namespace epn {

enum class DamageState : std::uint8_t { undamaged = 0, minor = 1, moderate = 2, extensive = 3, complete = 4 };

inline constexpr int damage_state_count = 5;

inline const char* to_string(DamageState s) {
    static constexpr const char* names[] = {"undamaged", "minor", "moderate", "extensive", "complete"};
    return names[static_cast<int>(s)];
}

inline DamageState parse_damage_state(const std::string& s) {
    static constexpr const char* names[] = {"undamaged", "minor", "moderate", "extensive", "complete"};
    for (int i = 0; i < damage_state_count; ++i)
        if (s == names[i] || s == std::to_string(i)) return static_cast<DamageState>(i);
    throw ConfigError("unknown damage state '" + s + "'");
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(DS >= ds | IM = im) = Phi((ln im - lambda) / xi)
inline double exceedance_prob(double lambda, double xi, double im) {
    if (!(im > 0.0)) throw std::domain_error("exceedance_prob: intensity must be > 0");
    if (!(xi > 0.0)) throw std::domain_error("exceedance_prob: xi must be > 0");
    return standard_normal_cdf((std::log(im) - lambda) / xi);
}

struct Fragility {
    double lambda = 0.0;  // ln-median of im (g)
    double xi = 1.0;      // ln-standard deviation
};

// Curves for minor, moderate, extensive, complete (in that order).
using FragilityCurves = std::array<Fragility, damage_state_count - 1>;

inline constexpr double crossing_tolerance = 1e-12;

// P(state k) for k = 0..4 by differencing exceedance probabilities.
inline std::array<double, damage_state_count> state_probabilities(const FragilityCurves& curves, double im) {
    std::array<double, damage_state_count + 1> exceed{};
    exceed[0] = 1.0;
    for (int k = 1; k < damage_state_count; ++k) {
        const auto& f = curves[static_cast<std::size_t>(k - 1)];
        exceed[static_cast<std::size_t>(k)] = exceedance_prob(f.lambda, f.xi, im);
    }
    exceed[damage_state_count] = 0.0;
    std::array<double, damage_state_count> p{};
    for (int k = 0; k < damage_state_count; ++k) {
        double d = exceed[static_cast<std::size_t>(k)] - exceed[static_cast<std::size_t>(k + 1)];
        if (d < -crossing_tolerance)
            throw ConfigError("fragility curves cross at im = " + std::to_string(im) + " (state " +
                              to_string(static_cast<DamageState>(k)) + ")");
        p[static_cast<std::size_t>(k)] = std::max(d, 0.0);
    }
    return p;
}

// Inverse-CDF draw: the state is the deepest k with u < P(DS >= k).
inline DamageState sample_damage_state(const FragilityCurves& curves, double im, double u) {
    const auto p = state_probabilities(curves, im);
    // Walk from the most severe state so that the thresholds are the exceedance
    // probabilities themselves.
    double upper = 0.0;
    for (int k = damage_state_count - 1; k >= 1; --k) {
        upper += p[static_cast<std::size_t>(k)];
        if (u < upper) return static_cast<DamageState>(k);
    }
    return DamageState::undamaged;
}

inline DamageState sample_damage_state(const FragilityCurves& curves, double im, Rng& rng) {
    return sample_damage_state(curves, im, uniform01(rng));
}

inline void validate_curves(const FragilityCurves& curves, const std::string& what) {
    double lo = curves[0].lambda, hi = curves[0].lambda, max_xi = 0.0;
    for (const auto& f : curves) {
        if (!(f.xi > 0.0)) throw ConfigError(what + ": xi must be > 0");
        if (!std::isfinite(f.lambda)) throw ConfigError(what + ": lambda must be finite");
        lo = std::min(lo, f.lambda);
        hi = std::max(hi, f.lambda);
        max_xi = std::max(max_xi, f.xi);
    }
    for (std::size_t k = 0; k + 1 < curves.size(); ++k) {
        const auto& a = curves[k];
        const auto& b = curves[k + 1];
        if (a.xi == b.xi) {
            if (b.lambda < a.lambda) throw ConfigError(what + ": lambda must be non-decreasing with damage state");
            continue;
        }
        const double from = lo - 4.0 * max_xi, to = hi + 4.0 * max_xi;
        for (int i = 0; i < 100; ++i) {
            const double im = std::exp(from + (to - from) * i / 99.0);
            if (exceedance_prob(b.lambda, b.xi, im) - exceedance_prob(a.lambda, a.xi, im) > crossing_tolerance)
                throw ConfigError(what + ": exceedance curves cross near im = " + std::to_string(im));
        }
    }
}

class FragilitySet {
public:
    void set(ComponentClass cls, const FragilityCurves& curves) {
        validate_curves(curves, std::string("fragility for ") + to_string(cls));
        curves_[static_cast<std::size_t>(cls)] = curves;
        present_[static_cast<std::size_t>(cls)] = true;
    }

    bool has(ComponentClass cls) const { return present_[static_cast<std::size_t>(cls)]; }

    const FragilityCurves& at(ComponentClass cls) const {
        if (!has(cls)) throw ConfigError(std::string("no fragility curves for class ") + to_string(cls));
        return curves_[static_cast<std::size_t>(cls)];
    }

    // Rows (class, state, lambda, xi); all four damaged states per listed class.
    static FragilitySet load(const std::string& path) { return from_table(csv::Table::read(path), path); }

    static FragilitySet from_table(const csv::Table& t, const std::string& name) {
        t.require({"class", "state", "lambda", "xi"}, name);
        std::array<FragilityCurves, component_class_count> curves{};
        std::array<std::array<bool, damage_state_count - 1>, component_class_count> seen{};
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto row = t.row(i);
            try {
                const auto cls = parse_component_class(row.str("class"));
                const auto ds = parse_damage_state(row.str("state"));
                if (ds == DamageState::undamaged) throw ConfigError("no fragility curve for the undamaged state");
                const auto c = static_cast<std::size_t>(cls);
                const auto k = static_cast<std::size_t>(ds) - 1;
                curves[c][k] = {row.real("lambda"), row.real("xi")};
                seen[c][k] = true;
            } catch (const ConfigError& e) {
                throw ConfigError(row.where() + ": " + e.what());
            }
        }
        FragilitySet set;
        for (int c = 0; c < component_class_count; ++c) {
            const auto& s = seen[static_cast<std::size_t>(c)];
            const auto n = std::count(s.begin(), s.end(), true);
            if (n == 0) continue;
            if (n != damage_state_count - 1)
                throw ConfigError(name + ": class " + to_string(static_cast<ComponentClass>(c)) +
                                  " needs curves for all four damaged states");
            set.set(static_cast<ComponentClass>(c), curves[static_cast<std::size_t>(c)]);
        }
        return set;
    }

private:
    std::array<FragilityCurves, component_class_count> curves_{};
    std::array<bool, component_class_count> present_{};
};

class RestorationTable {
public:
    using Row = std::array<double, damage_state_count>;

    void set(ComponentClass cls, const Row& days) {
        if (days[0] != 0.0) throw ConfigError(std::string("restoration time for undamaged ") + to_string(cls) + " must be 0");
        for (std::size_t k = 1; k < days.size(); ++k) {
            if (!(days[k] > 0.0))
                throw ConfigError(std::string("restoration time must be positive for damaged ") + to_string(cls));
            if (days[k] < days[k - 1])
                throw ConfigError(std::string("restoration times must be non-decreasing for ") + to_string(cls));
        }
        days_[static_cast<std::size_t>(cls)] = days;
        present_[static_cast<std::size_t>(cls)] = true;
    }

    bool has(ComponentClass cls) const { return present_[static_cast<std::size_t>(cls)]; }

    double days(ComponentClass cls, DamageState ds) const {
        if (!has(cls)) throw ConfigError(std::string("no restoration times for class ") + to_string(cls));
        return days_[static_cast<std::size_t>(cls)][static_cast<std::size_t>(ds)];
    }

    // Repair durations in days per damage state.
    static RestorationTable standard() {
        RestorationTable t;
        t.set(ComponentClass::substation, {0.0, 1.0, 3.0, 7.0, 30.0});
        t.set(ComponentClass::transmission, {0.0, 0.5, 1.0, 1.0, 2.0});
        t.set(ComponentClass::distribution, {0.0, 0.5, 1.0, 1.0, 1.0});
        return t;
    }

    // Rows (class, state, days).
    static RestorationTable load(const std::string& path) {
        const auto t = csv::Table::read(path);
        t.require({"class", "state", "days"}, path);
        std::array<Row, component_class_count> rows{};
        std::array<std::array<bool, damage_state_count>, component_class_count> seen{};
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto row = t.row(i);
            try {
                const auto c = static_cast<std::size_t>(parse_component_class(row.str("class")));
                const auto k = static_cast<std::size_t>(parse_damage_state(row.str("state")));
                rows[c][k] = row.real("days");
                seen[c][k] = true;
            } catch (const ConfigError& e) {
                throw ConfigError(row.where() + ": " + e.what());
            }
        }
        RestorationTable table;
        for (int c = 0; c < component_class_count; ++c) {
            auto s = seen[static_cast<std::size_t>(c)];
            s[0] = true;  // undamaged may be omitted
            const auto n = std::count(s.begin(), s.end(), true);
            if (n == 1 && !seen[static_cast<std::size_t>(c)][0]) continue;
            if (n != damage_state_count)
                throw ConfigError(path + ": class " + to_string(static_cast<ComponentClass>(c)) +
                                  " needs a restoration time for every damaged state");
            table.set(static_cast<ComponentClass>(c), rows[static_cast<std::size_t>(c)]);
        }
        return table;
    }

private:
    std::array<Row, component_class_count> days_{};
    std::array<bool, component_class_count> present_{};
};

inline double restoration_time(const RestorationTable& table, ComponentClass cls, DamageState ds) {
    return table.days(cls, ds);
}

// D_1: damage state and initial remaining repair time per component index.
struct DamageScenario {
    std::vector<DamageState> states;
    std::vector<double> repair_days;

    int size() const { return static_cast<int>(states.size()); }

    int damaged_count() const {
        return static_cast<int>(std::count_if(repair_days.begin(), repair_days.end(), [](double d) { return d > 0.0; }));
    }
};

// Index of the nearest site for every component.
inline std::vector<int> nearest_sites(const EpnTree& tree, std::span<const Site> sites) {
    if (sites.empty()) throw ConfigError("no sites to map components onto");
    std::vector<int> out(static_cast<std::size_t>(tree.size()));
    for (int i = 0; i < tree.size(); ++i) {
        int best = 0;
        double best_d = distance_km(tree.location(i), sites[0].location);
        for (std::size_t s = 1; s < sites.size(); ++s) {
            const double d = distance_km(tree.location(i), sites[s].location);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(s);
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// Each component draws from its own counter-based stream keyed by its id, so
// the result does not depend on iteration order or scheduling.
inline DamageScenario generate_scenario(const ImField& field, const EpnTree& tree, std::span<const int> site_of,
                                        const FragilitySet& frags, const RestorationTable& table, std::uint64_t seed) {
    if (site_of.size() != static_cast<std::size_t>(tree.size()))
        throw ConfigError("site mapping must cover every component");
    DamageScenario sc;
    sc.states.resize(static_cast<std::size_t>(tree.size()));
    sc.repair_days.resize(static_cast<std::size_t>(tree.size()));
    for (int i = 0; i < tree.size(); ++i) {
        const auto s = static_cast<std::size_t>(site_of[static_cast<std::size_t>(i)]);
        if (s >= field.pga_g.size()) throw ConfigError("component mapped to a site outside the field");
        const double u = uniform01(seed, static_cast<std::uint64_t>(static_cast<std::uint32_t>(tree.id_of(i))));
        const auto ds = sample_damage_state(frags.at(tree.cls(i)), field.pga_g[s], u);
        sc.states[static_cast<std::size_t>(i)] = ds;
        sc.repair_days[static_cast<std::size_t>(i)] = restoration_time(table, tree.cls(i), ds);
    }
    return sc;
}

}  // namespace epn
