#pragma once

// Synthetic community used by the examples, the CLI defaults and the
// acceptance suite: a 6.5 km x 6.5 km town split into 36 grid cells, six food
// retailers, and a radial power network of 327 components. One substation feeds
// a short transmission run to a downtown hub; from there distribution chains
// follow a spanning tree over the cells, retailers and water facilities.
// Geometry and populations are invented; restoration times are the standard
// table.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <utility>
#include <string>
#include <vector>

#include "damage.hpp"
#include "hazard_field.hpp"
#include "network.hpp"

namespace epn::testbed {

inline constexpr double side_km = 6.5;
inline constexpr int grid = 6;
inline constexpr double total_people = 48821.0;

struct Data {
    std::vector<ComponentRecord> components;
    std::vector<GridCell> cells;
    std::vector<Retailer> retailers;
    std::vector<std::string> retailer_names;
    std::vector<std::vector<double>> travel_minutes;
    EventSpec event;
    AttenuationParams attenuation;
    double vs30 = 350.0;
    double gravity_b = -0.1;
};

// Fragility rows (class, state, lambda, xi); medians in g.
inline const char* fragility_csv() {
    return "class,state,lambda,xi\n"
           "substation,minor,-0.6931,0.60\n"      // 0.50 g
           "substation,moderate,0.0000,0.60\n"    // 1.00 g
           "substation,extensive,0.6931,0.60\n"   // 2.00 g
           "substation,complete,1.0986,0.60\n"    // 3.00 g
           "transmission,minor,-1.3863,0.60\n"     // 0.25 g
           "transmission,moderate,-0.9163,0.60\n"  // 0.40 g
           "transmission,extensive,-0.5108,0.60\n" // 0.60 g
           "transmission,complete,-0.1054,0.60\n"  // 0.90 g
           "distribution,minor,-1.6094,0.60\n"     // 0.20 g
           "distribution,moderate,-1.0498,0.60\n"  // 0.35 g
           "distribution,extensive,-0.6931,0.60\n" // 0.50 g
           "distribution,complete,-0.3567,0.60\n"; // 0.70 g
}

inline FragilitySet fragilities() {
    return FragilitySet::from_table(csv::Table::from_string(fragility_csv(), "testbed fragilities"),
                                    "testbed fragilities");
}

namespace detail {

// Prim's tree from `origin` over `targets`; returns (parent, child) pairs where
// parent -1 is the origin.
inline std::vector<std::pair<int, int>> spanning_edges(const Point& origin, const std::vector<Point>& targets) {
    const auto n = targets.size();
    std::vector<bool> in(n, false);
    std::vector<double> best(n);
    std::vector<int> from(n, -1);
    for (std::size_t i = 0; i < n; ++i) best[i] = distance_km(origin, targets[i]);
    std::vector<std::pair<int, int>> edges;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!in[i] && (pick == n || best[i] < best[pick])) pick = i;
        in[pick] = true;
        edges.emplace_back(from[pick], static_cast<int>(pick));
        for (std::size_t i = 0; i < n; ++i) {
            const double d = distance_km(targets[pick], targets[i]);
            if (!in[i] && d < best[i]) {
                best[i] = d;
                from[i] = static_cast<int>(pick);
            }
        }
    }
    return edges;
}

}  // namespace detail

inline constexpr int component_count = 327;

inline Data make() {
    Data d;
    const double cell = side_km / grid;

    // Population: a dense downtown plus a thin rural floor, scaled to the census total.
    const Point downtown{3.3, 3.4};
    std::vector<double> weight;
    double wsum = 0.0;
    for (int row = 0; row < grid; ++row)
        for (int col = 0; col < grid; ++col) {
            const Point c{(col + 0.5) * cell, (row + 0.5) * cell};
            const double r = distance_km(c, downtown);
            weight.push_back(0.008 + std::exp(-r * r / (2.0 * 0.8 * 0.8)));
            wsum += weight.back();
        }

    // Retailers: capacities are employee counts of the six main stores.
    struct Store {
        const char* name;
        double employees;
        Point at;
    };
    const std::array<Store, 6> stores{{
        {"Walmart", 395, {4.05, 3.05}},
        {"Costco", 220, {4.35, 3.45}},
        {"Target", 130, {3.85, 2.65}},
        {"Mi Pueblo Food", 106, {3.05, 3.55}},
        {"Nob Hill Foods", 100, {2.85, 3.95}},
        {"Safeway", 130, {3.55, 3.95}},
    }};
    const std::array<Point, 4> water{{{0.35, 0.45}, {0.55, 6.05}, {6.2, 6.25}, {6.15, 0.3}}};

    // Network: substation and a short transmission run to the distribution hub,
    // then distribution lines along a spanning tree over cell centroids,
    // retailers and water facilities.
    std::vector<Point> targets;
    for (int row = 0; row < grid; ++row)
        for (int col = 0; col < grid; ++col) targets.push_back({(col + 0.5) * cell + 0.07, (row + 0.5) * cell + 0.05});
    for (const auto& s : stores) targets.push_back(s.at);
    for (const auto& w : water) targets.push_back(w);

    const Point substation{3.9, 3.6};
    const Point hub{3.45, 3.35};
    const auto edges = detail::spanning_edges(hub, targets);

    // Pick the line spacing so the whole network has exactly 327 components.
    const int distribution_budget = component_count - 1 - 8;
    std::vector<double> length;
    for (auto [from, to] : edges)
        length.push_back(distance_km(from < 0 ? hub : targets[static_cast<std::size_t>(from)],
                                     targets[static_cast<std::size_t>(to)]));
    auto counts_for = [&](double spacing) {
        std::vector<int> c;
        for (double l : length) c.push_back(std::max(1, static_cast<int>(std::lround(l / spacing))));
        return c;
    };
    double lo = 0.01, hi = 5.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto c = counts_for(mid);
        (std::accumulate(c.begin(), c.end(), 0) > distribution_budget ? lo : hi) = mid;
    }
    auto counts = counts_for(hi);
    int excess = std::accumulate(counts.begin(), counts.end(), 0) - distribution_budget;
    while (excess != 0) {
        // Spread the rounding remainder over the longest edges.
        std::size_t longest = 0;
        for (std::size_t i = 1; i < counts.size(); ++i)
            if (length[i] / counts[i] * (excess > 0 ? -1 : 1) > length[longest] / counts[longest] * (excess > 0 ? -1 : 1))
                longest = i;
        counts[longest] += excess > 0 ? -1 : 1;
        excess += excess > 0 ? -1 : 1;
    }

    int next_id = 1;
    auto add = [&](ComponentClass cls, std::optional<int> parent, Point at) {
        d.components.push_back({next_id, cls, parent, at});
        return next_id++;
    };
    auto chain = [&](int from, Point a, Point b, int count, ComponentClass cls) {
        int last = from;
        for (int i = 1; i <= count; ++i) {
            const double f = static_cast<double>(i) / count;
            last = add(cls, last, {a.x_km + f * (b.x_km - a.x_km), a.y_km + f * (b.y_km - a.y_km)});
        }
        return last;
    };

    const int root = add(ComponentClass::substation, std::nullopt, substation);
    const int hub_id = chain(root, substation, hub, 8, ComponentClass::transmission);
    std::vector<int> node_component(targets.size(), -1);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [from, to] = edges[e];
        const int parent = from < 0 ? hub_id : node_component[static_cast<std::size_t>(from)];
        const Point a = from < 0 ? hub : targets[static_cast<std::size_t>(from)];
        node_component[static_cast<std::size_t>(to)] =
            chain(parent, a, targets[static_cast<std::size_t>(to)], counts[e], ComponentClass::distribution);
    }

    double assigned = 0.0;
    for (int k = 0; k < grid * grid; ++k) {
        const auto i = static_cast<std::size_t>(k);
        double pop = std::round(total_people * weight[i] / wsum);
        if (i + 1 == weight.size()) pop = total_people - assigned;
        assigned += pop;
        const int row = k / grid, col = k % grid;
        d.cells.push_back({k + 1, pop, d.components[static_cast<std::size_t>(node_component[i]) - 1].id,
                           {(col + 0.5) * cell, (row + 0.5) * cell}});
    }
    for (std::size_t i = 0; i < stores.size(); ++i) {
        d.retailers.push_back({static_cast<int>(i) + 1, stores[i].employees,
                               node_component[static_cast<std::size_t>(grid * grid) + i], stores[i].at});
        d.retailer_names.emplace_back(stores[i].name);
    }

    // Driving time: 2 min access plus 1.3x detour at 40 km/h.
    for (const auto& c : d.cells) {
        std::vector<double> row;
        for (const auto& r : d.retailers) row.push_back(2.0 + 1.3 * distance_km(c.centroid, r.location) / 40.0 * 60.0);
        d.travel_minutes.push_back(std::move(row));
    }

    // Magnitude 6.9 event about 12 km south-east of downtown.
    d.event.magnitude = 6.9;
    d.event.epicenter = {12.0, -4.0};
    d.attenuation.c = {1.0, 0.9, -1.0, 10.0, -0.5};
    d.attenuation.sigma_intra = 0.5;
    d.attenuation.tau_inter = 0.3;
    d.attenuation.correlation_range_km = 20.0;
    return d;
}

inline Community community(const Data& d) {
    return Community(EpnTree::build(d.components), d.cells, d.retailers, d.travel_minutes, d.gravity_b);
}

inline std::vector<Site> sites(const Data& d) {
    std::vector<Site> out;
    for (const auto& c : d.components) out.push_back({c.location, d.vs30});
    return out;
}

// Writes the CSV inputs and a matching experiment config into `dir`.
inline void write(const Data& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw LoadError(LoadError::Kind::io, (dir / name).string() + ": cannot write");
        out << std::setprecision(10);
        return out;
    };
    {
        auto out = open("components.csv");
        out << "id,class,parent_id,x_km,y_km\n";
        for (const auto& c : d.components)
            out << c.id << ',' << to_string(c.cls) << ',' << (c.parent ? std::to_string(*c.parent) : "") << ','
                << c.location.x_km << ',' << c.location.y_km << '\n';
    }
    {
        auto out = open("cells.csv");
        out << "id,population,sink_id,x_km,y_km\n";
        for (const auto& c : d.cells)
            out << c.id << ',' << c.population << ',' << c.sink_id << ',' << c.centroid.x_km << ',' << c.centroid.y_km
                << '\n';
    }
    {
        auto out = open("retailers.csv");
        out << "id,name,capacity,sink_id,x_km,y_km\n";
        for (std::size_t i = 0; i < d.retailers.size(); ++i) {
            const auto& r = d.retailers[i];
            out << r.id << ',' << d.retailer_names[i] << ',' << r.capacity << ',' << r.sink_id << ','
                << r.location.x_km << ',' << r.location.y_km << '\n';
        }
    }
    {
        auto out = open("travel_times.csv");
        out << "cell_id,retailer_id,minutes\n";
        for (std::size_t c = 0; c < d.cells.size(); ++c)
            for (std::size_t r = 0; r < d.retailers.size(); ++r)
                out << d.cells[c].id << ',' << d.retailers[r].id << ',' << d.travel_minutes[c][r] << '\n';
    }
    {
        auto out = open("fragility.csv");
        out << fragility_csv();
    }
    {
        auto out = open("restoration.csv");
        out << "class,state,days\n";
        const auto table = RestorationTable::standard();
        for (auto cls : {ComponentClass::substation, ComponentClass::transmission, ComponentClass::distribution})
            for (int k = 0; k < damage_state_count; ++k)
                out << to_string(cls) << ',' << to_string(static_cast<DamageState>(k)) << ','
                    << table.days(cls, static_cast<DamageState>(k)) << '\n';
    }
    {
        auto out = open("experiment.cfg");
        const auto& a = d.attenuation;
        out << "# Synthetic testbed experiment. Paths are relative to this file.\n"
            << "components = components.csv\n"
            << "cells = cells.csv\n"
            << "retailers = retailers.csv\n"
            << "travel_times = travel_times.csv\n"
            << "fragility = fragility.csv\n"
            << "restoration = restoration.csv\n\n"
            << "magnitude = " << d.event.magnitude << '\n'
            << "epicenter_x_km = " << d.event.epicenter.x_km << '\n'
            << "epicenter_y_km = " << d.event.epicenter.y_km << '\n'
            << "c0 = " << a.c[0] << "\nc1 = " << a.c[1] << "\nc2 = " << a.c[2] << "\nc3 = " << a.c[3]
            << "\nc4 = " << a.c[4] << '\n'
            << "sigma_intra = " << a.sigma_intra << '\n'
            << "tau_inter = " << a.tau_inter << '\n'
            << "correlation_range_km = " << a.correlation_range_km << '\n'
            << "vs30 = " << d.vs30 << '\n'
            << "gravity_b = " << d.gravity_b << "\n\n"
            << "resources = 10\n"
            << "objective = f1\n"
            << "gamma = 0.8\n"
            << "mode = case2\n"
            << "base = random\n"
            << "pooling = random-cap\n"
            << "cap = 10000\n"
            << "lookahead = 1\n"
            << "scenarios = 20\n"
            << "seed = 2019\n";
    }
}

}  // namespace epn::testbed
