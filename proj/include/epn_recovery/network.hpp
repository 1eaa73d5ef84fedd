#pragma once

// Electrical power network as a rooted dependency tree, plus the population
// grid and the gravity model that couples grid cells to food retailers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"
#include "hazard_field.hpp"

namespace epn {

enum class ComponentClass : std::uint8_t { substation, transmission, distribution };

inline constexpr int component_class_count = 3;

inline const char* to_string(ComponentClass c) {
    switch (c) {
        case ComponentClass::substation: return "substation";
        case ComponentClass::transmission: return "transmission";
        case ComponentClass::distribution: return "distribution";
    }
    return "?";
}

inline ComponentClass parse_component_class(const std::string& s) {
    if (s == "substation") return ComponentClass::substation;
    if (s == "transmission") return ComponentClass::transmission;
    if (s == "distribution") return ComponentClass::distribution;
    throw ConfigError("unknown component class '" + s + "'");
}

struct ComponentRecord {
    int id = 0;
    ComponentClass cls = ComponentClass::distribution;
    std::optional<int> parent;
    Point location;
};

// A maximal serial run of components. A new segment starts at the root and at
// every child of a branching component. Candidate pruning walks segment levels.
struct Segment {
    int label = 0;                // id of the head component
    int parent = -1;              // parent segment index, -1 for the root segment
    int level = 0;                // root segment = 0
    std::vector<int> members;     // component indices, head first
    std::vector<int> children;    // segment indices
};

// Components are stored by dense index in ascending id order, so comparing
// indices is the same as comparing ids.
class EpnTree {
public:
    static EpnTree build(std::vector<ComponentRecord> records) {
        if (records.empty()) throw LoadError(LoadError::Kind::parse, "component list is empty");
        std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

        EpnTree t;
        const int n = static_cast<int>(records.size());
        for (int i = 0; i < n; ++i) {
            if (!t.index_.emplace(records[static_cast<std::size_t>(i)].id, i).second)
                throw LoadError(LoadError::Kind::duplicate_id,
                                "duplicate component id " + std::to_string(records[static_cast<std::size_t>(i)].id));
        }

        t.records_ = std::move(records);
        t.parent_.assign(static_cast<std::size_t>(n), -1);
        t.children_.assign(static_cast<std::size_t>(n), {});
        int root = -1;
        for (int i = 0; i < n; ++i) {
            const auto& r = t.records_[static_cast<std::size_t>(i)];
            if (!r.parent) {
                if (root >= 0)
                    throw LoadError(LoadError::Kind::multiple_roots,
                                    "components " + std::to_string(t.records_[static_cast<std::size_t>(root)].id) +
                                        " and " + std::to_string(r.id) + " both have no parent");
                root = i;
                continue;
            }
            auto it = t.index_.find(*r.parent);
            if (it == t.index_.end())
                throw LoadError(LoadError::Kind::dangling_parent, "component " + std::to_string(r.id) +
                                                                      " references missing parent " +
                                                                      std::to_string(*r.parent));
            if (it->second == i)
                throw LoadError(LoadError::Kind::cycle, "component " + std::to_string(r.id) + " is its own parent");
            t.parent_[static_cast<std::size_t>(i)] = it->second;
            t.children_[static_cast<std::size_t>(it->second)].push_back(i);
        }
        if (root < 0) throw LoadError(LoadError::Kind::no_root, "no root component (every component has a parent)");
        t.root_ = root;

        // BFS from the root; anything unreached sits on a parent cycle.
        t.depth_.assign(static_cast<std::size_t>(n), -1);
        std::queue<int> q;
        q.push(root);
        t.depth_[static_cast<std::size_t>(root)] = 0;
        int reached = 0;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            ++reached;
            for (int c : t.children_[static_cast<std::size_t>(u)]) {
                t.depth_[static_cast<std::size_t>(c)] = t.depth_[static_cast<std::size_t>(u)] + 1;
                q.push(c);
            }
        }
        if (reached != n) {
            for (int i = 0; i < n; ++i)
                if (t.depth_[static_cast<std::size_t>(i)] < 0)
                    throw LoadError(LoadError::Kind::cycle, "component " + std::to_string(t.id_of(i)) +
                                                                " is not reachable from the root (parent cycle)");
        }
        t.build_segments();
        return t;
    }

    int size() const { return static_cast<int>(records_.size()); }
    int root() const { return root_; }
    int id_of(int index) const { return records_[static_cast<std::size_t>(index)].id; }
    int parent(int index) const { return parent_[static_cast<std::size_t>(index)]; }
    int depth(int index) const { return depth_[static_cast<std::size_t>(index)]; }
    ComponentClass cls(int index) const { return records_[static_cast<std::size_t>(index)].cls; }
    const Point& location(int index) const { return records_[static_cast<std::size_t>(index)].location; }
    const std::vector<int>& children(int index) const { return children_[static_cast<std::size_t>(index)]; }
    const std::vector<ComponentRecord>& records() const { return records_; }

    bool contains(int id) const { return index_.count(id) != 0; }

    int index_of(int id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw LookupError("unknown component id " + std::to_string(id));
        return it->second;
    }

    // Component indices from the root down to `index`, inclusive.
    std::vector<int> path_indices(int index) const {
        std::vector<int> path;
        for (int u = index; u >= 0; u = parent(u)) path.push_back(u);
        std::reverse(path.begin(), path.end());
        return path;
    }

    // Component ids from the root down to the sink. The sink has power iff every
    // component on this path is functional.
    std::vector<int> supply_path(int sink_id) const {
        auto path = path_indices(index_of(sink_id));
        for (auto& v : path) v = id_of(v);
        return path;
    }

    const std::vector<Segment>& segments() const { return segments_; }
    int segment_of(int index) const { return segment_of_[static_cast<std::size_t>(index)]; }
    int segment_levels() const { return segment_levels_; }

private:
    void build_segments() {
        segment_of_.assign(records_.size(), -1);
        std::vector<std::pair<int, int>> stack{{root_, -1}};  // (head component, parent segment)
        while (!stack.empty()) {
            auto [head, parent_seg] = stack.back();
            stack.pop_back();
            Segment seg;
            seg.label = id_of(head);
            seg.parent = parent_seg;
            seg.level = parent_seg < 0 ? 0 : segments_[static_cast<std::size_t>(parent_seg)].level + 1;
            const int seg_index = static_cast<int>(segments_.size());
            int u = head;
            while (true) {
                seg.members.push_back(u);
                segment_of_[static_cast<std::size_t>(u)] = seg_index;
                if (children(u).size() != 1) break;
                u = children(u).front();
            }
            segments_.push_back(std::move(seg));
            if (parent_seg >= 0) segments_[static_cast<std::size_t>(parent_seg)].children.push_back(seg_index);
            const auto& kids = children(u);
            for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.emplace_back(*it, seg_index);
        }
        segment_levels_ = 0;
        for (const auto& s : segments_) segment_levels_ = std::max(segment_levels_, s.level + 1);
    }

    std::vector<ComponentRecord> records_;
    std::unordered_map<int, int> index_;
    std::vector<int> parent_;
    std::vector<std::vector<int>> children_;
    std::vector<int> depth_;
    int root_ = -1;
    std::vector<Segment> segments_;
    std::vector<int> segment_of_;
    int segment_levels_ = 0;
};

struct GridCell {
    int id = 0;
    double population = 0.0;
    int sink_id = 0;
    Point centroid;
};

struct Retailer {
    int id = 0;
    double capacity = 1.0;  // employee count
    int sink_id = 0;
    Point location;
};

enum class ServiceMode : std::uint8_t { households, households_and_retailers };

// P(r|c) proportional to w_r exp(b T_cr).
inline std::vector<double> gravity_probs(std::span<const double> capacities, std::span<const double> travel_minutes,
                                         double b) {
    if (capacities.size() != travel_minutes.size() || capacities.empty())
        throw ConfigError("gravity model needs one travel time per retailer and at least one retailer");
    if (!(b < 0.0)) throw ConfigError("gravity decay b must be negative");
    std::vector<double> p(capacities.size());
    double total = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r) {
        if (!(capacities[r] > 0.0)) throw ConfigError("retailer capacity must be positive");
        if (!(travel_minutes[r] >= 0.0) || !std::isfinite(travel_minutes[r]))
            throw ConfigError("travel time must be finite and non-negative");
        p[r] = capacities[r] * std::exp(b * travel_minutes[r]);
        total += p[r];
    }
    if (!(total > 0.0) || !std::isfinite(total))
        throw ConfigError("gravity weights underflow to zero; travel times too large for decay b");
    for (auto& v : p) v /= total;
    return p;
}

class DemandModel {
public:
    DemandModel() = default;

    // travel_minutes[c][r] in the order of `cells` and `retailers`.
    DemandModel(std::span<const Retailer> retailers, std::vector<std::vector<double>> travel_minutes, double b)
        : travel_(std::move(travel_minutes)), b_(b) {
        std::vector<double> w;
        for (const auto& r : retailers) w.push_back(r.capacity);
        probs_.reserve(travel_.size());
        for (const auto& row : travel_) probs_.push_back(gravity_probs(w, row, b));
    }

    double decay() const { return b_; }
    const std::vector<double>& probs(std::size_t cell) const { return probs_[cell]; }
    const std::vector<std::vector<double>>& travel_minutes() const { return travel_; }
    std::size_t cells() const { return probs_.size(); }

private:
    std::vector<std::vector<double>> travel_;
    std::vector<std::vector<double>> probs_;
    double b_ = -0.1;
};

// The network together with the people it serves.
class Community {
public:
    Community(EpnTree tree, std::vector<GridCell> cells, std::vector<Retailer> retailers,
              std::vector<std::vector<double>> travel_minutes, double b = -0.1)
        : tree_(std::move(tree)), cells_(std::move(cells)), retailers_(std::move(retailers)) {
        for (const auto& c : cells_) {
            if (!(c.population >= 0.0)) throw ConfigError("cell " + std::to_string(c.id) + " has negative population");
            if (!tree_.contains(c.sink_id))
                throw LoadError(LoadError::Kind::unknown_reference,
                                "cell " + std::to_string(c.id) + " sink " + std::to_string(c.sink_id) + " not in network");
            total_population_ += c.population;
        }
        for (const auto& r : retailers_)
            if (!tree_.contains(r.sink_id))
                throw LoadError(LoadError::Kind::unknown_reference, "retailer " + std::to_string(r.id) + " sink " +
                                                                        std::to_string(r.sink_id) + " not in network");
        if (!retailers_.empty()) {
            if (travel_minutes.size() != cells_.size())
                throw ConfigError("travel-time matrix must have one row per cell");
            demand_ = DemandModel(retailers_, std::move(travel_minutes), b);
        }
    }

    const EpnTree& tree() const { return tree_; }
    const std::vector<GridCell>& cells() const { return cells_; }
    const std::vector<Retailer>& retailers() const { return retailers_; }
    const DemandModel& demand() const { return demand_; }
    double total_population() const { return total_population_; }

private:
    EpnTree tree_;
    std::vector<GridCell> cells_;
    std::vector<Retailer> retailers_;
    DemandModel demand_;
    double total_population_ = 0.0;
};

// Reference evaluation straight from the definition; `functional` is indexed by
// component index. The simulator tracks the same quantity incrementally.
inline bool energized(const EpnTree& tree, std::span<const bool> functional, int sink_id) {
    for (int u = tree.index_of(sink_id); u >= 0; u = tree.parent(u))
        if (!functional[static_cast<std::size_t>(u)]) return false;
    return true;
}

inline double served_population(const Community& community, std::span<const bool> functional, ServiceMode mode) {
    const auto& tree = community.tree();
    std::vector<char> retailer_on(community.retailers().size());
    for (std::size_t r = 0; r < retailer_on.size(); ++r)
        retailer_on[r] = energized(tree, functional, community.retailers()[r].sink_id);

    double total = 0.0;
    for (std::size_t c = 0; c < community.cells().size(); ++c) {
        const auto& cell = community.cells()[c];
        if (!energized(tree, functional, cell.sink_id)) continue;
        if (mode == ServiceMode::households) {
            total += cell.population;
            continue;
        }
        double share = 0.0;
        const auto& p = community.demand().probs(c);
        for (std::size_t r = 0; r < p.size(); ++r)
            if (retailer_on[r]) share += p[r];
        total += cell.population * share;
    }
    return total;
}

// ---------------------------------------------------------------------------
// CSV loaders

inline std::vector<ComponentRecord> load_components(const std::string& path) {
    const auto t = csv::Table::read(path);
    t.require({"id", "class", "parent_id", "x_km", "y_km"}, path);
    std::vector<ComponentRecord> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto row = t.row(i);
        ComponentRecord r;
        r.id = static_cast<int>(row.integer("id"));
        try {
            r.cls = parse_component_class(row.str("class"));
        } catch (const ConfigError& e) {
            throw LoadError(LoadError::Kind::parse, row.where() + ": " + e.what());
        }
        if (row.has("parent_id")) r.parent = static_cast<int>(row.integer("parent_id"));
        r.location = {row.real("x_km"), row.real("y_km")};
        out.push_back(r);
    }
    return out;
}

inline std::vector<GridCell> load_cells(const std::string& path) {
    const auto t = csv::Table::read(path);
    t.require({"id", "population", "sink_id", "x_km", "y_km"}, path);
    std::vector<GridCell> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto row = t.row(i);
        GridCell c{static_cast<int>(row.integer("id")), row.real("population"), static_cast<int>(row.integer("sink_id")),
                   {row.real("x_km"), row.real("y_km")}};
        if (c.population < 0.0) throw LoadError(LoadError::Kind::parse, row.where() + ": negative population");
        out.push_back(c);
    }
    return out;
}

inline std::vector<Retailer> load_retailers(const std::string& path) {
    const auto t = csv::Table::read(path);
    t.require({"id", "capacity", "sink_id"}, path);
    std::vector<Retailer> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto row = t.row(i);
        Retailer r{static_cast<int>(row.integer("id")), row.real("capacity"), static_cast<int>(row.integer("sink_id")),
                   {}};
        if (row.has("x_km") && row.has("y_km")) r.location = {row.real("x_km"), row.real("y_km")};
        if (!(r.capacity > 0.0)) throw LoadError(LoadError::Kind::parse, row.where() + ": capacity must be positive");
        out.push_back(r);
    }
    return out;
}

// Returns minutes[c][r] in the order of `cells` and `retailers`; every pair must be present.
inline std::vector<std::vector<double>> load_travel_times(const std::string& path, std::span<const GridCell> cells,
                                                          std::span<const Retailer> retailers) {
    const auto t = csv::Table::read(path);
    t.require({"cell_id", "retailer_id", "minutes"}, path);
    std::unordered_map<int, std::size_t> ci, ri;
    for (std::size_t i = 0; i < cells.size(); ++i) ci[cells[i].id] = i;
    for (std::size_t i = 0; i < retailers.size(); ++i) ri[retailers[i].id] = i;
    const double unset = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> m(cells.size(), std::vector<double>(retailers.size(), unset));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto row = t.row(i);
        const auto c = ci.find(static_cast<int>(row.integer("cell_id")));
        const auto r = ri.find(static_cast<int>(row.integer("retailer_id")));
        if (c == ci.end() || r == ri.end())
            throw LoadError(LoadError::Kind::unknown_reference, row.where() + ": unknown cell or retailer id");
        const double minutes = row.real("minutes");
        if (!(minutes >= 0.0) || !std::isfinite(minutes))
            throw LoadError(LoadError::Kind::parse, row.where() + ": travel time must be finite and >= 0");
        m[c->second][r->second] = minutes;
    }
    for (std::size_t c = 0; c < m.size(); ++c)
        for (std::size_t r = 0; r < m[c].size(); ++r)
            if (std::isnan(m[c][r]))
                throw LoadError(LoadError::Kind::parse, path + ": missing travel time for cell " +
                                                            std::to_string(cells[c].id) + ", retailer " +
                                                            std::to_string(retailers[r].id));
    return m;
}

}  // namespace epn
