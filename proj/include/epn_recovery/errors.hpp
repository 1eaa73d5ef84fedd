#pragma once

#include <stdexcept>
#include <string>

namespace epn {

// Bad or inconsistent configuration data (parameters, fragility sets, tables).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file could not be read or parsed. Carries the file/line when known.
class LoadError : public std::runtime_error {
public:
    enum class Kind { io, parse, cycle, multiple_roots, no_root, dangling_parent, duplicate_id, unknown_reference };

    LoadError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// An id or class that is not present in a lookup table.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Caller broke a documented precondition (e.g. assigning a repaired component).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// The exact planner refuses instances whose search space exceeds its budget.
class PlanningRefused : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace epn
