#pragma once

#include <stdexcept>
#include <string>

namespace randadj {

/// Malformed input: bad CSV cells, inconsistent dimensions, invalid options.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// The requested estimate cannot be formed on this data (degenerate design,
/// empty arm, pattern below its size threshold with fallback disabled, ...).
class EstimationError : public std::runtime_error {
public:
    explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

/// Violation of an internal invariant; indicates a bug, not a user error.
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace randadj
