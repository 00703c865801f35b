#pragma once

#include <stdexcept>
#include <string>

namespace mpeval {

/// Base class for all library errors. Subclasses carry a module-specific
/// kind enum so callers can branch without string matching.
class Error : public std::runtime_error {
public:
    explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

}  // namespace mpeval
