#pragma once

#include <stdexcept>
#include <string>

namespace cbed {

/// Structural problems with a graph (cycles, self-loops, bad indices).
class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user-supplied configuration or prior settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A request outside what an algorithm supports (e.g. enumeration above its size limit).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cbed
