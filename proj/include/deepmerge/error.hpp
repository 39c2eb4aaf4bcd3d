#pragma once

#include <stdexcept>
#include <string>

namespace deepmerge {

// All library failures are reported through this exception type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deepmerge
