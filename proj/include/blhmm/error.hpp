#pragma once

#include <stdexcept>
#include <string>

namespace blhmm {

/// Raised for malformed user input: bad files, bad configs, bad CLI values.
/// The CLI maps it to exit status 2; every other exception maps to 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace blhmm
