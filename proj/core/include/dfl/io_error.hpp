#pragma once

#include <stdexcept>
#include <string>

namespace dfl {

// Filesystem-level failure (missing file, unreadable stream). Kept separate
// from ParseError so the CLI can map the two onto different exit codes.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dfl
