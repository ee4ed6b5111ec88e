#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace spkid {

/// Pipeline error carrying a stable machine-readable name (e.g. "NoSpeech")
/// next to the human-readable message. The CLI maps names to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& message)
      : std::runtime_error(name + ": " + message), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

[[noreturn]] inline void fail(std::string name, const std::string& message) {
  throw Error(std::move(name), message);
}

inline void require(bool condition, const char* name, const std::string& message) {
  if (!condition) fail(name, message);
}

}  // namespace spkid
