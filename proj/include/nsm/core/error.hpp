#pragma once

#include <stdexcept>
#include <string>

namespace nsm {

// Exit codes of the experiment CLI map onto these three families.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Warnings go to stderr unless silenced (tests silence them).
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);
int warning_count();

}  // namespace nsm
