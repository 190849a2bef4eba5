#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace isa {

/// Validation errors are bad inputs or violated preconditions; runtime errors
/// are environmental (I/O, transport). The CLI maps them to exit codes 1 and 2.
enum class ErrorKind { validation, runtime };

/// Exception carrying the name of the module that raised it. what() is
/// "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(module) + ": " + message),
        module_(module),
        kind_(kind) {}

  const std::string& module() const noexcept { return module_; }
  ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string module_;
  ErrorKind kind_;
};

}  // namespace isa
