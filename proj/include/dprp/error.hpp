#pragma once

#include <stdexcept>
#include <string>

namespace dprp {

// Error taxonomy shared across the library. The CLI maps kinds to exit codes:
// config/usage/dimension -> 2, input/format -> 3, numeric -> 4.
enum class ErrorKind {
    dimension,
    config,
    input,
    usage,
    format,
    numeric,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace dprp
