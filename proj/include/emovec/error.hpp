#pragma once

#include <stdexcept>
#include <string>

namespace emovec {

// Validation errors map to CLI exit code 1, I/O errors to exit code 2.
enum class ErrorKind { validation, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  explicit Error(const std::string& what) : Error(ErrorKind::validation, what) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace emovec
