#pragma once

#include <stdexcept>
#include <string>

namespace prolif {

// Error classes map 1:1 onto CLI exit codes (see README).
enum class ErrorKind {
  kInvalidArgument = 2,
  kIo = 3,
  kFormat = 4,
  kDegenerate = 5,
  kStage = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) { return {ErrorKind::kInvalidArgument, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::kIo, what}; }
inline Error format_error(const std::string& what) { return {ErrorKind::kFormat, what}; }
inline Error degenerate(const std::string& what) { return {ErrorKind::kDegenerate, what}; }

}  // namespace prolif
