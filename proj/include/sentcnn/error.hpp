#pragma once

#include <stdexcept>
#include <string>

namespace sentcnn {

/// Broad failure classes. The CLI maps each one onto a process exit code.
enum class ErrorKind {
  usage,       // bad command line
  validation,  // malformed input, config or dataset
  corrupt,     // unreadable artifact (checkpoint, vector file)
  query,       // lookup of something that does not exist
  numeric,     // training diverged
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sentcnn
