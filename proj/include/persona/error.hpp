#pragma once

#include <stdexcept>
#include <string>

namespace persona {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kUsage = 1,
  kIngest = 2,
  kIntegrity = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

// Malformed or inconsistent input files (CSV, JSONL, model JSON).
class IngestError : public Error {
 public:
  explicit IngestError(const std::string& what) : Error(ErrorKind::kIngest, what) {}
};

// Corrupt binary data, non-finite values, missing coverage.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(ErrorKind::kIntegrity, what) {}
};

}  // namespace persona
