#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace attribeval {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a precondition (bad parameters, missing stage input, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A metric whose denominator is zero. Never silently mapped to 0.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class FetchError : public Error {
 public:
  FetchError(std::string message, int status, std::string cause)
      : Error(std::move(message)), status_(status), cause_(std::move(cause)) {}

  // HTTP status, or 0 when the request never produced a response.
  int status() const noexcept { return status_; }
  const std::string& cause() const noexcept { return cause_; }

 private:
  int status_;
  std::string cause_;
};

class BackendError : public Error {
 public:
  BackendError(std::string message, int status, int attempts)
      : Error(std::move(message)), status_(status), attempts_(attempts) {}

  int status() const noexcept { return status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int status_;
  int attempts_;
};

class ReplayError : public Error {
 public:
  using Error::Error;
};

class ExportError : public Error {
 public:
  using Error::Error;
};

class ImportError : public Error {
 public:
  ImportError(std::string message, std::size_t row)
      : Error("row " + std::to_string(row) + ": " + message), row_(row) {}

  // 1-based data row (the header is row 0).
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmitError : public Error {
 public:
  EmitError(std::string message, std::string path)
      : Error(std::move(message) + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace attribeval
