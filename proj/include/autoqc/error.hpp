#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>

namespace autoqc {

// Base for all library failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input or configuration (CLI maps this to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed interchange file; message names the offending record and field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-fatal diagnostics go through a process-wide sink (stderr by default).
using WarningHandler = std::function<void(const std::string&)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}

inline void warn(const std::string& msg) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  if (warning_handler()) warning_handler()(msg);
}

// Swaps the sink for the lifetime of the guard (tests capture warnings with it).
class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler h) : saved_(warning_handler()) {
    warning_handler() = std::move(h);
  }
  ~ScopedWarningHandler() { warning_handler() = std::move(saved_); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler saved_;
};

}  // namespace autoqc
