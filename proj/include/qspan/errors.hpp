#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace qspan {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Evaluation at a point where the closed form is singular (support edges,
// branch points).
class SingularPointError : public DomainError {
 public:
  using DomainError::DomainError;
};

// A numerical procedure could not reach its target accuracy.
class AccuracyError : public std::runtime_error {
 public:
  AccuracyError(const std::string& what, double achieved, double target)
      : std::runtime_error(what + " (achieved " + format(achieved) + ", target " + format(target) + ")"),
        achieved_(achieved),
        target_(target) {}

  double achieved() const noexcept { return achieved_; }
  double target() const noexcept { return target_; }

 private:
  static std::string format(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
  }

  double achieved_;
  double target_;
};

// Input text (Hamiltonian files, run configs) that does not parse.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, const std::string& msg)
      : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace qspan
