#pragma once

#include <stdexcept>
#include <string>

namespace nadjust {

// Common base so callers can catch the library's failures in one clause
// while the CLI maps them onto exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

struct NonFiniteEvaluation : Error {
  explicit NonFiniteEvaluation(const std::string& what) : Error(what) {}
};

struct SingularMatrix : Error {
  explicit SingularMatrix(const std::string& what) : Error(what) {}
};

struct NoConvergence : Error {
  explicit NoConvergence(const std::string& what) : Error(what) {}
};

struct InvalidParams : Error {
  explicit InvalidParams(const std::string& what) : Error(what) {}
};

struct InvalidData : Error {
  explicit InvalidData(const std::string& what) : Error(what) {}
};

struct NegativeVariance : Error {
  explicit NegativeVariance(const std::string& what) : Error(what) {}
};

struct InsufficientGroups : Error {
  explicit InsufficientGroups(const std::string& what) : Error(what) {}
};

struct DivergenceDetected : Error {
  explicit DivergenceDetected(const std::string& what) : Error(what) {}
};

struct AccuracyNotReached : Error {
  explicit AccuracyNotReached(const std::string& what) : Error(what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

// Carries the 1-based line number of the offending record; binary formats
// have no line structure and use the plain form (line stays 0).
struct ParseError : Error {
  long line;
  ParseError(const std::string& what, long line_no)
      : Error(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
  explicit ParseError(const std::string& what) : Error(what), line(0) {}
};

struct NonPositiveUnderLog : Error {
  explicit NonPositiveUnderLog(const std::string& what) : Error(what) {}
};

}  // namespace nadjust
