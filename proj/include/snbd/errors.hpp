#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace snbd {

// Failure categories. The CLI maps each one onto a distinct exit status.
enum class ErrorCategory : int {
  internal = 1,
  config = 2,
  shape = 3,
  dimension_limit = 4,
  contract = 5,
  numerical = 6,
  recovery = 7,
  io = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::shape, what) {}
};

struct DimensionLimitError : Error {
  explicit DimensionLimitError(const std::string& what)
      : Error(ErrorCategory::dimension_limit, what) {}
};

// A documented precondition was violated (non-Hermitian input, bad trace, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

struct RangeError : Error {
  explicit RangeError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

// Pair interactions that are not swap-symmetric cannot be written with a
// shared operator on both particles.
struct UnsupportedInteractionError : Error {
  explicit UnsupportedInteractionError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

struct TrajectoryBlowupError : Error {
  TrajectoryBlowupError(double t, std::uint64_t trajectory, const std::string& what)
      : Error(ErrorCategory::numerical, what), time(t), trajectory_id(trajectory) {}
  double time;
  std::uint64_t trajectory_id;
};

struct PositivityViolationError : Error {
  PositivityViolationError(double t, std::uint64_t trajectory, const std::string& what)
      : Error(ErrorCategory::numerical, what), time(t), trajectory_id(trajectory) {}
  double time;
  std::uint64_t trajectory_id;
};

struct MissingDataError : Error {
  explicit MissingDataError(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

struct LookupError : Error {
  explicit LookupError(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

struct IncompatibleAccumulatorError : Error {
  explicit IncompatibleAccumulatorError(const std::string& what)
      : Error(ErrorCategory::contract, what) {}
};

struct NullProjectionError : Error {
  explicit NullProjectionError(const std::string& what) : Error(ErrorCategory::recovery, what) {}
};

struct PhaseSingularityError : Error {
  PhaseSingularityError(double t, const std::string& what)
      : Error(ErrorCategory::recovery, what), time(t) {}
  double time;
};

struct DegenerateReferenceError : Error {
  DegenerateReferenceError(double t, const std::string& what)
      : Error(ErrorCategory::recovery, what), time(t) {}
  double time;
};

struct GridError : Error {
  explicit GridError(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

// Configuration problems carry the JSON path (and source line when known).
struct ConfigError : Error {
  ConfigError(std::string field_path, const std::string& reason, int line = 0)
      : Error(ErrorCategory::config, format(field_path, reason, line)),
        path(std::move(field_path)),
        line(line) {}
  std::string path;
  int line;

 private:
  static std::string format(const std::string& p, const std::string& reason, int line) {
    std::string out = p.empty() ? std::string("config") : p;
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    return out + ": " + reason;
  }
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

}  // namespace snbd
