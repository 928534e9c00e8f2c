#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace wxscale {

/// Error families. Each maps to a distinct CLI exit code.
enum class ErrorCode : int {
  kInvalidArgument = 2,
  kConfig = 3,
  kIo = 4,
  kInvalidGrid = 5,
  kSchemaMismatch = 6,
  kNonFinite = 7,
  kMissingData = 8,
  kDivergedRollout = 9,
  kFitFailure = 10,
  kJoin = 11,
  kVerifyMismatch = 12,
  kOutputExists = 13,
  kDecomposition = 14,
};

inline int exit_code(ErrorCode code) { return static_cast<int>(code); }

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class MissingDataError : public Error {
 public:
  MissingDataError(std::int64_t timestamp, const std::string& what)
      : Error(ErrorCode::kMissingData, what), timestamp_(timestamp) {}
  std::int64_t timestamp() const noexcept { return timestamp_; }

 private:
  std::int64_t timestamp_;
};

class DivergedRolloutError : public Error {
 public:
  DivergedRolloutError(std::int64_t ic_timestamp, int lead_hours)
      : Error(ErrorCode::kDivergedRollout,
              "rollout from IC " + std::to_string(ic_timestamp) + " diverged at lead " +
                  std::to_string(lead_hours) + " h"),
        ic_timestamp_(ic_timestamp),
        lead_hours_(lead_hours) {}
  std::int64_t ic_timestamp() const noexcept { return ic_timestamp_; }
  int lead_hours() const noexcept { return lead_hours_; }

 private:
  std::int64_t ic_timestamp_;
  int lead_hours_;
};

/// Raised while parsing a table; `row` is 1-based and counts the header row.
class JoinError : public Error {
 public:
  JoinError(std::size_t row, const std::string& what)
      : Error(ErrorCode::kJoin, "row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace wxscale
