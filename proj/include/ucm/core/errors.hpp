#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ucm/core/types.hpp"

namespace ucm {

// Machine-readable failure codes; the wire protocol sends to_string(code).
enum class ErrorCode {
  kInvalid,
  kDuplicateName,
  kUnknownProject,
  kUnknownFile,
  kFileExists,
  kUnknownLine,
  kLineDeleted,
  kNotMember,
  kUnknownUser,
  kVersionUnknown,
  kConflict,
  kAlreadyGrouped,
  kNotGrouped,
  kMembersConflict,
  kAuthFailed,
  kNotJoined,
  kSequenceGap,
  kCorruptEntry,
  kIo,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view text);

class CmError : public std::runtime_error {
 public:
  CmError(ErrorCode code, const std::string& detail) : std::runtime_error(detail), code_(code) {}
  ErrorCode code() const { return code_; }
  std::string detail() const { return what(); }

 private:
  ErrorCode code_;
};

// Materialization refused because included users disagree on some lines.
class ConflictError : public CmError {
 public:
  explicit ConflictError(std::vector<Conflict> conflicts);
  const std::vector<Conflict>& conflicts() const { return conflicts_; }

 private:
  std::vector<Conflict> conflicts_;
};

}  // namespace ucm
