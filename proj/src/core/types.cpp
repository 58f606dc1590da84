#include "ucm/core/types.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "ucm/core/errors.hpp"

namespace ucm {

bool is_valid_user_name(std::string_view name) {
  if (name.empty() || name.size() > 64 || name == kBaseMarker) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

bool is_valid_file_name(std::string_view name) {
  if (name.empty() || name.front() == '/' || name.back() == '/') return false;
  if (name.find_first_of(std::string_view("\0\n\r\\", 4)) != std::string_view::npos) return false;
  std::size_t start = 0;
  while (start <= name.size()) {
    auto end = name.find('/', start);
    if (end == std::string_view::npos) end = name.size();
    const auto part = name.substr(start, end - start);
    if (part.empty() || part == "." || part == "..") return false;
    start = end + 1;
  }
  return true;
}

bool is_valid_line_text(std::string_view text) { return text.find_first_of("\n\r") == std::string_view::npos; }

std::optional<LineId> LineId::parse(std::string_view text) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || value == 0) return std::nullopt;
  return LineId(value);
}

std::string join_users(const UserSet& users, std::string_view sep) {
  std::string out;
  for (const auto& u : users) {
    if (!out.empty()) out += sep;
    out += u.str();
  }
  return out;
}

const std::string& Content::text() const {
  if (!text_) throw std::logic_error("tombstone has no text");
  return *text_;
}

Owner Owner::users(UserSet users) {
  if (users.empty()) throw std::invalid_argument("owner set must not be empty");
  Owner owner;
  owner.users_ = std::move(users);
  return owner;
}

std::string Owner::str() const { return is_base() ? std::string(kBaseMarker) : "{" + join_users(users_) + "}"; }

std::string_view to_string(ViewMode mode) {
  switch (mode) {
    case ViewMode::kFull: return "full";
    case ViewMode::kLocationOnly: return "location";
    case ViewMode::kConflictsOnly: return "conflicts";
    case ViewMode::kHidden: return "hidden";
    case ViewMode::kInterweave: return "interweave";
  }
  return "hidden";
}

std::optional<ViewMode> parse_view_mode(std::string_view text) {
  for (auto mode : {ViewMode::kFull, ViewMode::kLocationOnly, ViewMode::kConflictsOnly, ViewMode::kHidden,
                    ViewMode::kInterweave})
    if (to_string(mode) == text) return mode;
  return std::nullopt;
}

ViewMode ViewPrefs::mode_for(const UserId& user) const {
  auto it = modes.find(user);
  return it == modes.end() ? ViewMode::kHidden : it->second;
}

std::string_view to_string(LineStatus status) {
  switch (status) {
    case LineStatus::kUnchanged: return "unchanged";
    case LineStatus::kOwn: return "own";
    case LineStatus::kOther: return "other";
    case LineStatus::kConflict: return "conflict";
    case LineStatus::kLocationMarker: return "location";
  }
  return "unchanged";
}

std::optional<LineStatus> parse_line_status(std::string_view text) {
  for (auto s : {LineStatus::kUnchanged, LineStatus::kOwn, LineStatus::kOther, LineStatus::kConflict,
                 LineStatus::kLocationMarker})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalid: return "invalid";
    case ErrorCode::kDuplicateName: return "duplicate_name";
    case ErrorCode::kUnknownProject: return "unknown_project";
    case ErrorCode::kUnknownFile: return "unknown_file";
    case ErrorCode::kFileExists: return "file_exists";
    case ErrorCode::kUnknownLine: return "unknown_line";
    case ErrorCode::kLineDeleted: return "line_deleted";
    case ErrorCode::kNotMember: return "not_member";
    case ErrorCode::kUnknownUser: return "unknown_user";
    case ErrorCode::kVersionUnknown: return "version_unknown";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kAlreadyGrouped: return "already_grouped";
    case ErrorCode::kNotGrouped: return "not_grouped";
    case ErrorCode::kMembersConflict: return "members_conflict";
    case ErrorCode::kAuthFailed: return "auth_failed";
    case ErrorCode::kNotJoined: return "not_joined";
    case ErrorCode::kSequenceGap: return "sequence_gap";
    case ErrorCode::kCorruptEntry: return "corrupt_entry";
    case ErrorCode::kIo: return "io";
  }
  return "invalid";
}

std::optional<ErrorCode> parse_error_code(std::string_view text) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kIo); ++i)
    if (to_string(static_cast<ErrorCode>(i)) == text) return static_cast<ErrorCode>(i);
  return std::nullopt;
}

ConflictError::ConflictError(std::vector<Conflict> conflicts)
    : CmError(ErrorCode::kConflict, std::to_string(conflicts.size()) + " conflicting line(s)"),
      conflicts_(std::move(conflicts)) {}

}  // namespace ucm
