#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ucm/core/order_key.hpp"

namespace ucm {

// String identifier tagged by domain so user names and file names cannot be mixed up.
template <class Tag>
class Name {
 public:
  Name() = default;
  explicit Name(std::string value) : value_(std::move(value)) {}

  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }

  auto operator<=>(const Name&) const = default;
  bool operator==(const Name&) const = default;

 private:
  std::string value_;
};

using UserId = Name<struct UserTag>;
using FileId = Name<struct FileTag>;

// Reserved owner name of base records. Never accepted as a user name.
inline constexpr std::string_view kBaseMarker = "_base";

bool is_valid_user_name(std::string_view name);
bool is_valid_file_name(std::string_view name);
bool is_valid_line_text(std::string_view text);

class LineId {
 public:
  constexpr LineId() = default;
  constexpr explicit LineId(std::uint64_t value) : value_(value) {}

  constexpr std::uint64_t value() const { return value_; }
  std::string str() const { return std::to_string(value_); }
  static std::optional<LineId> parse(std::string_view text);

  auto operator<=>(const LineId&) const = default;

 private:
  std::uint64_t value_ = 0;
};

using UserSet = std::set<UserId>;

std::string join_users(const UserSet& users, std::string_view sep = ",");

// Text of a line, or a tombstone marking it deleted.
class Content {
 public:
  Content() = default;  // tombstone
  static Content text(std::string value) { return Content(std::move(value)); }
  static Content tombstone() { return Content(); }

  bool is_tombstone() const { return !text_.has_value(); }
  const std::string& text() const;
  const std::optional<std::string>& raw() const { return text_; }

  auto operator<=>(const Content&) const = default;

 private:
  explicit Content(std::string value) : text_(std::move(value)) {}
  std::optional<std::string> text_;
};

// Base (the reserved owner) or a non-empty set of users.
class Owner {
 public:
  static Owner base() { return Owner(); }
  static Owner users(UserSet users);

  bool is_base() const { return users_.empty(); }
  const UserSet& members() const { return users_; }
  bool contains(const UserId& user) const { return users_.contains(user); }
  std::string str() const;

  auto operator<=>(const Owner&) const = default;

 private:
  Owner() = default;
  UserSet users_;
};

// One tuple of the relation <file, line, text, owner>.
struct LineRecord {
  FileId file;
  LineId line;
  OrderKey order;
  Content content;
  Owner owner;

  bool operator==(const LineRecord&) const = default;
};

struct BaseLine {
  LineId line;
  OrderKey order;
  std::string text;

  bool operator==(const BaseLine&) const = default;
};

struct BaseVersion {
  std::uint64_t number = 0;
  std::optional<std::uint64_t> parent;
  std::map<FileId, std::vector<BaseLine>> files;

  bool operator==(const BaseVersion&) const = default;
};

struct Variant {
  UserSet owners;
  Content content;

  bool operator==(const Variant&) const = default;
};

struct Conflict {
  FileId file;
  LineId line;
  std::optional<std::string> base;
  std::vector<Variant> variants;  // sorted by owner set

  bool operator==(const Conflict&) const = default;
};

enum class ViewMode { kFull, kLocationOnly, kConflictsOnly, kHidden, kInterweave };

std::string_view to_string(ViewMode mode);
std::optional<ViewMode> parse_view_mode(std::string_view text);

struct ViewPrefs {
  UserId observer;
  std::map<UserId, ViewMode> modes;

  ViewMode mode_for(const UserId& user) const;
  bool operator==(const ViewPrefs&) const = default;
};

enum class LineStatus { kUnchanged, kOwn, kOther, kConflict, kLocationMarker };

std::string_view to_string(LineStatus status);
std::optional<LineStatus> parse_line_status(std::string_view text);

struct AnnotatedLine {
  LineId line;
  std::string text;
  LineStatus status = LineStatus::kUnchanged;
  UserSet users;                  // Other / LocationMarker
  std::vector<Variant> variants;  // Conflict

  bool operator==(const AnnotatedLine&) const = default;
};

struct AnnotatedDocument {
  FileId file;
  std::vector<AnnotatedLine> lines;

  bool operator==(const AnnotatedDocument&) const = default;
};

// Plain text per file; no ownership data.
struct Snapshot {
  std::map<FileId, std::vector<std::string>> files;

  bool operator==(const Snapshot&) const = default;
};

struct InterweaveGroup {
  UserSet members;
  bool active = false;

  bool operator==(const InterweaveGroup&) const = default;
};

}  // namespace ucm

template <class Tag>
struct std::hash<ucm::Name<Tag>> {
  std::size_t operator()(const ucm::Name<Tag>& name) const noexcept {
    return std::hash<std::string>{}(name.str());
  }
};
