#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ucm/core/errors.hpp"
#include "ucm/core/types.hpp"

namespace ucm {

struct Replace {
  LineId line;
  std::string text;
};

struct InsertAfter {
  std::optional<LineId> anchor;  // nullopt inserts at the top of the file
  std::string text;
};

struct Delete {
  LineId line;
};

using Edit = std::variant<Replace, InsertAfter, Delete>;

struct EditOutcome {
  FileId file;
  LineId line;  // the edited line, or the freshly allocated one for inserts
  int records_added = 0;
  int records_removed = 0;
  std::optional<Conflict> conflict;    // conflict standing on the line after the edit
  bool conflict_created = false;       // no conflict before, one now
  bool conflict_removed = false;       // conflict before, none now
};

struct FailOnConflict {};
struct ObserverWins {
  UserId observer;
};
using MaterializePolicy = std::variant<FailOnConflict, ObserverWins>;

struct CommitResult {
  std::uint64_t number = 0;  // base number after the commit
  std::size_t promoted = 0;
  std::vector<std::pair<FileId, LineId>> skipped;
  std::optional<BaseVersion> archived;  // the superseded base, when the base changed

  bool operator==(const CommitResult&) const = default;
};

struct RollbackResult {
  BaseVersion base;
  BaseVersion archived;
};

// The authoritative configuration-management state of one project.
//
// Each line is a slot holding at most one base record and any number of pending
// records whose owner sets are pairwise disjoint. Every state-changing member
// function either applies completely or throws CmError leaving state untouched.
class Project {
 public:
  explicit Project(std::string name);

  const std::string& name() const { return name_; }
  std::uint64_t base_number() const { return base_number_; }
  const UserSet& members() const { return members_; }
  bool has_file(const FileId& file) const { return files_.contains(file); }
  std::vector<FileId> files() const;

  // Idempotent; returns true when the user was not a member before.
  bool add_member(const UserId& user);

  BaseVersion import_base(const FileId& file, std::span<const std::string> lines);
  EditOutcome apply_edit(const UserId& user, const FileId& file, const Edit& edit);
  CommitResult commit(const UserId& user);
  InterweaveGroup interweave_start(const UserSet& members);
  InterweaveGroup interweave_stop(const UserId& member);
  RollbackResult rollback(std::uint64_t version);
  void set_prefs(const ViewPrefs& prefs);

  std::vector<Conflict> conflicts(const std::optional<FileId>& file = std::nullopt) const;
  AnnotatedDocument render_view(const ViewPrefs& prefs, const FileId& file) const;
  AnnotatedDocument render_view(const UserId& observer, const FileId& file) const;
  Snapshot materialize(const UserSet& include, const MaterializePolicy& policy = FailOnConflict{}) const;

  ViewPrefs prefs(const UserId& observer) const;
  std::optional<InterweaveGroup> group_of(const UserId& user) const;
  const std::vector<UserSet>& groups() const { return groups_; }

  BaseVersion current_base() const;
  // Archived (superseded) base n, or the current base when n is current.
  std::optional<BaseVersion> base_version(std::uint64_t number) const;
  std::vector<std::uint64_t> versions() const;
  const std::map<std::uint64_t, BaseVersion>& archive() const { return archive_; }

  // Flattened relational view: one tuple per base or pending record, file then order.
  std::vector<LineRecord> records(const std::optional<FileId>& file = std::nullopt) const;

  // The text a user currently works on: base overlaid with that user's pending records.
  std::vector<std::string> user_text(const UserId& user, const FileId& file) const;

  // Line ids of the user's own version of the file, in order.
  std::vector<LineId> user_lines(const UserId& user, const FileId& file) const;

  bool operator==(const Project&) const = default;

  struct Pending {
    UserSet owners;
    Content content;
    bool operator==(const Pending&) const = default;
  };

  struct Slot {
    OrderKey order;
    std::optional<std::string> base;
    std::vector<Pending> pending;  // sorted by owners
    bool operator==(const Slot&) const = default;
  };

  struct FileState {
    std::map<LineId, Slot> slots;
    std::map<OrderKey, LineId> order;
    bool operator==(const FileState&) const = default;
  };

  // Raw state, for serialization.
  const std::map<FileId, FileState>& file_states() const { return files_; }
  const std::map<FileId, std::uint64_t>& line_counters() const { return next_line_; }
  const std::map<UserId, ViewPrefs>& all_prefs() const { return prefs_; }

 private:
  const FileState& file_state(const FileId& file) const;
  FileState& file_state(const FileId& file);
  void require_member(const UserId& user) const;
  UserSet writing_set(const UserId& user) const;
  std::optional<Conflict> conflict_at(const FileId& file, LineId line, const Slot& slot) const;
  // Removes users from every pending record of the slot; returns how many records vanished.
  static int detach(Slot& slot, const UserSet& users);
  static void drop_slot_if_empty(FileState& state, LineId line);
  LineId allocate_line(const FileId& file);

  std::string name_;
  std::uint64_t base_number_ = 0;
  UserSet members_;
  std::map<FileId, FileState> files_;
  std::map<FileId, std::uint64_t> next_line_;
  std::map<std::uint64_t, BaseVersion> archive_;
  std::optional<std::uint64_t> base_parent_;
  std::vector<UserSet> groups_;
  std::map<UserId, ViewPrefs> prefs_;
};

// Registry of projects by unique name.
class Registry {
 public:
  Project& create_project(const std::string& name);
  Project* find(const std::string& name);
  const Project* find(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Project> projects_;
};

}  // namespace ucm
