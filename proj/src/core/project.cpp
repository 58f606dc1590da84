#include "ucm/core/project.hpp"

#include <algorithm>

namespace ucm {
namespace {

Content base_content(const Project::Slot& slot) {
  return slot.base ? Content::text(*slot.base) : Content::tombstone();
}

const Project::Pending* record_of(const Project::Slot& slot, const UserId& user) {
  for (const auto& p : slot.pending)
    if (p.owners.contains(user)) return &p;
  return nullptr;
}

bool intersects(const UserSet& a, const UserSet& b) {
  return std::any_of(a.begin(), a.end(), [&](const UserId& u) { return b.contains(u); });
}

void sort_pending(std::vector<Project::Pending>& pending) {
  std::sort(pending.begin(), pending.end(),
            [](const Project::Pending& a, const Project::Pending& b) { return a.owners < b.owners; });
}

std::vector<Variant> variants_of(std::span<const Project::Pending* const> records) {
  std::vector<Variant> out;
  out.reserve(records.size());
  for (const auto* p : records) out.push_back(Variant{p->owners, p->content});
  std::sort(out.begin(), out.end(), [](const Variant& a, const Variant& b) { return a.owners < b.owners; });
  return out;
}

std::size_t distinct_contents(std::span<const Project::Pending* const> records) {
  std::vector<const Content*> seen;
  for (const auto* p : records)
    if (std::none_of(seen.begin(), seen.end(), [&](const Content* c) { return *c == p->content; }))
      seen.push_back(&p->content);
  return seen.size();
}

// Order of how much a display mode reveals; Interweave reveals like Full.
int visibility(ViewMode mode) {
  switch (mode) {
    case ViewMode::kHidden: return 0;
    case ViewMode::kConflictsOnly: return 1;
    case ViewMode::kLocationOnly: return 2;
    case ViewMode::kFull:
    case ViewMode::kInterweave: return 3;
  }
  return 0;
}

}  // namespace

Project::Project(std::string name) : name_(std::move(name)) {}

std::vector<FileId> Project::files() const {
  std::vector<FileId> out;
  for (const auto& [file, _] : files_) out.push_back(file);
  return out;
}

bool Project::add_member(const UserId& user) {
  if (!is_valid_user_name(user.str())) throw CmError(ErrorCode::kInvalid, "invalid user name '" + user.str() + "'");
  return members_.insert(user).second;
}

void Project::require_member(const UserId& user) const {
  if (!members_.contains(user)) throw CmError(ErrorCode::kNotMember, "'" + user.str() + "' is not a member");
}

const Project::FileState& Project::file_state(const FileId& file) const {
  auto it = files_.find(file);
  if (it == files_.end()) throw CmError(ErrorCode::kUnknownFile, "unknown file '" + file.str() + "'");
  return it->second;
}

Project::FileState& Project::file_state(const FileId& file) {
  return const_cast<FileState&>(std::as_const(*this).file_state(file));
}

LineId Project::allocate_line(const FileId& file) {
  auto& next = next_line_[file];
  if (next == 0) next = 1;
  return LineId(next++);
}

UserSet Project::writing_set(const UserId& user) const {
  for (const auto& group : groups_)
    if (group.contains(user)) return group;
  return UserSet{user};
}

std::optional<InterweaveGroup> Project::group_of(const UserId& user) const {
  for (const auto& group : groups_)
    if (group.contains(user)) return InterweaveGroup{group, true};
  return std::nullopt;
}

int Project::detach(Slot& slot, const UserSet& users) {
  int removed = 0;
  for (auto& p : slot.pending)
    for (const auto& u : users) p.owners.erase(u);
  auto empty = std::remove_if(slot.pending.begin(), slot.pending.end(),
                              [](const Pending& p) { return p.owners.empty(); });
  removed = static_cast<int>(slot.pending.end() - empty);
  slot.pending.erase(empty, slot.pending.end());
  sort_pending(slot.pending);
  return removed;
}

void Project::drop_slot_if_empty(FileState& state, LineId line) {
  auto it = state.slots.find(line);
  if (it == state.slots.end() || it->second.base || !it->second.pending.empty()) return;
  state.order.erase(it->second.order);
  state.slots.erase(it);
}

BaseVersion Project::import_base(const FileId& file, std::span<const std::string> lines) {
  if (!is_valid_file_name(file.str())) throw CmError(ErrorCode::kInvalid, "invalid file name '" + file.str() + "'");
  if (files_.contains(file)) throw CmError(ErrorCode::kFileExists, "file '" + file.str() + "' already exists");
  for (const auto& text : lines)
    if (!is_valid_line_text(text)) throw CmError(ErrorCode::kInvalid, "line text contains a line break");

  FileState state;
  std::optional<OrderKey> prev;
  for (const auto& text : lines) {
    const LineId id = allocate_line(file);
    OrderKey key = OrderKey::between(prev, std::nullopt);
    state.order.emplace(key, id);
    state.slots.emplace(id, Slot{key, text, {}});
    prev = std::move(key);
  }
  if (!next_line_.contains(file)) next_line_[file] = 1;
  files_.emplace(file, std::move(state));
  return current_base();
}

std::optional<Conflict> Project::conflict_at(const FileId& file, LineId line, const Slot& slot) const {
  if (slot.pending.size() < 2) return std::nullopt;
  std::vector<const Pending*> all;
  for (const auto& p : slot.pending) all.push_back(&p);
  if (distinct_contents(all) < 2) return std::nullopt;
  return Conflict{file, line, slot.base, variants_of(all)};
}

EditOutcome Project::apply_edit(const UserId& user, const FileId& file, const Edit& edit) {
  require_member(user);
  FileState& state = file_state(file);

  const auto lookup = [&](LineId line) -> Slot& {
    auto it = state.slots.find(line);
    if (it == state.slots.end()) {
      const auto next = next_line_.contains(file) ? next_line_.at(file) : 1;
      if (line.value() >= 1 && line.value() < next)
        throw CmError(ErrorCode::kLineDeleted, "line " + line.str() + " of '" + file.str() + "' was deleted");
      throw CmError(ErrorCode::kUnknownLine, "unknown line " + line.str() + " in '" + file.str() + "'");
    }
    if (const auto* own = record_of(it->second, user); own && own->content.is_tombstone())
      throw CmError(ErrorCode::kLineDeleted,
                    "line " + line.str() + " of '" + file.str() + "' is deleted in " + user.str() + "'s version");
    return it->second;
  };
  const auto check_text = [](const std::string& text) {
    if (!is_valid_line_text(text)) throw CmError(ErrorCode::kInvalid, "line text contains a line break");
  };

  const UserSet writers = writing_set(user);
  EditOutcome out;
  out.file = file;

  // Replace and Delete share the upsert-or-cancel path.
  const auto upsert = [&](LineId line, Content content) {
    Slot& slot = lookup(line);
    const bool had_conflict = conflict_at(file, line, slot).has_value();
    out.line = line;
    out.records_removed = detach(slot, writers);
    if (content != base_content(slot)) {
      slot.pending.push_back(Pending{writers, std::move(content)});
      sort_pending(slot.pending);
      out.records_added = 1;
    }
    out.conflict = conflict_at(file, line, slot);
    out.conflict_created = !had_conflict && out.conflict;
    out.conflict_removed = had_conflict && !out.conflict;
    drop_slot_if_empty(state, line);
  };

  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, Replace>) {
          check_text(e.text);
          upsert(e.line, Content::text(e.text));
        } else if constexpr (std::is_same_v<E, Delete>) {
          upsert(e.line, Content::tombstone());
        } else {
          check_text(e.text);
          std::optional<OrderKey> lo;
          if (e.anchor) lo = lookup(*e.anchor).order;
          auto next = lo ? state.order.upper_bound(*lo) : state.order.begin();
          std::optional<OrderKey> hi;
          if (next != state.order.end()) hi = next->first;
          OrderKey key = OrderKey::between(lo, hi);
          const LineId id = allocate_line(file);
          state.order.emplace(key, id);
          state.slots.emplace(id, Slot{std::move(key), std::nullopt, {Pending{writers, Content::text(e.text)}}});
          out.line = id;
          out.records_added = 1;
        }
      },
      edit);
  return out;
}

std::vector<Conflict> Project::conflicts(const std::optional<FileId>& file) const {
  std::vector<Conflict> out;
  const auto scan = [&](const FileId& id, const FileState& state) {
    for (const auto& [key, line] : state.order)
      if (auto c = conflict_at(id, line, state.slots.at(line))) out.push_back(std::move(*c));
  };
  if (file) {
    scan(*file, file_state(*file));
  } else {
    for (const auto& [id, state] : files_) scan(id, state);
  }
  return out;
}

CommitResult Project::commit(const UserId& user) {
  require_member(user);
  CommitResult result;
  BaseVersion before = current_base();

  for (auto& [file, state] : files_) {
    std::vector<LineId> emptied;
    for (const auto& [key, line] : state.order) {
      Slot& slot = state.slots.at(line);
      const Pending* own = record_of(slot, user);
      if (!own) continue;
      if (conflict_at(file, line, slot)) {
        result.skipped.emplace_back(file, line);
        continue;
      }
      const Content promoted = own->content;
      slot.base = promoted.raw();
      // The promoted record plus any record now equal to the new base.
      std::erase_if(slot.pending, [&](const Pending& p) { return p.content == promoted; });
      ++result.promoted;
      if (!slot.base && slot.pending.empty()) emptied.push_back(line);
    }
    for (LineId line : emptied) drop_slot_if_empty(state, line);
  }

  if (result.promoted > 0) {
    archive_[base_number_] = before;
    base_parent_ = base_number_;
    ++base_number_;
    result.archived = std::move(before);
  }
  result.number = base_number_;
  return result;
}

InterweaveGroup Project::interweave_start(const UserSet& members) {
  if (members.size() < 2) throw CmError(ErrorCode::kInvalid, "an interweave group needs at least two members");
  for (const auto& u : members) {
    require_member(u);
    if (group_of(u)) throw CmError(ErrorCode::kAlreadyGrouped, "'" + u.str() + "' is already interweaving");
  }
  for (const auto& [file, state] : files_) {
    for (const auto& [line, slot] : state.slots) {
      std::vector<const Pending*> mine;
      for (const auto& p : slot.pending)
        if (intersects(p.owners, members)) mine.push_back(&p);
      if (distinct_contents(mine) > 1)
        throw CmError(ErrorCode::kMembersConflict,
                      "members disagree on line " + line.str() + " of '" + file.str() + "'");
    }
  }
  for (auto& [file, state] : files_) {
    for (auto& [line, slot] : state.slots) {
      const Pending* any = nullptr;
      for (const auto& p : slot.pending)
        if (intersects(p.owners, members)) any = &p;
      if (!any) continue;
      Content content = any->content;
      detach(slot, members);
      slot.pending.push_back(Pending{members, std::move(content)});
      sort_pending(slot.pending);
    }
  }
  groups_.push_back(members);
  return InterweaveGroup{members, true};
}

InterweaveGroup Project::interweave_stop(const UserId& member) {
  auto it = std::find_if(groups_.begin(), groups_.end(), [&](const UserSet& g) { return g.contains(member); });
  if (it == groups_.end()) throw CmError(ErrorCode::kNotGrouped, "'" + member.str() + "' is not interweaving");
  InterweaveGroup out{*it, false};
  groups_.erase(it);
  return out;
}

RollbackResult Project::rollback(std::uint64_t version) {
  auto target = base_version(version);
  if (!target) throw CmError(ErrorCode::kVersionUnknown, "unknown base version " + std::to_string(version));

  BaseVersion before = current_base();
  archive_[base_number_] = before;

  std::map<FileId, FileState> restored;
  for (const auto& [file, lines] : target->files) {
    FileState state;
    auto& next = next_line_[file];
    for (const auto& bl : lines) {
      state.order.emplace(bl.order, bl.line);
      state.slots.emplace(bl.line, Slot{bl.order, bl.text, {}});
      next = std::max(next, bl.line.value() + 1);
    }
    restored.emplace(file, std::move(state));
  }
  files_ = std::move(restored);
  base_parent_ = version;
  ++base_number_;
  return RollbackResult{current_base(), std::move(before)};
}

void Project::set_prefs(const ViewPrefs& prefs) {
  require_member(prefs.observer);
  for (const auto& [user, mode] : prefs.modes) {
    if (user == prefs.observer) throw CmError(ErrorCode::kInvalid, "observer cannot set a mode for themselves");
    if (!is_valid_user_name(user.str())) throw CmError(ErrorCode::kInvalid, "invalid user name '" + user.str() + "'");
  }
  prefs_[prefs.observer] = prefs;
}

ViewPrefs Project::prefs(const UserId& observer) const {
  auto it = prefs_.find(observer);
  return it == prefs_.end() ? ViewPrefs{observer, {}} : it->second;
}

AnnotatedDocument Project::render_view(const UserId& observer, const FileId& file) const {
  return render_view(prefs(observer), file);
}

AnnotatedDocument Project::render_view(const ViewPrefs& prefs, const FileId& file) const {
  require_member(prefs.observer);
  const FileState& state = file_state(file);
  const UserId& me = prefs.observer;

  AnnotatedDocument doc{file, {}};
  for (const auto& [key, id] : state.order) {
    const Slot& slot = state.slots.at(id);
    const Pending* own = record_of(slot, me);

    std::vector<const Pending*> seen;  // others' records visible at some level
    std::vector<int> level;
    for (const auto& p : slot.pending) {
      if (&p == own) continue;
      int best = 0;
      for (const auto& u : p.owners) best = std::max(best, visibility(prefs.mode_for(u)));
      if (best == 0) continue;
      seen.push_back(&p);
      level.push_back(best);
    }
    const auto users_at = [&](int wanted) {
      UserSet users;
      for (std::size_t i = 0; i < seen.size(); ++i) {
        if (level[i] != wanted) continue;
        for (const auto& u : seen[i]->owners)
          if (visibility(prefs.mode_for(u)) == wanted) users.insert(u);
      }
      return users;
    };

    AnnotatedLine line{id, {}, LineStatus::kUnchanged, {}, {}};
    if (own) {
      std::vector<const Pending*> differing;
      for (const auto* p : seen)
        if (p->content != own->content) differing.push_back(p);
      if (!differing.empty()) {
        line.status = LineStatus::kConflict;
        if (!own->content.is_tombstone()) {
          line.text = own->content.text();
        } else if (slot.base) {
          line.text = *slot.base;
        } else {
          line.text = differing.front()->content.text();
        }
        std::vector<const Pending*> all{own};
        all.insert(all.end(), seen.begin(), seen.end());
        line.variants = variants_of(all);
      } else if (own->content.is_tombstone()) {
        continue;
      } else {
        line.status = LineStatus::kOwn;
        line.text = own->content.text();
      }
    } else {
      std::vector<const Pending*> full;
      bool location = false;
      for (std::size_t i = 0; i < seen.size(); ++i) {
        if (level[i] == 3) full.push_back(seen[i]);
        if (level[i] == 2) location = true;
      }
      if (!full.empty() && distinct_contents(full) == 1) {
        if (full.front()->content.is_tombstone()) continue;
        line.status = LineStatus::kOther;
        line.text = full.front()->content.text();
        line.users = users_at(3);
      } else if (!full.empty()) {
        // Collaborators shown in full disagree among themselves.
        line.status = LineStatus::kConflict;
        line.text = slot.base ? *slot.base : full.front()->content.text();
        line.variants = variants_of(full);
      } else if (location) {
        line.status = LineStatus::kLocationMarker;
        line.text = slot.base.value_or("");
        line.users = users_at(2);
      } else if (slot.base) {
        line.text = *slot.base;
      } else {
        continue;
      }
    }
    doc.lines.push_back(std::move(line));
  }
  return doc;
}

Snapshot Project::materialize(const UserSet& include, const MaterializePolicy& policy) const {
  for (const auto& u : include) require_member(u);
  const UserId* winner = nullptr;
  if (const auto* wins = std::get_if<ObserverWins>(&policy)) {
    if (!include.contains(wins->observer))
      throw CmError(ErrorCode::kInvalid, "winning observer must be among the included users");
    winner = &wins->observer;
  }

  Snapshot snap;
  std::vector<Conflict> conflicts;
  for (const auto& [file, state] : files_) {
    auto& out = snap.files[file];
    for (const auto& [key, id] : state.order) {
      const Slot& slot = state.slots.at(id);
      const Pending* first = nullptr;
      bool disagree = false;
      for (const auto& p : slot.pending) {
        if (!intersects(p.owners, include)) continue;
        if (first && first->content != p.content) disagree = true;
        if (!first) first = &p;
      }

      const std::optional<std::string>* text = &slot.base;
      if (disagree) {
        if (!winner) {
          std::vector<const Pending*> included;
          for (const auto& p : slot.pending)
            if (intersects(p.owners, include)) included.push_back(&p);
          conflicts.push_back(Conflict{file, id, slot.base, variants_of(included)});
          continue;
        }
        if (const auto* mine = record_of(slot, *winner)) text = &mine->content.raw();
      } else if (first) {
        text = &first->content.raw();
      }
      if (*text) out.push_back(**text);
    }
  }
  if (!conflicts.empty()) throw ConflictError(std::move(conflicts));
  return snap;
}

BaseVersion Project::current_base() const {
  BaseVersion base{base_number_, base_parent_, {}};
  for (const auto& [file, state] : files_) {
    auto& lines = base.files[file];
    for (const auto& [key, id] : state.order) {
      const Slot& slot = state.slots.at(id);
      if (slot.base) lines.push_back(BaseLine{id, key, *slot.base});
    }
  }
  return base;
}

std::optional<BaseVersion> Project::base_version(std::uint64_t number) const {
  if (number == base_number_) return current_base();
  auto it = archive_.find(number);
  if (it == archive_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint64_t> Project::versions() const {
  std::vector<std::uint64_t> out;
  for (const auto& [n, _] : archive_) out.push_back(n);
  out.push_back(base_number_);
  return out;
}

std::vector<LineRecord> Project::records(const std::optional<FileId>& file) const {
  std::vector<LineRecord> out;
  const auto scan = [&](const FileId& id, const FileState& state) {
    for (const auto& [key, line] : state.order) {
      const Slot& slot = state.slots.at(line);
      if (slot.base) out.push_back(LineRecord{id, line, key, Content::text(*slot.base), Owner::base()});
      for (const auto& p : slot.pending) out.push_back(LineRecord{id, line, key, p.content, Owner::users(p.owners)});
    }
  };
  if (file) {
    scan(*file, file_state(*file));
  } else {
    for (const auto& [id, state] : files_) scan(id, state);
  }
  return out;
}

std::vector<std::string> Project::user_text(const UserId& user, const FileId& file) const {
  std::vector<std::string> out;
  const FileState& state = file_state(file);
  for (const auto& [key, id] : state.order) {
    const Slot& slot = state.slots.at(id);
    const auto* own = record_of(slot, user);
    const Content content = own ? own->content : base_content(slot);
    if (!content.is_tombstone()) out.push_back(content.text());
  }
  return out;
}

std::vector<LineId> Project::user_lines(const UserId& user, const FileId& file) const {
  std::vector<LineId> out;
  const FileState& state = file_state(file);
  for (const auto& [key, id] : state.order) {
    const Slot& slot = state.slots.at(id);
    const auto* own = record_of(slot, user);
    if (own ? !own->content.is_tombstone() : slot.base.has_value()) out.push_back(id);
  }
  return out;
}

Project& Registry::create_project(const std::string& name) {
  if (name.empty() || !is_valid_file_name(name) || name.find('/') != std::string::npos)
    throw CmError(ErrorCode::kInvalid, "invalid project name '" + name + "'");
  auto [it, inserted] = projects_.try_emplace(name, name);
  if (!inserted) throw CmError(ErrorCode::kDuplicateName, "project '" + name + "' already exists");
  return it->second;
}

Project* Registry::find(const std::string& name) {
  auto it = projects_.find(name);
  return it == projects_.end() ? nullptr : &it->second;
}

const Project* Registry::find(const std::string& name) const {
  auto it = projects_.find(name);
  return it == projects_.end() ? nullptr : &it->second;
}

std::vector<std::string> Registry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : projects_) out.push_back(name);
  return out;
}

}  // namespace ucm
