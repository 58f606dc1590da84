#pragma once

// Reference model for the CM state machine. It never looks at pending records:
// every user owns a full copy of every file, the base is a separate copy, and all
// questions are answered by per-line three-way comparison keyed by LineId.
// Line ids and order keys are allocated by the implementation and fed in here.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ucm/core/project.hpp"

namespace oracle {

using ucm::FileId;
using ucm::LineId;
using ucm::OrderKey;
using ucm::UserId;
using ucm::UserSet;

using Text = std::optional<std::string>;  // nullopt: the line is absent from this copy
using Doc = std::map<LineId, std::string>;
using Files = std::map<FileId, Doc>;

// user -> version of one line, only for users whose version differs from the base
using Changes = std::map<UserId, Text>;

struct OracleCommit {
  std::uint64_t number = 0;
  std::size_t promoted = 0;
  std::vector<std::pair<FileId, LineId>> skipped;
  bool operator==(const OracleCommit&) const = default;
};

enum class Verdict { kOk, kUnknownLine, kLineDeleted };

class NaiveModel {
 public:
  void add_user(const UserId& u) {
    if (docs_.contains(u)) return;
    docs_[u] = base_;
  }

  void import(const FileId& file, const std::vector<std::pair<LineId, OrderKey>>& lines,
              const std::vector<std::string>& text) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      keys_[file][lines[i].first] = lines[i].second;
      base_[file][lines[i].first] = text[i];
    }
    base_.try_emplace(file);
    for (auto& [u, files] : docs_) files[file] = base_[file];
  }

  Verdict check_line(const UserId& u, const FileId& file, LineId line) const {
    if (!keys_.contains(file) || !keys_.at(file).contains(line)) return Verdict::kUnknownLine;
    bool live = base_.at(file).contains(line);
    for (const auto& [_, files] : docs_) live = live || (files.contains(file) && files.at(file).contains(line));
    if (!live) return Verdict::kLineDeleted;
    if (base_.at(file).contains(line) && !docs_.at(u).at(file).contains(line)) return Verdict::kLineDeleted;
    return Verdict::kOk;
  }

  void replace(const UserId& u, const FileId& file, LineId line, const std::string& text) {
    for (const auto& w : circle(u)) docs_[w][file][line] = text;
  }

  void remove(const UserId& u, const FileId& file, LineId line) {
    for (const auto& w : circle(u)) docs_[w][file].erase(line);
  }

  void insert(const UserId& u, const FileId& file, LineId line, const OrderKey& key, const std::string& text) {
    keys_[file][line] = key;
    for (const auto& w : circle(u)) docs_[w][file][line] = text;
  }

  Text base_version(const FileId& file, LineId line) const {
    const auto& doc = base_.at(file);
    auto it = doc.find(line);
    return it == doc.end() ? Text{} : Text{it->second};
  }

  Text version(const UserId& u, const FileId& file, LineId line) const {
    const auto& doc = docs_.at(u).at(file);
    auto it = doc.find(line);
    return it == doc.end() ? Text{} : Text{it->second};
  }

  Changes changes(const FileId& file, LineId line, const std::optional<UserSet>& among = std::nullopt) const {
    Changes out;
    const Text b = base_version(file, line);
    for (const auto& [u, _] : docs_) {
      if (among && !among->contains(u)) continue;
      const Text v = version(u, file, line);
      if (v != b) out[u] = v;
    }
    return out;
  }

  static std::size_t distinct(const Changes& c) {
    std::set<Text> values;
    for (const auto& [_, v] : c) values.insert(v);
    return values.size();
  }

  // Conflicting lines, each with the per-user versions that differ from the base.
  std::vector<std::tuple<FileId, LineId, Changes>> conflicts() const {
    std::vector<std::tuple<FileId, LineId, Changes>> out;
    for (const auto& [file, lines] : keys_) {
      if (!base_.contains(file)) continue;
      for (LineId line : ordered(file)) {
        auto c = changes(file, line);
        if (distinct(c) > 1) out.emplace_back(file, line, std::move(c));
      }
    }
    return out;
  }

  // Every line of every file with the base version and each user's version.
  struct Row {
    FileId file;
    LineId line;
    Text base;
    std::vector<std::pair<UserId, Text>> users;
  };

  std::vector<Row> rows() const {
    std::vector<Row> out;
    for (const auto& [file, doc] : base_)
      for (LineId line : ordered(file)) {
        Row row{file, line, base_version(file, line), {}};
        for (const auto& [u, _] : docs_) row.users.emplace_back(u, version(u, file, line));
        out.push_back(std::move(row));
      }
    return out;
  }

  // Snapshot, or the conflicting lines when included users disagree.
  static std::pair<std::optional<ucm::Snapshot>, std::vector<std::pair<FileId, LineId>>> materialize(
      const std::vector<Row>& rows, const UserSet& include, const std::optional<UserId>& winner = std::nullopt) {
    ucm::Snapshot snap;
    std::vector<std::pair<FileId, LineId>> bad;
    // Every row lists the users in the same order.
    std::vector<char> in;
    std::ptrdiff_t winner_at = -1;
    if (!rows.empty())
      for (const auto& [u, _] : rows.front().users) {
        if (winner && u == *winner) winner_at = static_cast<std::ptrdiff_t>(in.size());
        in.push_back(include.contains(u));
      }
    for (const auto& row : rows) {
      auto& out = snap.files[row.file];
      const Text* changed = nullptr;
      bool disagree = false;
      const Text* win = &row.base;
      for (std::size_t i = 0; i < row.users.size(); ++i) {
        if (!in[i]) continue;
        const Text& v = row.users[i].second;
        if (static_cast<std::ptrdiff_t>(i) == winner_at) win = &v;
        if (v == row.base) continue;
        if (changed && *changed != v) disagree = true;
        changed = &v;
      }
      const Text* pick = &row.base;
      if (disagree) {
        if (!winner) {
          bad.emplace_back(row.file, row.line);
          continue;
        }
        pick = win;
      } else if (changed) {
        pick = changed;
      }
      if (*pick) out.push_back(**pick);
    }
    if (!bad.empty()) return {std::nullopt, bad};
    return {snap, bad};
  }

  std::pair<std::optional<ucm::Snapshot>, std::vector<std::pair<FileId, LineId>>> materialize(
      const UserSet& include, const std::optional<UserId>& winner = std::nullopt) const {
    return materialize(rows(), include, winner);
  }

  OracleCommit commit(const UserId& u) {
    OracleCommit result;
    const Files old_base = base_;
    std::vector<std::pair<FileId, LineId>> promoted;
    for (const auto& [file, _] : base_) {
      for (LineId line : ordered(file)) {
        const Text mine = version(u, file, line);
        if (mine == base_version(file, line)) continue;
        if (distinct(changes(file, line)) > 1) {
          result.skipped.emplace_back(file, line);
          continue;
        }
        promoted.emplace_back(file, line);
      }
    }
    for (const auto& [file, line] : promoted) {
      const Text mine = version(u, file, line);
      const Text old = base_version(file, line);
      if (mine) {
        base_[file][line] = *mine;
      } else {
        base_[file].erase(line);
      }
      // Everyone still on the old base text follows the new base.
      for (auto& [w, files] : docs_) {
        if (version(w, file, line) != old) continue;
        if (mine) {
          files[file][line] = *mine;
        } else {
          files[file].erase(line);
        }
      }
    }
    result.promoted = promoted.size();
    if (!promoted.empty()) {
      archive_[number_] = old_base;
      ++number_;
    }
    result.number = number_;
    return result;
  }

  // Returns false (leaving state alone) when members disagree on some line.
  bool interweave_start(const UserSet& members) {
    for (const auto& [file, _] : base_)
      for (LineId line : ordered(file))
        if (distinct(changes(file, line, members)) > 1) return false;
    for (const auto& [file, _] : base_) {
      for (LineId line : ordered(file)) {
        const auto c = changes(file, line, members);
        if (c.empty()) continue;
        for (const auto& m : members) {
          if (c.begin()->second) {
            docs_[m][file][line] = *c.begin()->second;
          } else {
            docs_[m][file].erase(line);
          }
        }
      }
    }
    groups_.push_back(members);
    return true;
  }

  bool grouped(const UserId& u) const {
    return std::any_of(groups_.begin(), groups_.end(), [&](const UserSet& g) { return g.contains(u); });
  }

  void interweave_stop(const UserId& u) {
    std::erase_if(groups_, [&](const UserSet& g) { return g.contains(u); });
  }

  bool rollback(std::uint64_t n) {
    Files target;
    if (n == number_) {
      target = base_;
    } else if (archive_.contains(n)) {
      target = archive_.at(n);
    } else {
      return false;
    }
    archive_[number_] = base_;
    base_ = target;
    for (auto& [u, files] : docs_) files = base_;
    ++number_;
    return true;
  }

  std::vector<UserId> users() const {
    std::vector<UserId> out;
    for (const auto& [u, _] : docs_) out.push_back(u);
    return out;
  }

  std::uint64_t number() const { return number_; }
  const Files& base() const { return base_; }
  const std::vector<UserSet>& groups() const { return groups_; }

  ucm::Snapshot archived(std::uint64_t n) const {
    ucm::Snapshot snap;
    const Files& files = n == number_ ? base_ : archive_.at(n);
    for (const auto& [file, doc] : files) {
      auto& out = snap.files[file];
      for (LineId line : ordered(file))
        if (doc.contains(line)) out.push_back(doc.at(line));
    }
    return snap;
  }

  std::vector<LineId> ordered(const FileId& file) const {
    std::vector<std::pair<OrderKey, LineId>> tmp;
    for (const auto& [line, key] : keys_.at(file)) tmp.emplace_back(key, line);
    std::sort(tmp.begin(), tmp.end());
    std::vector<LineId> out;
    for (const auto& [_, line] : tmp) out.push_back(line);
    return out;
  }

  // Lines present in the user's own copy, in order.
  std::vector<LineId> user_lines(const UserId& u, const FileId& file) const {
    std::vector<LineId> out;
    for (LineId line : ordered(file))
      if (docs_.at(u).at(file).contains(line)) out.push_back(line);
    return out;
  }

  // Every line some copy still holds.
  std::vector<LineId> live_lines(const FileId& file) const {
    std::vector<LineId> out;
    for (LineId line : ordered(file)) {
      bool live = base_.at(file).contains(line);
      for (const auto& [_, files] : docs_) live = live || files.at(file).contains(line);
      if (live) out.push_back(line);
    }
    return out;
  }

 private:
  UserSet circle(const UserId& u) const {
    for (const auto& g : groups_)
      if (g.contains(u)) return g;
    return UserSet{u};
  }

  Files base_;
  std::map<UserId, Files> docs_;
  std::map<FileId, std::map<LineId, OrderKey>> keys_;
  std::map<std::uint64_t, Files> archive_;
  std::vector<UserSet> groups_;
  std::uint64_t number_ = 0;
};

}  // namespace oracle
