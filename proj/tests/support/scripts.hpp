#pragma once

// Random command scripts and the oracle-equivalence checker shared by the
// property tests and the acceptance suite.

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "naive_oracle.hpp"
#include "ucm/core/codec.hpp"
#include "ucm/core/command.hpp"

namespace scripts {

using ucm::Command;
using ucm::FileId;
using ucm::LineId;
using ucm::UserId;
using ucm::UserSet;

struct Params {
  int max_users = 4;
  int max_lines = 50;
  int ops = 200;
};

struct Script {
  std::uint64_t seed = 0;
  std::vector<UserId> users;
  std::vector<Command> commands;
};

inline std::string describe(const Command& c) { return ucm::command_to_json(c).dump(); }

// Commands are chosen against a scratch project so most of them are valid, with
// a steady trickle of edits on deleted or unknown lines.
inline Script generate(std::uint64_t seed, const Params& params = {}) {
  std::mt19937_64 rng(seed);
  const auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const auto chance = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };

  Script s;
  s.seed = seed;
  const int n_users = 2 + static_cast<int>(pick(static_cast<std::size_t>(params.max_users - 1)));
  const char* names[] = {"ann", "bob", "cid", "dee"};
  for (int i = 0; i < n_users; ++i) s.users.emplace_back(names[i]);

  ucm::Project scratch("scratch");
  const auto push = [&](Command c) {
    try {
      ucm::execute(scratch, c);
    } catch (const ucm::CmError&) {
    }
    s.commands.push_back(std::move(c));
  };

  for (const auto& u : s.users) push(ucm::cmd::Join{u});

  const std::vector<std::string> pool{"alpha", "beta", "gamma", "delta", "", "  x := 1"};
  const auto fresh_text = [&] { return pool[pick(pool.size())]; };

  const auto make_file = [&](const std::string& name, std::size_t n) {
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < n; ++i) lines.push_back("line " + std::to_string(i + 1));
    push(ucm::cmd::Import{s.users[0], FileId(name), lines});
  };
  const auto cap = static_cast<std::size_t>(std::max(params.max_lines, 2));
  const std::size_t first = 1 + pick(std::min<std::size_t>(22, cap / 2));
  make_file("a.txt", first);
  if (chance(0.5)) make_file("b.txt", 1 + pick(std::max<std::size_t>(1, (cap - first) / 2)));

  const auto live_count = [&] {
    std::size_t n = 0;
    for (const auto& f : scratch.files()) {
      std::set<LineId> ids;
      for (const auto& r : scratch.records(f)) ids.insert(r.line);
      n += ids.size();
    }
    return n;
  };

  for (int step = 0; step < params.ops; ++step) {
    const UserId u = s.users[pick(s.users.size())];
    const auto files = scratch.files();
    if (files.empty()) {
      make_file("a.txt", 1 + pick(10));
      continue;
    }
    const FileId file = files[pick(files.size())];
    const auto mine = scratch.user_lines(u, file);
    std::vector<LineId> live;
    for (const auto& r : scratch.records(file))
      if (live.empty() || live.back() != r.line) live.push_back(r.line);

    const double r = std::uniform_real_distribution<double>(0, 1)(rng);
    if (r < 0.30 && !mine.empty()) {
      const LineId line = mine[pick(mine.size())];
      std::string text = fresh_text();
      if (chance(0.15)) {
        // Back to the base text, or onto another user's text.
        const auto base = scratch.current_base();
        for (const auto& bl : base.files.at(file))
          if (bl.line == line) text = bl.text;
      } else if (chance(0.2)) {
        const UserId other = s.users[pick(s.users.size())];
        const auto theirs = scratch.user_lines(other, file);
        const auto text_of = scratch.user_text(other, file);
        for (std::size_t i = 0; i < theirs.size(); ++i)
          if (theirs[i] == line) text = text_of[i];
      }
      push(ucm::cmd::EditLine{u, file, ucm::Replace{line, text}});
    } else if (r < 0.38 && !live.empty()) {
      push(ucm::cmd::EditLine{u, file, ucm::Replace{live[pick(live.size())], fresh_text()}});
    } else if (r < 0.52) {
      if (live_count() >= static_cast<std::size_t>(params.max_lines)) continue;
      std::optional<LineId> anchor;
      if (!mine.empty() && !chance(0.1)) anchor = mine[pick(mine.size())];
      push(ucm::cmd::EditLine{u, file, ucm::InsertAfter{anchor, fresh_text()}});
    } else if (r < 0.62 && !mine.empty()) {
      push(ucm::cmd::EditLine{u, file, ucm::Delete{mine[pick(mine.size())]}});
    } else if (r < 0.65) {
      const auto next = scratch.line_counters().contains(file) ? scratch.line_counters().at(file) : 1;
      push(ucm::cmd::EditLine{u, file, ucm::Replace{LineId(1 + pick(next + 2)), fresh_text()}});
    } else if (r < 0.79) {
      push(ucm::cmd::Commit{u});
    } else if (r < 0.85) {
      UserSet members{u};
      for (const auto& v : s.users)
        if (chance(0.5)) members.insert(v);
      for (const auto& v : s.users)
        if (members.size() < 2 && v != u) members.insert(v);
      push(ucm::cmd::InterweaveStart{u, members});
    } else if (r < 0.89) {
      push(ucm::cmd::InterweaveStop{u});
    } else if (r < 0.91) {
      push(ucm::cmd::Rollback{u, pick(scratch.base_number() + 2)});
    } else if (r < 0.94) {
      ucm::ViewPrefs prefs{u, {}};
      const ucm::ViewMode modes[] = {ucm::ViewMode::kFull, ucm::ViewMode::kLocationOnly,
                                     ucm::ViewMode::kConflictsOnly, ucm::ViewMode::kHidden,
                                     ucm::ViewMode::kInterweave};
      for (const auto& v : s.users)
        if (v != u) prefs.modes[v] = modes[pick(5)];
      push(ucm::cmd::SetPrefs{prefs});
    } else if (r < 0.95 && files.size() < 2) {
      make_file(file.str() == "a.txt" ? "b.txt" : "a.txt", 1 + pick(8));
    } else if (!mine.empty()) {
      push(ucm::cmd::EditLine{u, file, ucm::Replace{mine[pick(mine.size())], fresh_text()}});
    }
  }
  return s;
}

// Every subset of the given users, including the empty one.
inline std::vector<UserSet> subsets(const std::vector<UserId>& users) {
  std::vector<UserSet> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << users.size()); ++mask) {
    UserSet set;
    for (std::size_t i = 0; i < users.size(); ++i)
      if (mask & (std::size_t{1} << i)) set.insert(users[i]);
    out.push_back(std::move(set));
  }
  return out;
}

struct CheckOptions {
  bool every_subset_each_step = true;
  bool observer_wins = true;
};

class Checker {
 public:
  explicit Checker(const Script& script, CheckOptions options = {})
      : script_(script), options_(options), project_("oracle") {}

  // Empty on success, otherwise the first mismatch.
  std::optional<std::string> run() {
    for (std::size_t i = 0; i < script_.commands.size(); ++i) {
      step_ = i;
      if (auto err = apply(script_.commands[i])) return fail(*err);
      if (auto err = compare_conflicts()) return fail(*err);
      if (options_.every_subset_each_step || i + 1 == script_.commands.size())
        if (auto err = compare_materializations()) return fail(*err);
    }
    return std::nullopt;
  }

  const ucm::Project& project() const { return project_; }
  const oracle::NaiveModel& model() const { return model_; }

 private:
  std::string fail(const std::string& what) const {
    std::ostringstream out;
    out << "seed " << script_.seed << " step " << step_ << " " << describe(script_.commands[step_]) << ": "
        << what;
    return out.str();
  }

  static std::string code_name(const std::optional<ucm::ErrorCode>& code) {
    return code ? std::string(ucm::to_string(*code)) : std::string("ok");
  }

  std::optional<std::string> expect_code(const std::optional<ucm::ErrorCode>& want,
                                         const std::optional<ucm::ErrorCode>& got) const {
    if (want == got) return std::nullopt;
    return "expected " + code_name(want) + ", core said " + code_name(got);
  }

  std::optional<std::string> apply(const Command& command) {
    std::optional<ucm::ErrorCode> got;
    ucm::CommandResult result;
    ucm::Project before = project_;
    try {
      result = ucm::execute(project_, command);
    } catch (const ucm::CmError& e) {
      got = e.code();
      if (!(project_ == before)) return "rejected command changed the state";
    }

    return std::visit(
        [&](const auto& c) -> std::optional<std::string> {
          using C = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<C, ucm::cmd::Join>) {
            model_.add_user(c.user);
            return expect_code(std::nullopt, got);
          } else if constexpr (std::is_same_v<C, ucm::cmd::Import>) {
            const bool exists = model_.base().contains(c.file);
            if (auto e = expect_code(exists ? std::optional(ucm::ErrorCode::kFileExists) : std::nullopt, got))
              return e;
            if (exists) return std::nullopt;
            const auto& base = std::get<ucm::BaseVersion>(result);
            std::vector<std::pair<LineId, ucm::OrderKey>> ids;
            for (const auto& bl : base.files.at(c.file)) ids.emplace_back(bl.line, bl.order);
            model_.import(c.file, ids, c.lines);
            return std::nullopt;
          } else if constexpr (std::is_same_v<C, ucm::cmd::EditLine>) {
            return apply_edit(c, got, result);
          } else if constexpr (std::is_same_v<C, ucm::cmd::Commit>) {
            if (auto e = expect_code(std::nullopt, got)) return e;
            const auto want = model_.commit(c.user);
            const auto& have = std::get<ucm::CommitResult>(result);
            if (want.number != have.number || want.promoted != have.promoted || want.skipped != have.skipped) {
              std::ostringstream out;
              out << "commit outcome differs: oracle number=" << want.number << " promoted=" << want.promoted
                  << " skipped=" << want.skipped.size() << ", core number=" << have.number
                  << " promoted=" << have.promoted << " skipped=" << have.skipped.size();
              return out.str();
            }
            if (auto e = compare_base()) return e;
            // Immediately committing again changes nothing.
            ucm::Project again = project_;
            const auto second = again.commit(c.user);
            if (second.promoted != 0 || second.number != have.number) return "second commit was not a no-op";
            return std::nullopt;
          } else if constexpr (std::is_same_v<C, ucm::cmd::SetPrefs>) {
            return expect_code(std::nullopt, got);
          } else if constexpr (std::is_same_v<C, ucm::cmd::InterweaveStart>) {
            std::optional<ucm::ErrorCode> want;
            for (const auto& m : c.members)
              if (model_.grouped(m)) want = ucm::ErrorCode::kAlreadyGrouped;
            if (!want) {
              oracle::NaiveModel trial = model_;
              if (!trial.interweave_start(c.members)) {
                want = ucm::ErrorCode::kMembersConflict;
              } else {
                model_ = std::move(trial);
              }
            }
            return expect_code(want, got);
          } else if constexpr (std::is_same_v<C, ucm::cmd::InterweaveStop>) {
            const bool grouped = model_.grouped(c.user);
            model_.interweave_stop(c.user);
            return expect_code(grouped ? std::nullopt : std::optional(ucm::ErrorCode::kNotGrouped), got);
          } else {
            const bool ok = model_.rollback(c.version);
            if (auto e = expect_code(ok ? std::nullopt : std::optional(ucm::ErrorCode::kVersionUnknown), got))
              return e;
            if (ok) return compare_base();
            return std::nullopt;
          }
        },
        command);
  }

  std::optional<std::string> apply_edit(const ucm::cmd::EditLine& c, const std::optional<ucm::ErrorCode>& got,
                                        const ucm::CommandResult& result) {
    if (!model_.base().contains(c.file)) return expect_code(ucm::ErrorCode::kUnknownFile, got);
    const auto verdict_code = [&](LineId line) -> std::optional<ucm::ErrorCode> {
      switch (model_.check_line(c.user, c.file, line)) {
        case oracle::Verdict::kUnknownLine:
          return ucm::ErrorCode::kUnknownLine;
        case oracle::Verdict::kLineDeleted:
          return ucm::ErrorCode::kLineDeleted;
        default:
          return std::nullopt;
      }
    };
    return std::visit(
        [&](const auto& e) -> std::optional<std::string> {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, ucm::Replace>) {
            const auto want = verdict_code(e.line);
            if (auto err = expect_code(want, got)) return err;
            if (!want) model_.replace(c.user, c.file, e.line, e.text);
          } else if constexpr (std::is_same_v<E, ucm::Delete>) {
            const auto want = verdict_code(e.line);
            if (auto err = expect_code(want, got)) return err;
            if (!want) model_.remove(c.user, c.file, e.line);
          } else {
            const auto want = e.anchor ? verdict_code(*e.anchor) : std::nullopt;
            if (auto err = expect_code(want, got)) return err;
            if (want) return std::nullopt;
            const LineId id = std::get<ucm::EditOutcome>(result).line;
            std::optional<ucm::OrderKey> key;
            for (const auto& r : project_.records(c.file))
              if (r.line == id) key = r.order;
            if (!key) return "inserted line has no record";
            const auto before = model_.user_lines(c.user, c.file);
            model_.insert(c.user, c.file, id, *key, e.text);
            const auto after = model_.user_lines(c.user, c.file);
            // The new line sits right below its anchor in the author's version.
            const auto at = std::find(after.begin(), after.end(), id) - after.begin();
            const auto anchor_at =
                e.anchor ? std::find(before.begin(), before.end(), *e.anchor) - before.begin() : -1;
            if (at != anchor_at + 1) return "inserted line is not directly below its anchor";
          }
          return std::nullopt;
        },
        c.edit);
  }

  std::optional<std::string> compare_base() const {
    const auto want = model_.archived(model_.number());
    const auto have = project_.materialize({});
    if (want.files != have.files) return "base content differs";
    if (project_.base_number() != model_.number()) return "base number differs";
    return std::nullopt;
  }

  std::optional<std::string> compare_conflicts() const {
    const auto want = model_.conflicts();
    const auto have = project_.conflicts();
    if (want.size() != have.size())
      return "conflict count: oracle " + std::to_string(want.size()) + ", core " + std::to_string(have.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      const auto& [file, line, changes] = want[i];
      const auto& c = have[i];
      if (c.file != file || c.line != line) return "conflict at a different line";
      if (c.base != model_.base_version(file, line)) return "conflict base differs";
      oracle::Changes flat;
      for (const auto& v : c.variants)
        for (const auto& o : v.owners) {
          if (flat.contains(o)) return "user " + o.str() + " appears in two variants";
          flat[o] = v.content.raw();
        }
      if (flat != changes) return "conflict variants differ on line " + line.str();
    }
    return std::nullopt;
  }

  std::optional<std::string> compare_materialization(const std::vector<oracle::NaiveModel::Row>& rows,
                                                     const UserSet& include,
                                                     const std::optional<UserId>& winner) const {
    const auto [want, bad] = oracle::NaiveModel::materialize(rows, include, winner);
    try {
      const auto have = winner ? project_.materialize(include, ucm::ObserverWins{*winner})
                               : project_.materialize(include);
      if (!want) return "core materialized {" + ucm::join_users(include) + "} despite a conflict";
      if (have.files != want->files) return "materialization of {" + ucm::join_users(include) + "} differs";
    } catch (const ucm::ConflictError& e) {
      if (want) return "core reported a conflict for {" + ucm::join_users(include) + "}";
      std::vector<std::pair<FileId, LineId>> lines;
      for (const auto& c : e.conflicts()) lines.emplace_back(c.file, c.line);
      if (lines != bad) return "conflict lines for {" + ucm::join_users(include) + "} differ";
    }
    return std::nullopt;
  }

  std::optional<std::string> compare_materializations() const {
    const auto rows = model_.rows();
    for (const auto& include : subsets(model_.users())) {
      if (auto e = compare_materialization(rows, include, std::nullopt)) return e;
      if (!options_.observer_wins) continue;
      for (const auto& w : include)
        if (auto e = compare_materialization(rows, include, w)) return e;
    }
    return std::nullopt;
  }

  const Script& script_;
  CheckOptions options_;
  ucm::Project project_;
  oracle::NaiveModel model_;
  std::size_t step_ = 0;
};

inline std::optional<std::string> check(const Script& script, CheckOptions options = {}) {
  return Checker(script, options).run();
}

}  // namespace scripts
