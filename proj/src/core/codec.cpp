#include "ucm/core/codec.hpp"

#include "ucm/core/errors.hpp"

namespace ucm {

using nlohmann::json;

const json& require_field(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) throw CmError(ErrorCode::kInvalid, std::string("missing field '") + field + "'");
  return j.at(field);
}

std::string require_string(const json& j, const char* field) {
  const json& v = require_field(j, field);
  if (!v.is_string()) throw CmError(ErrorCode::kInvalid, std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

void to_json(json& j, const UserId& u) { j = u.str(); }
void from_json(const json& j, UserId& u) { u = UserId(j.get<std::string>()); }
void to_json(json& j, const FileId& f) { j = f.str(); }
void from_json(const json& j, FileId& f) { f = FileId(j.get<std::string>()); }
void to_json(json& j, const LineId& l) { j = l.str(); }

void from_json(const json& j, LineId& l) {
  auto parsed = j.is_string() ? LineId::parse(j.get<std::string>()) : std::nullopt;
  if (!parsed) throw CmError(ErrorCode::kUnknownLine, "malformed line id " + j.dump());
  l = *parsed;
}

void to_json(json& j, const OrderKey& k) { j = k.digits(); }
void from_json(const json& j, OrderKey& k) { k = OrderKey(j.get<std::vector<std::uint32_t>>()); }

void to_json(json& j, const Content& c) {
  if (c.is_tombstone()) {
    j = nullptr;
  } else {
    j = c.text();
  }
}

void from_json(const json& j, Content& c) {
  c = j.is_null() ? Content::tombstone() : Content::text(j.get<std::string>());
}

void to_json(json& j, const Variant& v) { j = json{{"owners", v.owners}, {"text", v.content}}; }

void from_json(const json& j, Variant& v) {
  v.owners = j.at("owners").get<UserSet>();
  v.content = j.at("text").get<Content>();
}

void to_json(json& j, const Conflict& c) {
  j = json{{"file", c.file}, {"line", c.line}, {"variants", c.variants}};
  j["base"] = c.base ? json(*c.base) : json(nullptr);
}

void from_json(const json& j, Conflict& c) {
  c.file = j.at("file").get<FileId>();
  c.line = j.at("line").get<LineId>();
  c.base = j.at("base").is_null() ? std::nullopt : std::optional<std::string>(j.at("base").get<std::string>());
  c.variants = j.at("variants").get<std::vector<Variant>>();
}

void to_json(json& j, const AnnotatedLine& l) {
  j = json{{"line", l.line}, {"text", l.text}, {"status", to_string(l.status)}};
  if (!l.users.empty()) j["users"] = l.users;
  if (!l.variants.empty()) j["variants"] = l.variants;
}

void from_json(const json& j, AnnotatedLine& l) {
  l.line = j.at("line").get<LineId>();
  l.text = j.at("text").get<std::string>();
  auto status = parse_line_status(j.at("status").get<std::string>());
  if (!status) throw CmError(ErrorCode::kInvalid, "unknown line status " + j.at("status").dump());
  l.status = *status;
  l.users = j.contains("users") ? j.at("users").get<UserSet>() : UserSet{};
  l.variants = j.contains("variants") ? j.at("variants").get<std::vector<Variant>>() : std::vector<Variant>{};
}

void to_json(json& j, const AnnotatedDocument& d) { j = json{{"file", d.file}, {"lines", d.lines}}; }

void from_json(const json& j, AnnotatedDocument& d) {
  d.file = j.at("file").get<FileId>();
  d.lines = j.at("lines").get<std::vector<AnnotatedLine>>();
}

void to_json(json& j, const Snapshot& s) {
  j = json::object();
  for (const auto& [file, lines] : s.files) j[file.str()] = lines;
}

void from_json(const json& j, Snapshot& s) {
  s.files.clear();
  for (const auto& [file, lines] : j.items()) s.files[FileId(file)] = lines.get<std::vector<std::string>>();
}

void to_json(json& j, const BaseVersion& b) {
  json files = json::object();
  for (const auto& [file, lines] : b.files) {
    json arr = json::array();
    for (const auto& l : lines) arr.push_back(json{{"line", l.line}, {"key", l.order}, {"text", l.text}});
    files[file.str()] = std::move(arr);
  }
  j = json{{"number", b.number}, {"files", std::move(files)}};
  j["parent"] = b.parent ? json(*b.parent) : json(nullptr);
}

void from_json(const json& j, BaseVersion& b) {
  b.number = j.at("number").get<std::uint64_t>();
  b.parent = j.at("parent").is_null() ? std::nullopt : std::optional<std::uint64_t>(j.at("parent").get<std::uint64_t>());
  b.files.clear();
  for (const auto& [file, lines] : j.at("files").items()) {
    auto& out = b.files[FileId(file)];
    for (const auto& l : lines)
      out.push_back(BaseLine{l.at("line").get<LineId>(), l.at("key").get<OrderKey>(), l.at("text").get<std::string>()});
  }
}

void to_json(json& j, const CommitResult& r) {
  json skipped = json::array();
  for (const auto& [file, line] : r.skipped) skipped.push_back(json{{"file", file}, {"line", line}});
  j = json{{"version", r.number}, {"promoted", r.promoted}, {"skipped", std::move(skipped)}};
}

void to_json(json& j, const InterweaveGroup& g) { j = json{{"members", g.members}, {"active", g.active}}; }

void to_json(json& j, const EditOutcome& o) {
  j = json{{"file", o.file},
           {"line", o.line},
           {"records_added", o.records_added},
           {"records_removed", o.records_removed},
           {"conflict_created", o.conflict_created},
           {"conflict_removed", o.conflict_removed}};
  j["conflict"] = o.conflict ? json(*o.conflict) : json(nullptr);
}

json modes_to_json(const ViewPrefs& prefs) {
  json modes = json::object();
  for (const auto& [user, mode] : prefs.modes) modes[user.str()] = to_string(mode);
  return modes;
}

ViewPrefs prefs_from_json(const UserId& observer, const json& modes) {
  if (!modes.is_object()) throw CmError(ErrorCode::kInvalid, "modes must be an object");
  ViewPrefs prefs{observer, {}};
  for (const auto& [user, mode] : modes.items()) {
    auto parsed = mode.is_string() ? parse_view_mode(mode.get<std::string>()) : std::nullopt;
    if (!parsed) throw CmError(ErrorCode::kInvalid, "unknown view mode " + mode.dump());
    prefs.modes[UserId(user)] = *parsed;
  }
  return prefs;
}

json edit_to_json(const FileId& file, const Edit& edit) {
  json j{{"file", file}};
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, Replace>) {
          j["op"] = "replace";
          j["line"] = e.line;
          j["text"] = e.text;
        } else if constexpr (std::is_same_v<E, InsertAfter>) {
          j["op"] = "insert_after";
          j["line"] = e.anchor ? e.anchor->str() : "";
          j["text"] = e.text;
        } else {
          j["op"] = "delete";
          j["line"] = e.line;
        }
      },
      edit);
  return j;
}

std::pair<FileId, Edit> edit_from_json(const json& payload) {
  FileId file(require_string(payload, "file"));
  const std::string op = require_string(payload, "op");
  const auto line = [&] { return require_field(payload, "line").get<LineId>(); };
  if (op == "replace") return {file, Replace{line(), require_string(payload, "text")}};
  if (op == "delete") return {file, Delete{line()}};
  if (op == "insert_after") {
    std::optional<LineId> anchor;
    if (payload.contains("line") && !payload.at("line").is_null() &&
        !(payload.at("line").is_string() && payload.at("line").get<std::string>().empty()))
      anchor = line();
    return {file, InsertAfter{anchor, require_string(payload, "text")}};
  }
  throw CmError(ErrorCode::kInvalid, "unknown edit op '" + op + "'");
}

json state_json(const Project& p) {
  json files = json::object();
  for (const auto& [file, state] : p.file_states()) {
    json lines = json::array();
    for (const auto& [key, id] : state.order) {
      const auto& slot = state.slots.at(id);
      json pending = json::array();
      for (const auto& rec : slot.pending) pending.push_back(json{{"owners", rec.owners}, {"content", rec.content}});
      lines.push_back(json{{"line", id},
                           {"key", key},
                           {"base", slot.base ? json(*slot.base) : json(nullptr)},
                           {"pending", std::move(pending)}});
    }
    files[file.str()] = std::move(lines);
  }
  json counters = json::object();
  for (const auto& [file, next] : p.line_counters()) counters[file.str()] = next;
  json archive = json::object();
  for (const auto& [n, base] : p.archive()) archive[std::to_string(n)] = base;
  json prefs = json::object();
  for (const auto& [observer, pref] : p.all_prefs()) prefs[observer.str()] = modes_to_json(pref);
  const auto current = p.current_base();

  return json{{"name", p.name()},
              {"base", p.base_number()},
              {"parent", current.parent ? json(*current.parent) : json(nullptr)},
              {"members", p.members()},
              {"files", std::move(files)},
              {"line_counters", std::move(counters)},
              {"archive", std::move(archive)},
              {"groups", p.groups()},
              {"prefs", std::move(prefs)}};
}

std::string canonical(const json& j) { return j.dump(); }

}  // namespace ucm
