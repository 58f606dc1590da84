#include "ucm/net/protocol.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "ucm/core/codec.hpp"

namespace ucm::net {

using nlohmann::json;

json message(std::string_view type, std::uint64_t seq, json payload) {
  return json{{"type", type}, {"seq", seq}, {"payload", std::move(payload)}};
}

json error_payload(const CmError& error) {
  json j{{"code", to_string(error.code())}, {"detail", error.detail()}};
  if (const auto* conflict = dynamic_cast<const ConflictError*>(&error)) j["conflicts"] = conflict->conflicts();
  return j;
}

void throw_error_payload(const json& payload) {
  const std::string code = payload.value("code", "invalid");
  const std::string detail = payload.value("detail", "");
  if (payload.contains("conflicts")) throw ConflictError(payload.at("conflicts").get<std::vector<Conflict>>());
  throw CmError(parse_error_code(code).value_or(ErrorCode::kInvalid), detail);
}

json render_delta(const AnnotatedDocument& before, const AnnotatedDocument& after) {
  std::map<LineId, const AnnotatedLine*> old;
  for (const auto& l : before.lines) old[l.line] = &l;
  std::set<LineId> kept;

  json upsert = json::array();
  const AnnotatedLine* prev = nullptr;
  for (const auto& l : after.lines) {
    kept.insert(l.line);
    auto it = old.find(l.line);
    if (it == old.end() || !(*it->second == l)) {
      json entry = l;
      entry["after"] = prev ? json(prev->line) : json(nullptr);
      upsert.push_back(std::move(entry));
    }
    prev = &l;
  }
  json remove = json::array();
  for (const auto& l : before.lines)
    if (!kept.contains(l.line)) remove.push_back(l.line);
  return json{{"upsert", std::move(upsert)}, {"remove", std::move(remove)}};
}

bool delta_empty(const json& delta) { return delta.at("upsert").empty() && delta.at("remove").empty(); }

void apply_delta(AnnotatedDocument& doc, const json& delta) {
  std::set<LineId> gone;
  for (const auto& id : delta.at("remove")) gone.insert(id.get<LineId>());
  std::erase_if(doc.lines, [&](const AnnotatedLine& l) { return gone.contains(l.line); });

  for (const auto& entry : delta.at("upsert")) {
    AnnotatedLine line = entry.get<AnnotatedLine>();
    auto existing = std::find_if(doc.lines.begin(), doc.lines.end(),
                                 [&](const AnnotatedLine& l) { return l.line == line.line; });
    if (existing != doc.lines.end()) {
      *existing = std::move(line);
      continue;
    }
    auto at = doc.lines.begin();
    const auto& after = entry.at("after");
    if (!after.is_null()) {
      const LineId anchor = after.get<LineId>();
      auto it = std::find_if(doc.lines.begin(), doc.lines.end(), [&](const AnnotatedLine& l) { return l.line == anchor; });
      if (it == doc.lines.end()) throw CmError(ErrorCode::kInvalid, "delta anchors on unknown line " + anchor.str());
      at = it + 1;
    }
    doc.lines.insert(at, std::move(line));
  }
}

}  // namespace ucm::net
