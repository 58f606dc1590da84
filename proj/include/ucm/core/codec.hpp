#pragma once

#include <string>

#include <json.hpp>

#include "ucm/core/project.hpp"
#include "ucm/core/types.hpp"

// JSON forms shared by the wire protocol, the command log and the CLI reports.
namespace ucm {

void to_json(nlohmann::json& j, const UserId& u);
void from_json(const nlohmann::json& j, UserId& u);
void to_json(nlohmann::json& j, const FileId& f);
void from_json(const nlohmann::json& j, FileId& f);
void to_json(nlohmann::json& j, const LineId& l);
void from_json(const nlohmann::json& j, LineId& l);
void to_json(nlohmann::json& j, const OrderKey& k);
void from_json(const nlohmann::json& j, OrderKey& k);
void to_json(nlohmann::json& j, const Content& c);  // text or null
void from_json(const nlohmann::json& j, Content& c);
void to_json(nlohmann::json& j, const Variant& v);
void from_json(const nlohmann::json& j, Variant& v);
void to_json(nlohmann::json& j, const Conflict& c);
void from_json(const nlohmann::json& j, Conflict& c);
void to_json(nlohmann::json& j, const AnnotatedLine& l);
void from_json(const nlohmann::json& j, AnnotatedLine& l);
void to_json(nlohmann::json& j, const AnnotatedDocument& d);
void from_json(const nlohmann::json& j, AnnotatedDocument& d);
void to_json(nlohmann::json& j, const Snapshot& s);
void from_json(const nlohmann::json& j, Snapshot& s);
void to_json(nlohmann::json& j, const BaseVersion& b);
void from_json(const nlohmann::json& j, BaseVersion& b);
void to_json(nlohmann::json& j, const CommitResult& r);
void to_json(nlohmann::json& j, const InterweaveGroup& g);
void to_json(nlohmann::json& j, const EditOutcome& o);

// {"claudia": "full", ...}
nlohmann::json modes_to_json(const ViewPrefs& prefs);
ViewPrefs prefs_from_json(const UserId& observer, const nlohmann::json& modes);

// Wire edit payload {"file", "op", "line", "text"}.
nlohmann::json edit_to_json(const FileId& file, const Edit& edit);
std::pair<FileId, Edit> edit_from_json(const nlohmann::json& payload);

// Complete canonical dump of a project; equal projects give byte-identical dumps.
nlohmann::json state_json(const Project& project);
std::string canonical(const nlohmann::json& j);

// Throws CmError(kInvalid) naming the field when the value is missing or mistyped.
const nlohmann::json& require_field(const nlohmann::json& j, const char* field);
std::string require_string(const nlohmann::json& j, const char* field);

}  // namespace ucm
