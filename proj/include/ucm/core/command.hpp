#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ucm/core/project.hpp"

namespace ucm {

// State-changing commands. These are what the server serializes per project and
// what the store appends to the log; their JSON form reuses the wire payloads.
namespace cmd {

struct Join {
  UserId user;
};
struct Import {
  UserId user;
  FileId file;
  std::vector<std::string> lines;
};
struct EditLine {
  UserId user;
  FileId file;
  Edit edit;
};
struct Commit {
  UserId user;
};
struct SetPrefs {
  ViewPrefs prefs;
};
struct InterweaveStart {
  UserId user;
  UserSet members;
};
struct InterweaveStop {
  UserId user;
};
struct Rollback {
  UserId user;
  std::uint64_t version = 0;
};

}  // namespace cmd

using Command = std::variant<cmd::Join, cmd::Import, cmd::EditLine, cmd::Commit, cmd::SetPrefs,
                             cmd::InterweaveStart, cmd::InterweaveStop, cmd::Rollback>;

using CommandResult = std::variant<std::monostate, BaseVersion, EditOutcome, CommitResult, InterweaveGroup,
                                   RollbackResult>;

// Dispatches to the matching Project operation.
CommandResult execute(Project& project, const Command& command);

const UserId& issuer(const Command& command);

// {"type": <wire type>, "user": <issuer>, "payload": <wire payload>}
nlohmann::json command_to_json(const Command& command);
Command command_from_json(const nlohmann::json& j);

}  // namespace ucm
