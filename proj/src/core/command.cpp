#include "ucm/core/command.hpp"

#include "ucm/core/codec.hpp"

namespace ucm {

using nlohmann::json;

CommandResult execute(Project& project, const Command& command) {
  return std::visit(
      [&](const auto& c) -> CommandResult {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, cmd::Join>) {
          project.add_member(c.user);
          return std::monostate{};
        } else if constexpr (std::is_same_v<C, cmd::Import>) {
          return project.import_base(c.file, c.lines);
        } else if constexpr (std::is_same_v<C, cmd::EditLine>) {
          return project.apply_edit(c.user, c.file, c.edit);
        } else if constexpr (std::is_same_v<C, cmd::Commit>) {
          return project.commit(c.user);
        } else if constexpr (std::is_same_v<C, cmd::SetPrefs>) {
          project.set_prefs(c.prefs);
          return std::monostate{};
        } else if constexpr (std::is_same_v<C, cmd::InterweaveStart>) {
          if (!c.members.contains(c.user))
            throw CmError(ErrorCode::kInvalid, "interweave must include the requesting user");
          return project.interweave_start(c.members);
        } else if constexpr (std::is_same_v<C, cmd::InterweaveStop>) {
          return project.interweave_stop(c.user);
        } else {
          return project.rollback(c.version);
        }
      },
      command);
}

const UserId& issuer(const Command& command) {
  return std::visit(
      [](const auto& c) -> const UserId& {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, cmd::SetPrefs>) {
          return c.prefs.observer;
        } else {
          return c.user;
        }
      },
      command);
}

json command_to_json(const Command& command) {
  json j{{"user", issuer(command)}};
  std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, cmd::Join>) {
          j["type"] = "join";
          j["payload"] = json::object();
        } else if constexpr (std::is_same_v<C, cmd::Import>) {
          j["type"] = "import";
          j["payload"] = json{{"file", c.file}, {"lines", c.lines}};
        } else if constexpr (std::is_same_v<C, cmd::EditLine>) {
          j["type"] = "edit";
          j["payload"] = edit_to_json(c.file, c.edit);
        } else if constexpr (std::is_same_v<C, cmd::Commit>) {
          j["type"] = "commit";
          j["payload"] = json::object();
        } else if constexpr (std::is_same_v<C, cmd::SetPrefs>) {
          j["type"] = "set_prefs";
          j["payload"] = json{{"modes", modes_to_json(c.prefs)}};
        } else if constexpr (std::is_same_v<C, cmd::InterweaveStart>) {
          j["type"] = "interweave";
          j["payload"] = json{{"action", "start"}, {"members", c.members}};
        } else if constexpr (std::is_same_v<C, cmd::InterweaveStop>) {
          j["type"] = "interweave";
          j["payload"] = json{{"action", "stop"}};
        } else {
          j["type"] = "rollback";
          j["payload"] = json{{"version", c.version}};
        }
      },
      command);
  return j;
}

Command command_from_json(const json& j) {
  try {
    const UserId user(require_string(j, "user"));
    const std::string type = require_string(j, "type");
    const json& payload = require_field(j, "payload");
    if (type == "join") return cmd::Join{user};
    if (type == "import")
      return cmd::Import{user, FileId(require_string(payload, "file")),
                         require_field(payload, "lines").get<std::vector<std::string>>()};
    if (type == "edit") {
      auto [file, edit] = edit_from_json(payload);
      return cmd::EditLine{user, std::move(file), std::move(edit)};
    }
    if (type == "commit") return cmd::Commit{user};
    if (type == "set_prefs") return cmd::SetPrefs{prefs_from_json(user, require_field(payload, "modes"))};
    if (type == "interweave") {
      const std::string action = require_string(payload, "action");
      if (action == "start") return cmd::InterweaveStart{user, require_field(payload, "members").get<UserSet>()};
      if (action == "stop") return cmd::InterweaveStop{user};
      throw CmError(ErrorCode::kInvalid, "unknown interweave action '" + action + "'");
    }
    if (type == "rollback") return cmd::Rollback{user, require_field(payload, "version").get<std::uint64_t>()};
    throw CmError(ErrorCode::kInvalid, "unknown command type '" + type + "'");
  } catch (const json::exception& e) {
    throw CmError(ErrorCode::kInvalid, std::string("malformed command: ") + e.what());
  }
}

}  // namespace ucm
