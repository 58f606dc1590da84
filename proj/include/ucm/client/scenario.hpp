#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucm/client/client.hpp"

namespace ucm::client {

// Script shape:
//   {"name": "...", "project": "...", "clients": ["stu", {"user": "claudia", "transport": "websocket"}],
//    "steps": [{"client": "stu", "action": "edit", "op": "replace", "file": "p.e", "line": 3, "text": "..."},
//              {"assert": {"client": "claudia", "file": "p.e", "line": 3, "status": "other"}}]}
// Line references: an integer is a 1-based rank in that client's mirror, "@name" a line
// captured earlier with "as", any other string a literal line id.
struct ScenarioOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string token;
  std::optional<std::string> project;  // overrides the script's
  Transport transport = Transport::kNdjson;
  std::chrono::milliseconds timeout{10000};
};

struct StepReport {
  std::size_t index = 0;  // 1-based; 0 for the final convergence check
  std::string label;
  bool ok = true;
  std::string message;
  double ms = 0;
};

struct ScenarioReport {
  std::string name;
  bool passed = true;
  bool io_failure = false;  // the failure was the network, not an assertion
  std::vector<StepReport> steps;
  double elapsed_ms = 0;

  const StepReport* failure() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Throws CmError(kInvalid) for a malformed script, before connecting anywhere.
void validate_scenario(const nlohmann::json& script);

// Runs until the first failing step. Ends by checking every mirror against the server.
ScenarioReport run_scenario(const nlohmann::json& script, const ScenarioOptions& options);

}  // namespace ucm::client
