#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "ucm/store/store.hpp"

namespace ucm::net {

struct ServerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::filesystem::path data_dir = "ucm-data";
  // JSON object {"<project>": "<token>"}. Without it every token is accepted and
  // projects are created on first join.
  std::optional<std::filesystem::path> token_file;
  // Static files served at /; /ws is the browser socket.
  std::optional<std::filesystem::path> web_root;
  store::Durability durability = store::Durability::kFsync;
  bool verbose = false;
};

// One port, two framings: newline-delimited JSON, or WebSocket text frames after
// an HTTP upgrade on /ws. Plain HTTP GETs serve the web root.
class Server {
 public:
  // Recovers every project under data_dir and binds. Throws CmError(kIo) when the port is taken.
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  void start();
  // Closes the listener and every connection, then joins all threads. Idempotent.
  void stop();

  // Canonical state dump of a hosted project, for tests and operators.
  std::optional<nlohmann::json> project_state(const std::string& project) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ucm::net
