#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucm/core/command.hpp"
#include "ucm/core/errors.hpp"
#include "ucm/core/project.hpp"
#include "ucm/core/types.hpp"

namespace ucm::client {

enum class Transport { kNdjson, kWebSocket };

struct ConnectOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string user;
  std::string project;
  std::string token;
  Transport transport = Transport::kNdjson;
  std::chrono::milliseconds timeout{10000};
};

struct ChatMessage {
  UserId from;
  std::string text;
  bool operator==(const ChatMessage&) const = default;
};

// What one member sees, kept current from the server's replies and broadcasts.
struct ClientState {
  std::string project;
  UserId user;
  std::uint64_t base = 0;
  std::vector<FileId> files;
  std::map<FileId, AnnotatedDocument> docs;  // open files only
  UserSet online;
  std::vector<ChatMessage> chat;
  std::size_t events = 0;  // server-initiated messages applied so far
};

struct Ack {
  LineId line;
  bool conflict = false;
  nlohmann::json raw;
};

// Synchronous headless client. Every call sends one request and blocks until its
// correlated reply, applying any broadcasts that arrive first, in order.
class Client {
 public:
  // hello + join. Throws CmError (auth_failed, unknown_project, io, ...).
  static Client connect(const ConnectOptions& options);

  Client(Client&&) noexcept;
  Client& operator=(Client&&) noexcept;
  ~Client();

  const ClientState& state() const;
  const AnnotatedDocument& doc(const FileId& file) const;

  // Raw request; returns the reply payload or throws the server's error.
  nlohmann::json request(const std::string& type, nlohmann::json payload = nlohmann::json::object());

  const AnnotatedDocument& open(const FileId& file);
  Ack edit(const FileId& file, const Edit& edit);
  Ack replace(const FileId& file, LineId line, const std::string& text);
  Ack insert_after(const FileId& file, std::optional<LineId> anchor, const std::string& text);
  Ack remove(const FileId& file, LineId line);
  CommitResult commit();
  void set_prefs(const std::map<UserId, ViewMode>& modes);
  InterweaveGroup interweave_start(const UserSet& members);
  InterweaveGroup interweave_stop();
  void chat(const std::string& text);
  // Throws ConflictError when FailOnConflict meets disagreeing included users.
  Snapshot materialize(const UserSet& include, const std::optional<UserId>& observer_wins = std::nullopt);
  std::uint64_t import_file(const FileId& file, const std::vector<std::string>& lines);
  std::uint64_t rollback(std::uint64_t version);
  nlohmann::json versions();
  std::vector<Conflict> conflicts(const std::optional<FileId>& file = std::nullopt);
  // The server's current rendering for this user, without touching the mirror.
  AnnotatedDocument server_view(const FileId& file);
  nlohmann::json project_state();

  // Round trip that guarantees every event queued for us before it has been applied.
  void sync();
  // Applies whatever arrives within `wait`; returns how many messages were handled.
  std::size_t poll(std::chrono::milliseconds wait);

  // Drops the connection, connects again and re-opens every file.
  void reconnect();
  void close();

 private:
  struct Impl;
  explicit Client(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

// Sends a core command as its wire request, issued by whoever the client is logged in as.
// Join has no request form; connecting is the join.
nlohmann::json send_command(Client& client, const Command& command);

}  // namespace ucm::client
