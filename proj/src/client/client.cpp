#include "ucm/client/client.hpp"

#include <algorithm>

#include "ucm/core/codec.hpp"
#include "ucm/net/protocol.hpp"
#include "ucm/net/socket.hpp"
#include "ucm/net/websocket.hpp"

namespace ucm::client {

using nlohmann::json;

struct Client::Impl {
  ConnectOptions options;
  net::Socket socket;
  std::unique_ptr<net::BufferedReader> reader;
  std::uint64_t next_seq = 1;
  ClientState state;

  void open_connection() {
    socket = net::connect_tcp(options.host, options.port);
    reader = std::make_unique<net::BufferedReader>(socket);
    if (options.transport == Transport::kWebSocket) net::ws::client_handshake(socket, *reader, options.host, "/ws");
  }

  void send(const json& msg) {
    const std::string text = msg.dump();
    if (options.transport == Transport::kNdjson) {
      socket.write_all(text + "\n");
    } else {
      socket.write_all(net::ws::encode_frame(net::ws::kText, text, true));
    }
  }

  // Next message, or nullopt if nothing arrives within `wait`.
  std::optional<json> receive(std::chrono::milliseconds wait) {
    if (!reader->wait_readable(wait)) return std::nullopt;
    std::optional<std::string> text;
    if (options.transport == Transport::kNdjson) {
      text = reader->read_line(net::kMaxMessageBytes);
    } else {
      text = net::ws::read_message(*reader, net::kMaxMessageBytes, [&](const net::ws::Frame& f) {
        if (f.opcode == net::ws::kPing) socket.write_all(net::ws::encode_frame(net::ws::kPong, f.payload, true));
        return f.opcode != net::ws::kClose;
      });
    }
    if (!text) throw CmError(ErrorCode::kIo, "server closed the connection");
    try {
      return json::parse(*text);
    } catch (const json::exception& e) {
      throw CmError(ErrorCode::kIo, std::string("unreadable message from server: ") + e.what());
    }
  }

  void apply_event(const std::string& type, const json& p) {
    ++state.events;
    if (type == "remote_change") {
      const FileId file = p.at("file").get<FileId>();
      state.base = p.at("base").get<std::uint64_t>();
      auto it = state.docs.find(file);
      if (it != state.docs.end()) net::apply_delta(it->second, p);
    } else if (type == "base_update") {
      state.base = p.at("base").get<std::uint64_t>();
    } else if (type == "files") {
      state.files = p.at("files").get<std::vector<FileId>>();
      state.base = p.at("base").get<std::uint64_t>();
      std::erase_if(state.docs, [&](const auto& entry) {
        return std::find(state.files.begin(), state.files.end(), entry.first) == state.files.end();
      });
    } else if (type == "presence") {
      state.online = p.at("online").get<UserSet>();
    } else if (type == "chat") {
      state.chat.push_back(ChatMessage{p.at("from").get<UserId>(), p.at("text").get<std::string>()});
    }
  }

  void apply_reply(const std::string& type, const json& p) {
    if (type == "view_update") {
      state.base = p.at("base").get<std::uint64_t>();
      for (const auto& d : p.at("documents")) {
        auto doc = d.get<AnnotatedDocument>();
        state.docs[doc.file] = std::move(doc);
      }
    } else if (type == "joined") {
      state.project = p.at("project").get<std::string>();
      state.user = p.at("user").get<UserId>();
      state.base = p.at("base").get<std::uint64_t>();
      state.files = p.at("files").get<std::vector<FileId>>();
      state.online = p.at("online").get<UserSet>();
    } else if (type == "commit_result") {
      state.base = p.at("version").get<std::uint64_t>();
    } else if (type == "rollback" || type == "imported") {
      state.base = p.at("base").get<std::uint64_t>();
      if (p.contains("files")) state.files = p.at("files").get<std::vector<FileId>>();
    } else if (type == "chat") {
      state.chat.push_back(ChatMessage{p.at("from").get<UserId>(), p.at("text").get<std::string>()});
    }
  }

  json request(const std::string& type, json payload = json::object()) {
    const std::uint64_t seq = next_seq++;
    send(net::message(type, seq, std::move(payload)));
    const auto deadline = std::chrono::steady_clock::now() + options.timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw CmError(ErrorCode::kIo, "no reply to " + type + " within the timeout");
      auto msg = receive(left);
      if (!msg) continue;
      const std::string t = msg->at("type").get<std::string>();
      const auto s = msg->value("seq", std::uint64_t{0});
      const json& p = msg->at("payload");
      if (s == 0) {
        apply_event(t, p);
        continue;
      }
      if (s != seq) continue;  // reply to an abandoned request
      if (t == "error") net::throw_error_payload(p);
      apply_reply(t, p);
      return p;
    }
  }

  void handshake() {
    request("hello", json{{"user", options.user}});
    request("join", json{{"project", options.project}, {"token", options.token}});
  }
};

Client::Client(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Client::Client(Client&&) noexcept = default;
Client& Client::operator=(Client&&) noexcept = default;
Client::~Client() = default;

Client Client::connect(const ConnectOptions& options) {
  auto impl = std::make_unique<Impl>();
  impl->options = options;
  impl->open_connection();
  impl->handshake();
  return Client(std::move(impl));
}

const ClientState& Client::state() const { return impl_->state; }

const AnnotatedDocument& Client::doc(const FileId& file) const {
  auto it = impl_->state.docs.find(file);
  if (it == impl_->state.docs.end()) throw CmError(ErrorCode::kUnknownFile, "file '" + file.str() + "' is not open");
  return it->second;
}

json Client::request(const std::string& type, json payload) { return impl_->request(type, std::move(payload)); }

const AnnotatedDocument& Client::open(const FileId& file) {
  impl_->request("open_file", json{{"file", file}});
  return doc(file);
}

Ack Client::edit(const FileId& file, const Edit& e) {
  const json p = impl_->request("edit", edit_to_json(file, e));
  return Ack{p.at("line").get<LineId>(), p.contains("conflict") && !p.at("conflict").is_null(), p};
}

Ack Client::replace(const FileId& file, LineId line, const std::string& text) {
  return edit(file, Replace{line, text});
}

Ack Client::insert_after(const FileId& file, std::optional<LineId> anchor, const std::string& text) {
  return edit(file, InsertAfter{anchor, text});
}

Ack Client::remove(const FileId& file, LineId line) { return edit(file, Delete{line}); }

CommitResult Client::commit() {
  const json p = impl_->request("commit");
  CommitResult r;
  r.number = p.at("version").get<std::uint64_t>();
  r.promoted = p.at("promoted").get<std::size_t>();
  for (const auto& s : p.at("skipped")) r.skipped.emplace_back(s.at("file").get<FileId>(), s.at("line").get<LineId>());
  return r;
}

void Client::set_prefs(const std::map<UserId, ViewMode>& modes) {
  ViewPrefs prefs{impl_->state.user, modes};
  impl_->request("set_prefs", json{{"modes", modes_to_json(prefs)}});
}

InterweaveGroup Client::interweave_start(const UserSet& members) {
  const json p = impl_->request("interweave", json{{"action", "start"}, {"members", members}});
  return InterweaveGroup{p.at("members").get<UserSet>(), p.at("active").get<bool>()};
}

InterweaveGroup Client::interweave_stop() {
  const json p = impl_->request("interweave", json{{"action", "stop"}});
  return InterweaveGroup{p.at("members").get<UserSet>(), p.at("active").get<bool>()};
}

void Client::chat(const std::string& text) { impl_->request("chat", json{{"text", text}}); }

Snapshot Client::materialize(const UserSet& include, const std::optional<UserId>& observer_wins) {
  json payload{{"include", include}, {"policy", observer_wins ? "observer" : "fail"}};
  if (observer_wins) payload["observer"] = *observer_wins;
  const json p = impl_->request("materialize", payload);
  return p.at("files").get<Snapshot>();
}

std::uint64_t Client::import_file(const FileId& file, const std::vector<std::string>& lines) {
  return impl_->request("import", json{{"file", file}, {"lines", lines}}).at("base").get<std::uint64_t>();
}

std::uint64_t Client::rollback(std::uint64_t version) {
  return impl_->request("rollback", json{{"version", version}}).at("base").get<std::uint64_t>();
}

json Client::versions() { return impl_->request("versions"); }

std::vector<Conflict> Client::conflicts(const std::optional<FileId>& file) {
  json payload = json::object();
  if (file) payload["file"] = *file;
  return impl_->request("conflicts", payload).at("conflicts").get<std::vector<Conflict>>();
}

AnnotatedDocument Client::server_view(const FileId& file) {
  return impl_->request("view", json{{"file", file}}).at("document").get<AnnotatedDocument>();
}

json Client::project_state() { return impl_->request("state"); }

void Client::sync() { impl_->request("ping"); }

std::size_t Client::poll(std::chrono::milliseconds wait) {
  std::size_t handled = 0;
  for (auto msg = impl_->receive(wait); msg; msg = impl_->receive(std::chrono::milliseconds(0))) {
    if (msg->value("seq", std::uint64_t{0}) == 0)
      impl_->apply_event(msg->at("type").get<std::string>(), msg->at("payload"));
    ++handled;
  }
  return handled;
}

void Client::reconnect() {
  impl_->socket.close();
  impl_->open_connection();
  std::vector<FileId> open;
  for (const auto& [file, _] : impl_->state.docs) open.push_back(file);
  impl_->state.docs.clear();
  impl_->handshake();
  for (const auto& file : open)
    if (std::find(impl_->state.files.begin(), impl_->state.files.end(), file) != impl_->state.files.end())
      impl_->request("open_file", json{{"file", file}});
}

void Client::close() {
  if (!impl_) return;
  impl_->socket.shutdown();
  impl_->socket.close();
}

json send_command(Client& client, const Command& command) {
  if (std::holds_alternative<cmd::Join>(command)) throw CmError(ErrorCode::kInvalid, "join is done by connecting");
  if (issuer(command) != client.state().user)
    throw CmError(ErrorCode::kInvalid, "command issued by " + issuer(command).str() + " sent as " +
                                           client.state().user.str());
  const json j = command_to_json(command);
  return client.request(j.at("type").get<std::string>(), j.at("payload"));
}

}  // namespace ucm::client
