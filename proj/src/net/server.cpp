#include "ucm/net/server.hpp"

#include <openssl/crypto.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include "ucm/core/codec.hpp"
#include "ucm/core/command.hpp"
#include "ucm/net/protocol.hpp"
#include "ucm/net/socket.hpp"
#include "ucm/net/websocket.hpp"

namespace ucm::net {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A client that stops reading is cut off once this many messages queue up.
constexpr std::size_t kMaxOutbox = 100000;

std::string content_type_for(const fs::path& path) {
  static const std::map<std::string, std::string> types{
      {".html", "text/html; charset=utf-8"}, {".js", "text/javascript; charset=utf-8"},
      {".mjs", "text/javascript; charset=utf-8"}, {".css", "text/css; charset=utf-8"},
      {".json", "application/json"}, {".svg", "image/svg+xml"}, {".png", "image/png"},
      {".ico", "image/x-icon"}, {".map", "application/json"}, {".txt", "text/plain; charset=utf-8"}};
  auto it = types.find(path.extension().string());
  return it == types.end() ? "application/octet-stream" : it->second;
}

std::string read_whole(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool same_token(const std::string& a, const std::string& b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace

struct Session;

struct ProjectHost {
  ProjectHost(std::string name, Project project, store::ProjectStore store)
      : name(std::move(name)), project(std::move(project)), store(std::move(store)) {}

  std::string name;
  mutable std::shared_mutex mu;
  Project project;
  store::ProjectStore store;
  std::vector<std::shared_ptr<Session>> sessions;

  json online() const;
};

struct Session {
  enum class Transport { kNdjson, kWebSocket };

  std::uint64_t id = 0;
  Transport transport = Transport::kNdjson;
  Socket socket;

  std::mutex out_mu;
  std::condition_variable out_cv;
  std::deque<std::string> outbox;
  bool closing = false;

  // Set once by the session's own thread; read by others under the host lock.
  std::optional<UserId> user;
  ProjectHost* host = nullptr;
  // Last view sent per open file. Changed by the own thread under a shared host
  // lock, or by any thread under the exclusive one.
  std::map<FileId, AnnotatedDocument> views;

  void send(const json& msg) {
    std::string wire = msg.dump();
    if (transport == Transport::kNdjson) {
      wire.push_back('\n');
    } else {
      wire = ws::encode_frame(ws::kText, wire, false);
    }
    send_raw(std::move(wire));
  }

  void send_raw(std::string bytes) {
    std::lock_guard lk(out_mu);
    if (closing) return;
    if (outbox.size() >= kMaxOutbox) {
      closing = true;
      socket.shutdown();
      out_cv.notify_all();
      return;
    }
    outbox.push_back(std::move(bytes));
    out_cv.notify_all();
  }

  void close_outbox() {
    std::lock_guard lk(out_mu);
    closing = true;
    out_cv.notify_all();
  }

  void writer_loop() {
    for (;;) {
      std::string next;
      {
        std::unique_lock lk(out_mu);
        out_cv.wait(lk, [&] { return !outbox.empty() || closing; });
        if (outbox.empty()) return;
        next = std::move(outbox.front());
        outbox.pop_front();
      }
      try {
        socket.write_all(next);
      } catch (const CmError&) {
        std::lock_guard lk(out_mu);
        closing = true;
        outbox.clear();
        socket.shutdown();
        return;
      }
    }
  }
};

json ProjectHost::online() const {
  UserSet users;
  for (const auto& s : sessions) users.insert(*s->user);
  return users;
}

struct Server::Impl {
  explicit Impl(ServerConfig cfg) : config(std::move(cfg)) {}

  ServerConfig config;
  Listener listener;
  std::thread acceptor;
  std::atomic<bool> stopping{false};
  bool started = false;

  mutable std::mutex hosts_mu;
  std::map<std::string, std::unique_ptr<ProjectHost>> hosts;
  std::optional<std::map<std::string, std::string>> tokens;

  std::mutex conn_mu;
  std::uint64_t next_id = 1;
  std::map<std::uint64_t, std::pair<std::shared_ptr<Session>, std::thread>> connections;
  std::vector<std::uint64_t> finished;

  void log(const std::string& line) const {
    if (config.verbose) std::cerr << "ucm: " << line << "\n";
  }

  void load() {
    if (config.token_file) {
      std::ifstream in(*config.token_file);
      if (!in) throw CmError(ErrorCode::kIo, "cannot read token file " + config.token_file->string());
      try {
        tokens = json::parse(in).get<std::map<std::string, std::string>>();
      } catch (const json::exception& e) {
        throw CmError(ErrorCode::kInvalid, "token file must be a JSON object of strings: " + std::string(e.what()));
      }
    }
    fs::create_directories(config.data_dir);
    for (const auto& name : store::ProjectStore::list_projects(config.data_dir)) {
      store::ProjectStore st(config.data_dir, name, {config.durability});
      auto replayed = st.recover();
      if (replayed.corrupt)
        std::cerr << "ucm: project " << name << ": log damaged at entry " << replayed.corrupt->seq << " ("
                  << replayed.corrupt->reason << "), kept " << replayed.last_seq << " entries\n";
      hosts.emplace(name, std::make_unique<ProjectHost>(name, std::move(replayed.project), std::move(st)));
    }
  }

  ProjectHost& host_for_join(const std::string& project, const std::string& token) {
    if (project.empty() || project.find('/') != std::string::npos || project.find('\\') != std::string::npos ||
        project == "." || project == ".." || project.front() == '.')
      throw CmError(ErrorCode::kInvalid, "invalid project name '" + project + "'");
    if (tokens) {
      auto it = tokens->find(project);
      if (it == tokens->end()) throw CmError(ErrorCode::kUnknownProject, "unknown project '" + project + "'");
      if (!same_token(it->second, token)) throw CmError(ErrorCode::kAuthFailed, "wrong token for '" + project + "'");
    }
    std::lock_guard lk(hosts_mu);
    auto it = hosts.find(project);
    if (it != hosts.end()) return *it->second;
    store::ProjectStore st(config.data_dir, project, {config.durability});
    auto fresh = st.recover();
    auto& host = hosts[project];
    host = std::make_unique<ProjectHost>(project, std::move(fresh.project), std::move(st));
    log("created project " + project);
    return *host;
  }

  // ---- connections

  void accept_loop() {
    while (!stopping) {
      auto sock = accept_connection(listener);
      if (!sock) break;
      if (stopping) break;
      reap();
      auto session = std::make_shared<Session>();
      session->socket = std::move(*sock);
      std::lock_guard lk(conn_mu);
      session->id = next_id++;
      connections[session->id] = {session, std::thread([this, session] { serve_connection(session); })};
    }
  }

  void reap() {
    std::vector<std::thread> done;
    {
      std::lock_guard lk(conn_mu);
      for (auto id : finished) {
        auto it = connections.find(id);
        if (it == connections.end()) continue;
        done.push_back(std::move(it->second.second));
        connections.erase(it);
      }
      finished.clear();
    }
    for (auto& t : done) t.join();
  }

  void serve_connection(std::shared_ptr<Session> session) {
    std::thread writer([session] { session->writer_loop(); });
    try {
      BufferedReader reader(session->socket);
      const auto first = reader.peek(1);
      if (first == "G" || first == "H" || first == "P") {
        serve_http(session, reader);
      } else if (!first.empty()) {
        session->transport = Session::Transport::kNdjson;
        while (!stopping) {
          auto line = reader.read_line(kMaxMessageBytes);
          if (!line) break;
          if (line->empty()) continue;
          handle_text(session, *line);
        }
      }
    } catch (const std::exception& e) {
      log("connection " + std::to_string(session->id) + " dropped: " + e.what());
    }
    detach(session);
    session->close_outbox();
    writer.join();
    session->socket.shutdown();
    std::lock_guard lk(conn_mu);
    finished.push_back(session->id);
  }

  void serve_http(const std::shared_ptr<Session>& session, BufferedReader& reader) {
    auto request = read_http_request(reader);
    if (!request) return;
    std::string path = request->target.substr(0, request->target.find('?'));
    if (path == "/ws") {
      if (!ws::is_upgrade(*request)) {
        session->send_raw(http_response(400, "Bad Request", "text/plain", "websocket upgrade expected\n"));
        return;
      }
      session->transport = Session::Transport::kWebSocket;
      session->send_raw(ws::upgrade_response(*request));
      while (!stopping) {
        auto text = ws::read_message(reader, kMaxMessageBytes, [&](const ws::Frame& f) {
          if (f.opcode == ws::kPing) session->send_raw(ws::encode_frame(ws::kPong, f.payload, false));
          if (f.opcode == ws::kClose) {
            session->send_raw(ws::encode_frame(ws::kClose, f.payload.substr(0, 2), false));
            return false;
          }
          return true;
        });
        if (!text) break;
        handle_text(session, *text);
      }
      return;
    }
    if (request->method != "GET" && request->method != "HEAD") {
      session->send_raw(http_response(405, "Method Not Allowed", "text/plain", "only GET is served\n"));
      return;
    }
    session->send_raw(static_file(path, request->method == "HEAD"));
  }

  std::string static_file(std::string path, bool head_only) const {
    const auto not_found = http_response(404, "Not Found", "text/plain", "not found\n");
    if (!config.web_root) return not_found;
    if (path.empty() || path.back() == '/') path += "index.html";
    if (path.find("..") != std::string::npos || path.find('%') != std::string::npos ||
        path.find('\\') != std::string::npos)
      return not_found;
    const fs::path file = *config.web_root / fs::path(path).relative_path();
    std::error_code ec;
    if (!fs::is_regular_file(file, ec)) return not_found;
    const std::string body = read_whole(file);
    auto out = http_response(200, "OK", content_type_for(file), body);
    if (head_only) out.resize(out.size() - body.size());
    return out;
  }

  void detach(const std::shared_ptr<Session>& session) {
    ProjectHost* host = session->host;
    if (!host) return;
    std::unique_lock lk(host->mu);
    std::erase(host->sessions, session);
    json presence{{"online", host->online()}, {"left", *session->user}};
    for (auto& s : host->sessions) s->send(message("presence", 0, presence));
    log(session->user->str() + " left " + host->name);
  }

  // ---- messages

  void handle_text(const std::shared_ptr<Session>& session, const std::string& text) {
    std::uint64_t seq = 0;
    try {
      json msg;
      try {
        msg = json::parse(text);
      } catch (const json::exception& e) {
        throw CmError(ErrorCode::kInvalid, std::string("malformed JSON: ") + e.what());
      }
      if (!msg.is_object()) throw CmError(ErrorCode::kInvalid, "message must be a JSON object");
      if (msg.contains("seq")) {
        if (!msg.at("seq").is_number_unsigned()) throw CmError(ErrorCode::kInvalid, "seq must be a non-negative integer");
        seq = msg.at("seq").get<std::uint64_t>();
      }
      const std::string type = require_string(msg, "type");
      const json payload = msg.value("payload", json::object());
      if (!payload.is_object()) throw CmError(ErrorCode::kInvalid, "payload must be an object");
      dispatch(session, type, seq, payload);
    } catch (const CmError& e) {
      session->send(message("error", seq, error_payload(e)));
    } catch (const json::exception& e) {
      session->send(message("error", seq, error_payload(CmError(ErrorCode::kInvalid, e.what()))));
    }
  }

  void dispatch(const std::shared_ptr<Session>& s, const std::string& type, std::uint64_t seq, const json& p) {
    if (type == "ping") return s->send(message("pong", seq, p));
    if (type == "hello") {
      if (s->user) throw CmError(ErrorCode::kInvalid, "hello already received");
      const std::string user = require_string(p, "user");
      if (!is_valid_user_name(user)) throw CmError(ErrorCode::kInvalid, "invalid user name '" + user + "'");
      s->user = UserId(user);
      return s->send(message("hello", seq, json{{"user", user}, {"server", "ucm"}, {"protocol", 1}}));
    }
    if (!s->user) throw CmError(ErrorCode::kNotJoined, "send hello first");
    if (type == "join") return join(s, seq, p);
    if (!s->host) throw CmError(ErrorCode::kNotJoined, "join a project first");
    ProjectHost& h = *s->host;
    const UserId& me = *s->user;

    if (type == "open_file") {
      const FileId file(require_string(p, "file"));
      std::shared_lock lk(h.mu);
      auto doc = h.project.render_view(me, file);
      s->views[file] = doc;
      return s->send(message("view_update", seq, json{{"base", h.project.base_number()}, {"documents", {doc}}}));
    }
    if (type == "close_file") {
      const FileId file(require_string(p, "file"));
      std::shared_lock lk(h.mu);
      s->views.erase(file);
      return s->send(message("closed", seq, json{{"file", file}}));
    }
    if (type == "view") {
      const FileId file(require_string(p, "file"));
      std::shared_lock lk(h.mu);
      return s->send(message("view", seq, json{{"base", h.project.base_number()}, {"document", h.project.render_view(me, file)}}));
    }
    if (type == "edit") {
      auto [file, edit] = edit_from_json(p);
      return run(s, seq, cmd::EditLine{me, file, std::move(edit)});
    }
    if (type == "commit") return run(s, seq, cmd::Commit{me});
    if (type == "set_prefs") return run(s, seq, cmd::SetPrefs{prefs_from_json(me, require_field(p, "modes"))});
    if (type == "interweave") {
      const std::string action = require_string(p, "action");
      if (action == "start") return run(s, seq, cmd::InterweaveStart{me, require_field(p, "members").get<UserSet>()});
      if (action == "stop") return run(s, seq, cmd::InterweaveStop{me});
      throw CmError(ErrorCode::kInvalid, "interweave action must be start or stop");
    }
    if (type == "import")
      return run(s, seq, cmd::Import{me, FileId(require_string(p, "file")),
                                     require_field(p, "lines").get<std::vector<std::string>>()});
    if (type == "rollback") return run(s, seq, cmd::Rollback{me, require_field(p, "version").get<std::uint64_t>()});
    if (type == "chat") {
      const std::string text = require_string(p, "text");
      const json body{{"from", me}, {"text", text}};
      std::shared_lock lk(h.mu);
      for (auto& other : h.sessions)
        if (other != s) other->send(message("chat", 0, body));
      return s->send(message("chat", seq, body));
    }
    if (type == "materialize") {
      UserSet include;
      if (p.contains("include")) include = p.at("include").get<UserSet>();
      MaterializePolicy policy = FailOnConflict{};
      const std::string mode = p.value("policy", "fail");
      if (mode == "observer") {
        policy = ObserverWins{p.contains("observer") ? p.at("observer").get<UserId>() : me};
      } else if (mode != "fail") {
        throw CmError(ErrorCode::kInvalid, "policy must be fail or observer");
      }
      std::shared_lock lk(h.mu);
      const auto snap = h.project.materialize(include, policy);
      return s->send(message("snapshot", seq, json{{"base", h.project.base_number()}, {"files", json(snap)}}));
    }
    if (type == "versions") {
      std::shared_lock lk(h.mu);
      const auto base = h.project.current_base();
      return s->send(message("versions", seq,
                             json{{"current", base.number},
                                  {"parent", base.parent ? json(*base.parent) : json(nullptr)},
                                  {"versions", h.project.versions()},
                                  {"seq", h.store.last_seq()}}));
    }
    if (type == "fetch_base") {
      const auto n = require_field(p, "version").get<std::uint64_t>();
      std::shared_lock lk(h.mu);
      auto base = h.project.base_version(n);
      if (!base) throw CmError(ErrorCode::kVersionUnknown, "unknown base version " + std::to_string(n));
      return s->send(message("base", seq, *base));
    }
    if (type == "conflicts") {
      std::optional<FileId> file;
      if (p.contains("file")) file = FileId(require_string(p, "file"));
      std::shared_lock lk(h.mu);
      return s->send(message("conflicts", seq, json{{"conflicts", h.project.conflicts(file)}}));
    }
    if (type == "state") {
      std::shared_lock lk(h.mu);
      return s->send(message("state", seq, json{{"state", state_json(h.project)}, {"seq", h.store.last_seq()}}));
    }
    throw CmError(ErrorCode::kInvalid, "unknown message type '" + type + "'");
  }

  void join(const std::shared_ptr<Session>& s, std::uint64_t seq, const json& p) {
    if (s->host) throw CmError(ErrorCode::kInvalid, "already joined " + s->host->name);
    const std::string project = require_string(p, "project");
    const std::string token = p.value("token", "");
    ProjectHost& h = host_for_join(project, token);
    std::unique_lock lk(h.mu);
    if (!h.project.members().contains(*s->user)) commit_to_log(h, cmd::Join{*s->user});
    s->host = &h;
    h.sessions.push_back(s);
    json presence{{"online", h.online()}, {"joined", *s->user}};
    for (auto& other : h.sessions)
      if (other != s) other->send(message("presence", 0, presence));

    json joined{{"project", project},
                {"user", *s->user},
                {"base", h.project.base_number()},
                {"files", h.project.files()},
                {"members", h.project.members()},
                {"online", h.online()},
                {"modes", modes_to_json(h.project.prefs(*s->user))},
                {"groups", h.project.groups()}};
    s->send(message("joined", seq, joined));
    log(s->user->str() + " joined " + project);
  }

  // Applies and logs a command; a failed append leaves the state as the log has it.
  CommandResult commit_to_log(ProjectHost& h, const Command& command) {
    CommandResult result = execute(h.project, command);
    try {
      h.store.append(command);
    } catch (const CmError& e) {
      std::cerr << "ucm: project " << h.name << ": log append failed: " << e.what() << "\n";
      h.project = h.store.replay().project;
      throw;
    }
    try {
      if (const auto* c = std::get_if<CommitResult>(&result); c && c->archived) h.store.archive_base(*c->archived);
      if (const auto* r = std::get_if<RollbackResult>(&result)) h.store.archive_base(r->archived);
    } catch (const std::exception& e) {
      std::cerr << "ucm: project " << h.name << ": archiving failed: " << e.what() << "\n";
    }
    return result;
  }

  void run(const std::shared_ptr<Session>& s, std::uint64_t seq, const Command& command) {
    ProjectHost& h = *s->host;
    const UserId& me = *s->user;
    std::unique_lock lk(h.mu);
    const auto base_before = h.project.base_number();
    const auto files_before = h.project.files();
    const CommandResult result = commit_to_log(h, command);

    const bool base_changed = h.project.base_number() != base_before;
    const bool files_changed = h.project.files() != files_before;
    std::optional<FileId> only;
    if (const auto* e = std::get_if<cmd::EditLine>(&command)) only = e->file;
    const std::string cause = ucm::command_to_json(command).at("type");

    const bool prefs = std::holds_alternative<cmd::SetPrefs>(command);
    if (prefs) {
      json docs = json::array();
      for (auto& [file, view] : s->views) {
        view = h.project.render_view(me, file);
        docs.push_back(view);
      }
      s->send(message("view_update", seq, json{{"base", h.project.base_number()}, {"documents", docs}}));
    }

    for (auto& other : h.sessions) {
      // Preferences only shape their owner's rendering, possibly on several connections.
      if (prefs && (other == s || *other->user != me)) continue;
      if (files_changed)
        other->send(message("files", 0, json{{"files", h.project.files()}, {"base", h.project.base_number()}}));
      if (base_changed) {
        const auto base = h.project.current_base();
        other->send(message("base_update", 0,
                            json{{"base", base.number},
                                 {"parent", base.parent ? json(*base.parent) : json(nullptr)},
                                 {"by", me},
                                 {"cause", cause}}));
      }
      if (const auto* g = std::get_if<InterweaveGroup>(&result); g && other != s)
        other->send(message("interweave", 0, json{{"members", g->members}, {"active", g->active}, {"by", me}}));
      for (auto it = other->views.begin(); it != other->views.end();) {
        if (!h.project.has_file(it->first)) {
          it = other->views.erase(it);
          continue;
        }
        if (only && it->first != *only) {
          ++it;
          continue;
        }
        auto fresh = h.project.render_view(*other->user, it->first);
        json delta = render_delta(it->second, fresh);
        if (!delta_empty(delta)) {
          delta["file"] = it->first;
          delta["base"] = h.project.base_number();
          delta["by"] = me;
          delta["cause"] = cause;
          other->send(message("remote_change", 0, std::move(delta)));
        }
        it->second = std::move(fresh);
        ++it;
      }
    }

    if (!prefs) s->send(reply_for(h, seq, result));
  }

  static json reply_for(const ProjectHost& h, std::uint64_t seq, const CommandResult& result) {
    return std::visit(
        [&](const auto& r) -> json {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, EditOutcome>) {
            return message("edit_ack", seq, r);
          } else if constexpr (std::is_same_v<R, CommitResult>) {
            return message("commit_result", seq, r);
          } else if constexpr (std::is_same_v<R, InterweaveGroup>) {
            return message("interweave", seq, r);
          } else if constexpr (std::is_same_v<R, RollbackResult>) {
            return message("rollback", seq,
                           json{{"base", r.base.number},
                                {"parent", r.base.parent ? json(*r.base.parent) : json(nullptr)}});
          } else if constexpr (std::is_same_v<R, BaseVersion>) {
            return message("imported", seq, json{{"base", r.number}, {"files", h.project.files()}});
          } else {
            return message("ok", seq);
          }
        },
        result);
  }
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  impl_->load();
  impl_->listener = listen_tcp(impl_->config.host, impl_->config.port);
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->listener.port; }

void Server::start() {
  if (impl_->started) return;
  impl_->started = true;
  impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
}

void Server::stop() {
  if (impl_->stopping.exchange(true)) return;
  impl_->listener.socket.shutdown();
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(impl_->conn_mu);
    for (auto& [id, conn] : impl_->connections) conn.first->socket.shutdown();
    for (auto& [id, conn] : impl_->connections) threads.push_back(std::move(conn.second));
    impl_->connections.clear();
  }
  for (auto& t : threads) t.join();
  impl_->listener.socket.close();
}

std::optional<json> Server::project_state(const std::string& project) const {
  std::lock_guard lk(impl_->hosts_mu);
  auto it = impl_->hosts.find(project);
  if (it == impl_->hosts.end()) return std::nullopt;
  std::shared_lock plk(it->second->mu);
  return state_json(it->second->project);
}

}  // namespace ucm::net
