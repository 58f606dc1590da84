#include "ucm/client/scenario.hpp"

#include <chrono>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "ucm/core/codec.hpp"

namespace ucm::client {

using nlohmann::json;

namespace {

const std::set<std::string> kActions{"import", "open",     "edit",   "commit",      "set_prefs", "interweave",
                                     "interweave_stop",   "chat",   "materialize", "rollback",  "sync",
                                     "reconnect", "wait"};

// Raised when a step's expectation does not hold.
struct AssertionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void invalid(std::size_t index, const std::string& what) {
  throw CmError(ErrorCode::kInvalid, "step " + std::to_string(index) + ": " + what);
}

std::string show(const json& j) { return j.dump(); }

template <class T>
void expect_eq(const std::string& what, const T& got, const T& want) {
  if (!(got == want)) {
    std::ostringstream out;
    out << what << ": expected " << show(json(want)) << ", got " << show(json(got));
    throw AssertionFailed(out.str());
  }
}

struct Runner {
  const json& script;
  ScenarioOptions options;
  std::string project;
  std::map<std::string, Client> clients;
  std::vector<std::string> order;
  std::map<std::string, LineId> captured;

  Client& client(const json& step) {
    const std::string name = step.at("client").get<std::string>();
    auto it = clients.find(name);
    if (it == clients.end()) throw CmError(ErrorCode::kInvalid, "unknown client '" + name + "'");
    return it->second;
  }

  LineId resolve(Client& c, const FileId& file, const json& ref) {
    if (ref.is_number_integer()) {
      const auto k = ref.get<std::int64_t>();
      const auto& lines = c.doc(file).lines;
      if (k < 1 || static_cast<std::size_t>(k) > lines.size())
        throw AssertionFailed("rank " + std::to_string(k) + " outside " + file.str() + " (" +
                              std::to_string(lines.size()) + " lines)");
      return lines[static_cast<std::size_t>(k - 1)].line;
    }
    const std::string s = ref.get<std::string>();
    if (s.starts_with("@")) {
      auto it = captured.find(s.substr(1));
      if (it == captured.end()) throw CmError(ErrorCode::kInvalid, "nothing captured as '" + s.substr(1) + "'");
      return it->second;
    }
    auto id = LineId::parse(s);
    if (!id) throw CmError(ErrorCode::kInvalid, "bad line reference '" + s + "'");
    return *id;
  }

  void connect_all() {
    for (const auto& entry : script.at("clients")) {
      ConnectOptions o;
      o.host = options.host;
      o.port = options.port;
      o.project = project;
      o.token = options.token;
      o.timeout = options.timeout;
      o.transport = options.transport;
      if (entry.is_string()) {
        o.user = entry.get<std::string>();
      } else {
        o.user = entry.at("user").get<std::string>();
        if (entry.contains("transport"))
          o.transport = entry.at("transport") == "websocket" ? Transport::kWebSocket : Transport::kNdjson;
      }
      clients.emplace(o.user, Client::connect(o));
      order.push_back(o.user);
    }
  }

  void sync_all() {
    for (const auto& name : order) clients.at(name).sync();
  }

  void act(const json& step) {
    const std::string action = step.at("action").get<std::string>();
    if (action == "wait") {
      std::this_thread::sleep_for(std::chrono::milliseconds(step.value("ms", 0)));
      return;
    }
    if (action == "sync" && !step.contains("client")) return sync_all();
    Client& c = client(step);
    if (action == "sync") return c.sync();
    if (action == "reconnect") return c.reconnect();
    if (action == "open") {
      c.open(FileId(step.at("file").get<std::string>()));
      return;
    }
    if (action == "import") {
      c.import_file(FileId(step.at("file").get<std::string>()), step.at("lines").get<std::vector<std::string>>());
      return;
    }
    if (action == "edit") {
      const FileId file(step.at("file").get<std::string>());
      const std::string op = step.at("op").get<std::string>();
      Ack ack;
      if (op == "replace") {
        ack = c.replace(file, resolve(c, file, step.at("line")), step.at("text").get<std::string>());
      } else if (op == "insert") {
        const json& after = step.contains("after") ? step.at("after") : json(nullptr);
        std::optional<LineId> anchor;
        if (!after.is_null()) anchor = resolve(c, file, after);
        ack = c.insert_after(file, anchor, step.at("text").get<std::string>());
      } else if (op == "delete") {
        ack = c.remove(file, resolve(c, file, step.at("line")));
      } else {
        throw CmError(ErrorCode::kInvalid, "unknown edit op '" + op + "'");
      }
      if (step.contains("as")) captured[step.at("as").get<std::string>()] = ack.line;
      if (step.contains("conflict")) expect_eq("conflict after edit", ack.conflict, step.at("conflict").get<bool>());
      return;
    }
    if (action == "commit") {
      const auto r = c.commit();
      if (!step.contains("expect")) return;
      const json& e = step.at("expect");
      if (e.contains("promoted")) expect_eq("promoted", r.promoted, e.at("promoted").get<std::size_t>());
      if (e.contains("skipped")) expect_eq("skipped", r.skipped.size(), e.at("skipped").get<std::size_t>());
      if (e.contains("base")) expect_eq("base after commit", r.number, e.at("base").get<std::uint64_t>());
      return;
    }
    if (action == "set_prefs") {
      std::map<UserId, ViewMode> modes;
      for (const auto& [user, mode] : step.at("modes").items()) {
        auto m = parse_view_mode(mode.get<std::string>());
        if (!m) throw CmError(ErrorCode::kInvalid, "unknown view mode " + mode.dump());
        modes[UserId(user)] = *m;
      }
      return c.set_prefs(modes);
    }
    if (action == "interweave") {
      c.interweave_start(step.at("members").get<UserSet>());
      return;
    }
    if (action == "interweave_stop") {
      c.interweave_stop();
      return;
    }
    if (action == "chat") return c.chat(step.at("text").get<std::string>());
    if (action == "rollback") {
      c.rollback(step.at("version").get<std::uint64_t>());
      return;
    }
    if (action == "materialize") {
      const UserSet include = step.value("include", UserSet{});
      std::optional<UserId> winner;
      if (step.value("policy", "fail") == "observer") winner = UserId(step.value("observer", c.state().user.str()));
      const json e = step.value("expect", json::object());
      try {
        const Snapshot snap = c.materialize(include, winner);
        if (e.value("conflict", false)) throw AssertionFailed("materialize succeeded; a conflict was expected");
        if (e.contains("files")) {
          json got = json::object();
          for (const auto& [file, lines] : snap.files) got[file.str()] = lines;
          expect_eq("materialized files", got, e.at("files"));
        }
      } catch (const ConflictError& err) {
        if (!e.value("conflict", false)) throw AssertionFailed(std::string("materialize failed: ") + err.what());
        if (e.contains("lines")) expect_eq("conflicting lines", err.conflicts().size(), e.at("lines").get<std::size_t>());
      }
      return;
    }
    throw CmError(ErrorCode::kInvalid, "unknown action '" + action + "'");
  }

  void check(const json& a) {
    sync_all();
    Client& c = client(a);
    if (a.contains("base")) expect_eq("base", c.state().base, a.at("base").get<std::uint64_t>());
    if (a.contains("online")) expect_eq("online", c.state().online, a.at("online").get<UserSet>());
    if (a.contains("chat")) {
      json got = json::array();
      for (const auto& m : c.state().chat) got.push_back(json{{"from", m.from}, {"text", m.text}});
      expect_eq("chat", got, a.at("chat"));
    }
    if (a.contains("conflicts")) {
      std::optional<FileId> file;
      if (a.contains("file")) file = FileId(a.at("file").get<std::string>());
      expect_eq("conflict count", c.conflicts(file).size(), a.at("conflicts").get<std::size_t>());
    }
    if (a.value("mirror", false))
      for (const auto& [file, doc] : c.state().docs)
        if (!(doc == c.server_view(file))) throw AssertionFailed("mirror of " + file.str() + " differs from the server");
    if (!a.contains("file")) return;

    const FileId file(a.at("file").get<std::string>());
    const auto& doc = c.doc(file);
    if (a.value("unchanged", false))
      for (std::size_t i = 0; i < doc.lines.size(); ++i)
        if (doc.lines[i].status != LineStatus::kUnchanged)
          throw AssertionFailed("line " + std::to_string(i + 1) + " of " + file.str() + " is " +
                                std::string(to_string(doc.lines[i].status)));
    if (a.contains("lines")) {
      std::vector<std::string> texts;
      for (const auto& l : doc.lines) texts.push_back(l.text);
      expect_eq("lines of " + file.str(), texts, a.at("lines").get<std::vector<std::string>>());
    }
    if (a.contains("statuses")) {
      std::vector<std::string> got;
      for (const auto& l : doc.lines) got.emplace_back(to_string(l.status));
      expect_eq("statuses of " + file.str(), got, a.at("statuses").get<std::vector<std::string>>());
    }
    if (a.contains("absent")) {
      const LineId id = resolve(c, file, a.at("absent"));
      for (const auto& l : doc.lines)
        if (l.line == id) throw AssertionFailed("line " + id.str() + " is still shown");
    }
    if (!a.contains("line")) return;

    const LineId id = resolve(c, file, a.at("line"));
    auto it = std::find_if(doc.lines.begin(), doc.lines.end(), [&](const AnnotatedLine& l) { return l.line == id; });
    if (it == doc.lines.end()) throw AssertionFailed("line " + id.str() + " is not shown");
    const std::string where = "line " + id.str() + " ";
    if (a.contains("status")) expect_eq(where + "status", std::string(to_string(it->status)), a.at("status").get<std::string>());
    if (a.contains("text")) expect_eq(where + "text", it->text, a.at("text").get<std::string>());
    if (a.contains("users")) expect_eq(where + "users", it->users, a.at("users").get<UserSet>());
    if (a.contains("variants")) {
      json got = json::array();
      for (const auto& v : it->variants) got.push_back(v.content.is_tombstone() ? json(nullptr) : json(v.content.text()));
      if (a.at("variants").is_number()) {
        expect_eq(where + "variant count", got.size(), a.at("variants").get<std::size_t>());
      } else {
        expect_eq(where + "variants", got, a.at("variants"));
      }
    }
  }

  void step(const json& s) {
    if (s.contains("delay_ms")) std::this_thread::sleep_for(std::chrono::milliseconds(s.at("delay_ms").get<int>()));
    if (s.contains("assert")) return check(s.at("assert"));
    const std::string want = s.value("expect_error", "");
    try {
      act(s);
    } catch (const CmError& e) {
      if (e.code() == ErrorCode::kIo || want.empty()) throw;
      expect_eq("error code", std::string(to_string(e.code())), want);
      return;
    }
    if (!want.empty()) throw AssertionFailed("expected error " + want + ", the step succeeded");
  }
};

double ms_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

const StepReport* ScenarioReport::failure() const {
  for (const auto& s : steps)
    if (!s.ok) return &s;
  return nullptr;
}

json ScenarioReport::to_json() const {
  json j{{"name", name}, {"passed", passed}, {"elapsed_ms", elapsed_ms}, {"steps", json::array()}};
  for (const auto& s : steps) {
    json e{{"index", s.index}, {"ok", s.ok}, {"ms", s.ms}};
    if (!s.label.empty()) e["label"] = s.label;
    if (!s.message.empty()) e["message"] = s.message;
    j["steps"].push_back(std::move(e));
  }
  if (const auto* f = failure()) j["failed_step"] = f->index;
  if (io_failure) j["io_failure"] = true;
  return j;
}

std::string ScenarioReport::to_text() const {
  std::ostringstream out;
  for (const auto& s : steps) {
    if (s.ok) continue;
    out << "step " << s.index;
    if (!s.label.empty()) out << " (" << s.label << ")";
    out << ": " << s.message << "\n";
  }
  out << (passed ? "PASS " : "FAIL ") << name << ": " << steps.size() << " steps in "
      << static_cast<long>(elapsed_ms) << " ms\n";
  return out.str();
}

void validate_scenario(const json& script) {
  if (!script.is_object()) throw CmError(ErrorCode::kInvalid, "script must be a JSON object");
  if (!script.contains("clients") || !script.at("clients").is_array() || script.at("clients").empty())
    throw CmError(ErrorCode::kInvalid, "script needs a non-empty clients array");
  std::set<std::string> names;
  for (const auto& c : script.at("clients")) {
    const json& user = c.is_object() ? c.value("user", json()) : c;
    if (!user.is_string() || !is_valid_user_name(user.get<std::string>()))
      throw CmError(ErrorCode::kInvalid, "bad client entry " + c.dump());
    names.insert(user.get<std::string>());
  }
  if (!script.contains("steps") || !script.at("steps").is_array())
    throw CmError(ErrorCode::kInvalid, "script needs a steps array");
  std::size_t index = 0;
  for (const auto& s : script.at("steps")) {
    ++index;
    if (!s.is_object()) invalid(index, "not an object");
    const json& body = s.contains("assert") ? s.at("assert") : s;
    if (!s.contains("assert")) {
      if (!s.contains("action") || !s.at("action").is_string()) invalid(index, "needs an action or an assert");
      if (!kActions.contains(s.at("action").get<std::string>())) invalid(index, "unknown action " + s.at("action").dump());
    }
    const bool clientless = !s.contains("assert") && (s.at("action") == "wait" || s.at("action") == "sync");
    if (body.contains("client")) {
      if (!body.at("client").is_string() || !names.contains(body.at("client").get<std::string>()))
        invalid(index, "unknown client " + body.at("client").dump());
    } else if (!clientless) {
      invalid(index, "needs a client");
    }
  }
}

ScenarioReport run_scenario(const json& script, const ScenarioOptions& options) {
  validate_scenario(script);
  const auto start = std::chrono::steady_clock::now();
  ScenarioReport report;
  report.name = script.value("name", "scenario");
  Runner runner{script, options, options.project.value_or(script.value("project", "scenario")), {}, {}, {}};

  auto attempt = [&](StepReport& r, const auto& body) {
    const auto t = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const AssertionFailed& e) {
      r.ok = false;
      r.message = e.what();
    } catch (const CmError& e) {
      r.ok = false;
      r.message = std::string(to_string(e.code())) + ": " + e.what();
      report.io_failure = e.code() == ErrorCode::kIo;
    } catch (const std::exception& e) {
      r.ok = false;
      r.message = e.what();
    }
    r.ms = ms_since(t);
    report.steps.push_back(r);
    report.passed = r.ok;
    return r.ok;
  };

  StepReport connect{0, "connect", true, "", 0};
  if (attempt(connect, [&] { runner.connect_all(); })) {
    std::size_t index = 0;
    bool ok = true;
    for (const auto& s : script.at("steps")) {
      StepReport r{++index, s.value("label", ""), true, "", 0};
      if (!(ok = attempt(r, [&] { runner.step(s); }))) break;
    }
    if (ok) {
      StepReport final{0, "convergence", true, "", 0};
      attempt(final, [&] {
        for (const auto& name : runner.order) runner.check(json{{"client", name}, {"mirror", true}});
      });
    }
  }
  for (auto& [name, c] : runner.clients) c.close();
  report.elapsed_ms = ms_since(start);
  return report;
}

}  // namespace ucm::client
