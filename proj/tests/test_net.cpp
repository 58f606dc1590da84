#include <doctest.h>

#include <sys/socket.h>

#include <functional>
#include <random>
#include <thread>

#include "support/live_server.hpp"
#include "support/scripts.hpp"
#include "ucm/core/codec.hpp"
#include "ucm/net/protocol.hpp"
#include "ucm/net/socket.hpp"
#include "ucm/net/websocket.hpp"

using namespace ucm;
using namespace ucm::client;
using testing::LiveServer;
using testing::TempDir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const FileId kFile("stack.e");

std::vector<std::string> stack_lines() {
  return {"class STACK", "feature", "  count: INTEGER", "  items: ARRAY [INTEGER]", "push (v: INTEGER)",
          "  do", "    count := count + 1", "  end", "end"};
}

LineId rank(const Client& c, std::size_t k) { return c.doc(kFile).lines.at(k - 1).line; }
const AnnotatedLine& line_at(const Client& c, std::size_t k) { return c.doc(kFile).lines.at(k - 1); }

void watch(Client& c, const char* other) { c.set_prefs({{UserId(other), ViewMode::kFull}}); }

void check_mirror(Client& c) {
  c.sync();
  for (const auto& [file, doc] : c.state().docs) CHECK(doc == c.server_view(file));
}

std::string http_get(std::uint16_t port, const std::string& target) {
  auto sock = net::connect_tcp("127.0.0.1", port);
  sock.write_all("GET " + target + " HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
  std::string out;
  char buf[4096];
  for (;;) {
    const auto n = sock.read_some(buf, sizeof buf);
    if (n == 0) break;
    out.append(buf, n);
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const CmError& e) {
    return e.code();
  }
  return ErrorCode::kInvalid;
}

}  // namespace

TEST_CASE("websocket accept key matches the published handshake example") {
  CHECK(net::ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("websocket frames survive a round trip at every length class") {
  for (std::size_t len : {0u, 5u, 125u, 126u, 65535u, 65536u, 200000u}) {
    for (bool masked : {false, true}) {
      std::string payload(len, '\0');
      for (std::size_t i = 0; i < len; ++i) payload[i] = static_cast<char>('a' + i % 26);
      const auto frame = net::ws::encode_frame(net::ws::kText, payload, masked);
      int fds[2];
      REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
      net::Socket out(fds[0]), in(fds[1]);
      std::thread writer([&] { out.write_all(frame); });
      net::BufferedReader r(in);
      const auto f = net::ws::read_frame(r, 1 << 20);
      REQUIRE(f);
      CHECK(f->fin);
      CHECK(f->opcode == net::ws::kText);
      CHECK(f->payload == payload);
      writer.join();
    }
  }
}

TEST_CASE("applying a render delta to the old view yields the new view") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 300; ++round) {
    auto random_doc = [&] {
      AnnotatedDocument d{FileId("f"), {}};
      std::uint64_t id = 1;
      for (int i = 0, n = static_cast<int>(rng() % 8); i < n; ++i) {
        id += 1 + rng() % 3;
        d.lines.push_back(AnnotatedLine{LineId(id), std::string(1, char('a' + rng() % 3)), LineStatus::kUnchanged, {}, {}});
      }
      return d;
    };
    const auto before = random_doc();
    const auto after = random_doc();
    auto patched = before;
    net::apply_delta(patched, net::render_delta(before, after));
    CHECK(patched == after);
  }
}

TEST_CASE("join reports the server's base; bad credentials are refused") {
  LiveServer srv(R"({"p": "secret", "q": "other"})");
  auto stu = srv.connect("stu", "p", Transport::kNdjson, "secret");
  CHECK(stu.state().project == "p");
  CHECK(stu.state().base == 0);
  CHECK(stu.state().online == UserSet{UserId("stu")});
  CHECK(code_of([&] { srv.connect("eve", "p", Transport::kNdjson, "guess"); }) == ErrorCode::kAuthFailed);
  CHECK(code_of([&] { srv.connect("eve", "nope", Transport::kNdjson, "secret"); }) == ErrorCode::kUnknownProject);
  CHECK(code_of([&] { srv.connect("eve", "p", Transport::kWebSocket, "guess"); }) == ErrorCode::kAuthFailed);
}

TEST_CASE("edits are echoed as Own to the author and Other to the collaborator") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  auto claudia = srv.connect("claudia", "p", Transport::kWebSocket);
  stu.import_file(kFile, stack_lines());
  stu.open(kFile);
  claudia.open(kFile);
  watch(stu, "claudia");
  watch(claudia, "stu");

  const auto ack = stu.replace(kFile, rank(stu, 5), "push (x: INTEGER)");
  CHECK(ack.line == rank(stu, 5));
  CHECK_FALSE(ack.conflict);
  CHECK(line_at(stu, 5).status == LineStatus::kOwn);
  claudia.sync();
  CHECK(line_at(claudia, 5).status == LineStatus::kOther);
  CHECK(line_at(claudia, 5).users == UserSet{UserId("stu")});
  CHECK(line_at(claudia, 5).text == "push (x: INTEGER)");
  check_mirror(stu);
  check_mirror(claudia);

  claudia.replace(kFile, rank(claudia, 5), "push (v: ANY)");
  stu.sync();
  CHECK(line_at(stu, 5).status == LineStatus::kConflict);
  CHECK(line_at(stu, 5).variants.size() == 2);
  CHECK(stu.conflicts(kFile).size() == 1);
  CHECK(code_of([&] { stu.materialize({UserId("stu"), UserId("claudia")}); }) == ErrorCode::kConflict);
  CHECK(stu.materialize({UserId("stu"), UserId("claudia")}, UserId("stu")).files.at(kFile)[4] == "push (x: INTEGER)");
  check_mirror(stu);
  check_mirror(claudia);
}

TEST_CASE("commit without edits promotes nothing and keeps the base number") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  stu.import_file(kFile, stack_lines());
  const auto r = stu.commit();
  CHECK(r.promoted == 0);
  CHECK(r.number == 0);
  CHECK(stu.state().base == 0);
}

TEST_CASE("hiding a collaborator shows base text in place of their lines") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  auto claudia = srv.connect("claudia");
  stu.import_file(kFile, stack_lines());
  stu.open(kFile);
  claudia.open(kFile);
  watch(stu, "claudia");
  claudia.replace(kFile, rank(claudia, 3), "  count: NATURAL");
  stu.sync();
  CHECK(line_at(stu, 3).status == LineStatus::kOther);

  stu.set_prefs({{UserId("claudia"), ViewMode::kHidden}});
  CHECK(line_at(stu, 3).status == LineStatus::kUnchanged);
  CHECK(line_at(stu, 3).text == "  count: INTEGER");
  check_mirror(stu);

  // Preferences live in the project, so they outlast the connection.
  stu.reconnect();
  CHECK(line_at(stu, 3).text == "  count: INTEGER");
}

TEST_CASE("commit broadcasts the new base and every view turns unchanged") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  auto claudia = srv.connect("claudia");
  stu.import_file(kFile, stack_lines());
  stu.open(kFile);
  claudia.open(kFile);
  stu.replace(kFile, rank(stu, 7), "    count := count + 2");
  const auto r = stu.commit();
  CHECK(r.promoted == 1);
  CHECK(r.number == 1);
  claudia.sync();
  CHECK(claudia.state().base == 1);
  for (const auto* c : {&stu, &claudia})
    for (const auto& l : c->doc(kFile).lines) CHECK(l.status == LineStatus::kUnchanged);
  CHECK(line_at(claudia, 7).text == "    count := count + 2");
  const auto v = stu.versions();
  CHECK(v.at("current") == 1);
  CHECK(v.at("versions") == json::array({0, 1}));
}

TEST_CASE("presence follows joins and disconnects") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  {
    auto claudia = srv.connect("claudia");
    stu.sync();
    CHECK(stu.state().online == UserSet{UserId("claudia"), UserId("stu")});
    claudia.close();
  }
  for (int i = 0; i < 50 && stu.state().online.size() != 1; ++i) stu.poll(std::chrono::milliseconds(20));
  CHECK(stu.state().online == UserSet{UserId("stu")});
}

TEST_CASE("chat reaches every other member once") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  auto claudia = srv.connect("claudia");
  stu.chat("renaming font_size");
  claudia.sync();
  REQUIRE(claudia.state().chat.size() == 1);
  CHECK(claudia.state().chat[0] == ChatMessage{UserId("stu"), "renaming font_size"});
  CHECK(stu.state().chat.size() == 1);
}

TEST_CASE("server errors surface with their codes and leave the mirror alone") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  stu.import_file(kFile, stack_lines());
  stu.open(kFile);
  const auto before = stu.doc(kFile);
  CHECK(code_of([&] { stu.replace(kFile, LineId(999), "x"); }) == ErrorCode::kUnknownLine);
  CHECK(code_of([&] { stu.replace(FileId("none.e"), LineId(1), "x"); }) == ErrorCode::kUnknownFile);
  CHECK(code_of([&] { stu.import_file(kFile, {"again"}); }) == ErrorCode::kFileExists);
  CHECK(code_of([&] { stu.rollback(7); }) == ErrorCode::kVersionUnknown);
  CHECK(code_of([&] { stu.request("bogus"); }) == ErrorCode::kInvalid);
  CHECK(stu.doc(kFile) == before);
  check_mirror(stu);
}

TEST_CASE("a reconnected client matches a twin that never dropped") {
  LiveServer srv;
  auto stu = srv.connect("stu");
  auto twin = srv.connect("stu", "p", Transport::kWebSocket);
  auto claudia = srv.connect("claudia");
  stu.import_file(kFile, stack_lines());
  for (auto* c : {&stu, &twin, &claudia}) c->open(kFile);
  watch(stu, "claudia");
  twin.sync();
  claudia.replace(kFile, rank(claudia, 2), "feature -- public");

  stu.close();
  claudia.replace(kFile, rank(claudia, 4), "  items: LIST [INTEGER]");
  claudia.insert_after(kFile, rank(claudia, 4), "  top: INTEGER");
  claudia.chat("missed");
  twin.replace(kFile, rank(twin, 9), "end -- STACK");

  stu.reconnect();
  twin.sync();
  CHECK(stu.state().docs == twin.state().docs);
  CHECK(stu.state().base == twin.state().base);
  CHECK(stu.state().files == twin.state().files);
  check_mirror(stu);
}

TEST_CASE("static files are served at / and /ws upgrades on the same port") {
  LiveServer srv;
  const auto web = srv.dir.path / "web";
  fs::create_directories(web / "js");
  std::ofstream(web / "index.html") << "<html>ucm</html>";
  std::ofstream(web / "js" / "app.js") << "start();";
  std::ofstream(srv.dir.path / "secret.txt") << "nope";
  srv.config.web_root = web;
  srv.restart();

  const auto index = http_get(srv.port(), "/");
  CHECK(index.starts_with("HTTP/1.1 200"));
  CHECK(index.find("text/html") != std::string::npos);
  CHECK(index.ends_with("<html>ucm</html>"));
  CHECK(http_get(srv.port(), "/js/app.js").ends_with("start();"));
  CHECK(http_get(srv.port(), "/missing.css").starts_with("HTTP/1.1 404"));
  CHECK(http_get(srv.port(), "/../secret.txt").starts_with("HTTP/1.1 404"));
  CHECK(http_get(srv.port(), "/%2e%2e/secret.txt").starts_with("HTTP/1.1 404"));

  auto browser = srv.connect("stu", "p", Transport::kWebSocket);
  CHECK(browser.state().user == UserId("stu"));
}

TEST_CASE("a second server on an occupied port fails to bind") {
  LiveServer srv;
  net::ServerConfig clash = srv.config;
  clash.port = srv.port();
  clash.data_dir = srv.dir.path / "other";
  CHECK(code_of([&] { net::Server s(clash); }) == ErrorCode::kIo);
}

TEST_CASE("restart replays the log into the same state") {
  LiveServer srv;
  {
    auto stu = srv.connect("stu");
    auto claudia = srv.connect("claudia");
    stu.import_file(kFile, stack_lines());
    stu.open(kFile);
    claudia.open(kFile);
    stu.replace(kFile, rank(stu, 5), "push (x: INTEGER)");
    claudia.replace(kFile, rank(claudia, 5), "push (v: ANY)");
    claudia.insert_after(kFile, std::nullopt, "note");
    stu.commit();
  }
  const auto before = srv.server->project_state("p");
  REQUIRE(before);
  srv.restart();
  CHECK(canonical(*srv.server->project_state("p")) == canonical(*before));
  auto stu = srv.connect("stu");
  stu.open(kFile);
  check_mirror(stu);
}

TEST_CASE("mirrors converge with the server over random scripts") {
  for (std::uint64_t seed = 500; seed < 512; ++seed) {
    CAPTURE(seed);
    const auto script = scripts::generate(seed, scripts::Params{3, 12, 60});
    LiveServer srv;
    Project direct("p");
    std::map<UserId, Client> clients;
    for (const auto& c : script.commands) {
      std::optional<ErrorCode> want, got;
      try {
        execute(direct, c);
      } catch (const CmError& e) {
        want = e.code();
      }
      if (const auto* j = std::get_if<cmd::Join>(&c)) {
        clients.emplace(j->user, srv.connect(j->user.str(), "p",
                                             clients.size() % 2 ? Transport::kWebSocket : Transport::kNdjson));
        continue;
      }
      try {
        send_command(clients.at(issuer(c)), c);
      } catch (const CmError& e) {
        got = e.code();
      }
      CHECK(got == want);
      for (auto& [user, client] : clients)
        for (const auto& f : client.state().files)
          if (!client.state().docs.contains(f)) client.open(f);
    }
    for (auto& [user, client] : clients) check_mirror(client);
    CHECK(canonical(*srv.server->project_state("p")) == canonical(state_json(direct)));
  }
}
