// ucm: run the server, drive scenario scripts, move snapshots in and out, inspect projects.
#include <signal.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ucm/client/client.hpp"
#include "ucm/client/scenario.hpp"
#include "ucm/core/codec.hpp"
#include "ucm/net/server.hpp"
#include "ucm/net/socket.hpp"
#include "ucm/store/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ucm;

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kIoError = 3 };

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

int exit_for(const CmError& e) {
  switch (e.code()) {
    case ErrorCode::kIo:
    case ErrorCode::kAuthFailed:
    case ErrorCode::kUnknownProject:
      return kIoError;
    case ErrorCode::kInvalid:
      return kUsage;
    default:
      return kFailed;
  }
}

// Where a command finds its project: a running server, or a data directory read offline.
struct Source {
  std::string server = env_or("UCM_SERVER", "127.0.0.1:7420");
  std::string user = env_or("UCM_USER", "operator");
  std::string token = env_or("UCM_TOKEN", "");
  std::string data_dir;
  std::string project;

  void add(CLI::App* app, bool offline) {
    app->add_option("--project,-p", project, "project name")->required();
    app->add_option("--server", server, "host:port of a running server");
    app->add_option("--user", user, "member name to join as");
    app->add_option("--token", token, "project token");
    if (offline) app->add_option("--data-dir", data_dir, "read this data directory instead of asking a server");
  }

  client::Client connect() const {
    const auto [host, port] = net::parse_address(server);
    client::ConnectOptions o;
    o.host = host;
    o.port = port;
    o.user = user;
    o.project = project;
    o.token = token;
    return client::Client::connect(o);
  }

  // Replays the log without writing anything.
  store::ReplayResult replay() const {
    const auto names = store::ProjectStore::list_projects(data_dir);
    if (std::find(names.begin(), names.end(), project) == names.end())
      throw CmError(ErrorCode::kUnknownProject, "no project '" + project + "' under " + data_dir);
    return store::ProjectStore(data_dir, project, {store::Durability::kFlush}).replay();
  }
};

std::string describe(const Conflict& c) {
  std::ostringstream out;
  out << c.file.str() << ":" << c.line.str() << "  base: " << (c.base ? "\"" + *c.base + "\"" : "(none)") << "\n";
  for (const auto& v : c.variants)
    out << "    " << join_users(v.owners) << ": "
        << (v.content.is_tombstone() ? "(deleted)" : "\"" + v.content.text() + "\"") << "\n";
  return out.str();
}

int serve(const net::ServerConfig& config) {
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);  // inherited by every server thread

  net::Server server(config);
  server.start();
  std::cout << "ready port=" << server.port() << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server.stop();
  return kOk;
}

int run_scenario(const std::string& path, const std::string& address, const client::ScenarioOptions& base,
                 bool as_json) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "ucm: cannot read " << path << "\n";
    return kIoError;
  }
  json script;
  try {
    script = json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "ucm: " << path << " is not JSON: " << e.what() << "\n";
    return kUsage;
  }
  client::ScenarioOptions options = base;
  std::tie(options.host, options.port) = net::parse_address(address);
  const auto report = client::run_scenario(script, options);
  if (as_json) {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    std::cout << report.to_text();
  }
  if (report.passed) return kOk;
  return report.io_failure ? kIoError : kFailed;
}

void print_snapshot(const Snapshot& snap) {
  for (const auto& [file, lines] : snap.files) {
    std::cout << "== " << file.str() << " ==\n";
    for (const auto& l : lines) std::cout << l << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unobtrusive configuration management server and tools"};
  app.require_subcommand(1);

  net::ServerConfig config;
  config.host = env_or("UCM_HOST", config.host);
  std::string port = env_or("UCM_PORT", "7420");
  std::string data_dir = env_or("UCM_DATA_DIR", config.data_dir.string());
  std::string token_file = env_or("UCM_TOKEN_FILE", "");
  std::string web_root = env_or("UCM_WEB_ROOT", "");
  bool no_fsync = false;
  auto* serve_cmd = app.add_subcommand("serve", "run the sync server until SIGINT or SIGTERM");
  serve_cmd->add_option("--host", config.host, "address to bind");
  serve_cmd->add_option("--port", port, "port to bind, 0 for any free one");
  serve_cmd->add_option("--data-dir", data_dir, "where project logs and bases live");
  serve_cmd->add_option("--token-file", token_file, "JSON object mapping project to token");
  serve_cmd->add_option("--web-root", web_root, "static files served at /");
  serve_cmd->add_flag("--no-fsync", no_fsync, "skip fdatasync after each log append");
  serve_cmd->add_flag("--verbose,-v", config.verbose, "log connections to stderr");

  auto* scenario_cmd = app.add_subcommand("scenario", "scenario scripts");
  scenario_cmd->require_subcommand(1);
  auto* scenario_run = scenario_cmd->add_subcommand("run", "run a script against a server");
  std::string script_path;
  std::string scenario_server = env_or("UCM_SERVER", "127.0.0.1:7420");
  client::ScenarioOptions scenario_options;
  scenario_options.token = env_or("UCM_TOKEN", "");
  std::string scenario_project, transport = "ndjson";
  bool as_json = false;
  scenario_run->add_option("script", script_path, "scenario JSON file")->required();
  scenario_run->add_option("--server", scenario_server, "host:port");
  scenario_run->add_option("--token", scenario_options.token, "project token");
  scenario_run->add_option("--project", scenario_project, "override the script's project");
  scenario_run->add_option("--transport", transport, "ndjson or websocket")
      ->check(CLI::IsMember({"ndjson", "websocket"}));
  scenario_run->add_flag("--json", as_json, "machine-readable report");

  Source export_src;
  std::string out_dir;
  std::optional<std::uint64_t> export_version;
  auto* export_cmd = app.add_subcommand("export", "write the base as one text file per file");
  export_src.add(export_cmd, true);
  export_cmd->add_option("--out,-o", out_dir, "target directory")->required();
  export_cmd->add_option("--version", export_version, "an archived base instead of the current one");

  Source import_src;
  std::string in_dir;
  auto* import_cmd = app.add_subcommand("import", "import every file of a directory as new base files");
  import_src.add(import_cmd, false);
  import_cmd->add_option("dir", in_dir, "snapshot directory")->required()->check(CLI::ExistingDirectory);

  Source versions_src;
  auto* versions_cmd = app.add_subcommand("versions", "list base version numbers");
  versions_src.add(versions_cmd, true);

  Source conflicts_src;
  std::string conflicts_file;
  auto* conflicts_cmd = app.add_subcommand("conflicts", "print the conflict table");
  conflicts_src.add(conflicts_cmd, true);
  conflicts_cmd->add_option("--file", conflicts_file, "only this file");

  Source mat_src;
  std::vector<std::string> include;
  std::string observer, mat_out, run_command;
  auto* mat_cmd = app.add_subcommand("materialize", "combine the base with some users' changes");
  mat_src.add(mat_cmd, false);
  mat_cmd->add_option("--include,-i", include, "users whose changes to apply")->delimiter(',');
  mat_cmd->add_option("--observer-wins", observer, "resolve conflicts in this user's favour");
  mat_cmd->add_option("--out,-o", mat_out, "write files here instead of printing them");
  mat_cmd->add_option("--run", run_command, "shell command to run inside --out afterwards")->needs("--out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*serve_cmd) {
      config.port = static_cast<std::uint16_t>(std::stoul(port));
      config.data_dir = data_dir;
      if (!token_file.empty()) config.token_file = token_file;
      if (!web_root.empty()) config.web_root = web_root;
      if (no_fsync) config.durability = store::Durability::kFlush;
      return serve(config);
    }
    if (*scenario_run) {
      if (!scenario_project.empty()) scenario_options.project = scenario_project;
      scenario_options.transport = transport == "websocket" ? client::Transport::kWebSocket : client::Transport::kNdjson;
      return run_scenario(script_path, scenario_server, scenario_options, as_json);
    }
    if (*export_cmd) {
      Snapshot snap;
      if (!export_src.data_dir.empty()) {
        if (export_version) {
          store::ProjectStore st(export_src.data_dir, export_src.project, {store::Durability::kFlush});
          snap = st.fetch_base(*export_version).content;
        } else {
          snap = store::snapshot_of(export_src.replay().project.current_base());
        }
      } else {
        auto c = export_src.connect();
        if (export_version) {
          snap = store::snapshot_of(c.request("fetch_base", json{{"version", *export_version}}).get<BaseVersion>());
        } else {
          snap = c.materialize({});
        }
      }
      store::export_snapshot(snap, out_dir);
      std::cout << "exported " << snap.files.size() << " files to " << out_dir << "\n";
      return kOk;
    }
    if (*import_cmd) {
      const Snapshot snap = store::import_directory(in_dir);
      auto c = import_src.connect();
      std::uint64_t base = 0;
      for (const auto& [file, lines] : snap.files) base = c.import_file(file, lines);
      std::cout << "imported " << snap.files.size() << " files, base " << base << "\n";
      return kOk;
    }
    if (*versions_cmd) {
      std::vector<std::uint64_t> numbers;
      std::uint64_t current = 0;
      if (!versions_src.data_dir.empty()) {
        const auto r = versions_src.replay();
        numbers = r.project.versions();
        current = r.project.base_number();
      } else {
        const json v = versions_src.connect().versions();
        numbers = v.at("versions").get<std::vector<std::uint64_t>>();
        current = v.at("current").get<std::uint64_t>();
      }
      for (auto n : numbers) std::cout << n << (n == current ? " (current)" : "") << "\n";
      return kOk;
    }
    if (*conflicts_cmd) {
      std::optional<FileId> file;
      if (!conflicts_file.empty()) file = FileId(conflicts_file);
      std::vector<Conflict> table;
      if (!conflicts_src.data_dir.empty()) {
        table = conflicts_src.replay().project.conflicts();
        if (file) std::erase_if(table, [&](const Conflict& c) { return c.file != *file; });
      } else {
        table = conflicts_src.connect().conflicts(file);
      }
      for (const auto& c : table) std::cout << describe(c);
      std::cout << table.size() << (table.size() == 1 ? " conflict\n" : " conflicts\n");
      return kOk;
    }
    if (*mat_cmd) {
      UserSet users;
      for (const auto& u : include) users.insert(UserId(u));
      std::optional<UserId> winner;
      if (!observer.empty()) winner = UserId(observer);
      Snapshot snap;
      try {
        snap = mat_src.connect().materialize(users, winner);
      } catch (const ConflictError& e) {
        std::cerr << "ucm: the included users disagree on " << e.conflicts().size() << " lines\n";
        for (const auto& c : e.conflicts()) std::cerr << describe(c);
        return kFailed;
      }
      if (mat_out.empty()) {
        print_snapshot(snap);
        return kOk;
      }
      store::export_snapshot(snap, mat_out);
      if (run_command.empty()) return kOk;
      const std::string cmd = "cd '" + mat_out + "' && " + run_command;
      const int rc = std::system(cmd.c_str());
      return rc == 0 ? kOk : kFailed;
    }
  } catch (const CmError& e) {
    std::cerr << "ucm: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "ucm: " << e.what() << "\n";
    return kIoError;
  }
  return kUsage;
}
