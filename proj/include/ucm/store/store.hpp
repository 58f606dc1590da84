#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucm/core/command.hpp"
#include "ucm/core/project.hpp"

namespace ucm::store {

namespace fs = std::filesystem;

struct LogEntry {
  std::uint64_t seq = 0;
  std::string project;
  nlohmann::json command;  // command_to_json form
  std::int64_t timestamp_ms = 0;
};

struct CorruptEntry {
  std::uint64_t seq = 0;  // sequence number the damaged frame would have had
  std::string reason;
};

enum class Durability {
  kFsync,  // fdatasync after every append
  kFlush,  // hand each frame to the kernel, no sync
};

// Append-only log of length-prefixed frames: u32 payload length, u32 crc32, JSON payload.
class CommandLog {
 public:
  struct ReadResult {
    std::vector<LogEntry> entries;
    std::optional<CorruptEntry> corrupt;
    std::uint64_t valid_bytes = 0;
    std::vector<std::uint64_t> entry_ends;  // byte offset just past each intact entry
  };

  CommandLog(fs::path path, Durability durability);
  CommandLog(CommandLog&& other) noexcept;
  CommandLog& operator=(CommandLog&& other) noexcept;
  CommandLog(const CommandLog&) = delete;
  CommandLog& operator=(const CommandLog&) = delete;
  ~CommandLog();

  // Requires entry.seq == last_seq() + 1. The first append drops a torn tail left by a crash.
  std::uint64_t append(const LogEntry& entry);
  std::uint64_t last_seq() const { return last_seq_; }

  // Discards every entry after `keep` (0 empties the log).
  void truncate_after(std::uint64_t keep);

  static ReadResult read(const fs::path& path);

 private:
  fs::path path_;
  Durability durability_;
  int fd_ = -1;
  std::uint64_t last_seq_ = 0;
  std::vector<std::uint64_t> entry_ends_;
  bool positioned_ = false;
};

struct ArchivedBase {
  std::string project;
  std::uint64_t number = 0;
  std::optional<std::uint64_t> parent;
  Snapshot content;

  bool operator==(const ArchivedBase&) const = default;
};

struct ReplayResult {
  Project project;
  std::uint64_t last_seq = 0;
  std::optional<CorruptEntry> corrupt;
};

// Text form of a Snapshot used for bases/<n>.snap.
std::string encode_snapshot(const Snapshot& snapshot, std::uint64_t number, std::optional<std::uint64_t> parent);
ArchivedBase decode_snapshot(const std::string& project, const std::string& text);
Snapshot snapshot_of(const BaseVersion& base);

// Export layout: one UTF-8 file per FileId below dir, every line LF-terminated.
void export_snapshot(const Snapshot& snapshot, const fs::path& dir);
Snapshot import_directory(const fs::path& dir);

struct StoreOptions {
  Durability durability = Durability::kFsync;
};

// <data-dir>/<project>/{log.bin, bases/<n>.snap, meta.json}
class ProjectStore {
 public:
  // Creates the directory and meta.json on first use. Reading the log happens in recover().
  ProjectStore(const fs::path& data_dir, const std::string& project, StoreOptions options = {});

  const std::string& project() const { return project_; }
  const fs::path& dir() const { return dir_; }

  // Replays the log, cuts it back to the last entry that applied cleanly so
  // appends can continue, and writes any archived base whose snapshot is missing.
  ReplayResult recover();

  // Replays without touching the files.
  ReplayResult replay() const;

  std::uint64_t append(const Command& command);
  std::uint64_t append(const LogEntry& entry);
  std::uint64_t last_seq() const { return log_.last_seq(); }

  void archive_base(const BaseVersion& base);
  ArchivedBase fetch_base(std::uint64_t number) const;
  std::vector<std::uint64_t> archived_numbers() const;

  nlohmann::json meta() const;
  void write_meta(const nlohmann::json& meta);

  static std::vector<std::string> list_projects(const fs::path& data_dir);

 private:
  fs::path snap_path(std::uint64_t number) const;

  std::string project_;
  fs::path dir_;
  StoreOptions options_;
  CommandLog log_;
};

// Applies logged commands in order to a fresh project.
ReplayResult replay_entries(const std::string& project, const std::vector<LogEntry>& entries);

}  // namespace ucm::store
