#include "ucm/store/store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ucm/core/codec.hpp"

namespace ucm::store {

using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CmError(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& data) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CmError(ErrorCode::kIo, "cannot write " + tmp.string());
    out << data;
    out.flush();
    if (!out) throw CmError(ErrorCode::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint32_t crc_of(const std::string& data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

constexpr std::size_t kHeader = 8;
constexpr std::uint32_t kMaxFrame = 64u << 20;

}  // namespace

CommandLog::CommandLog(fs::path path, Durability durability) : path_(std::move(path)), durability_(durability) {
  auto existing = read(path_);
  last_seq_ = existing.entries.empty() ? 0 : existing.entries.back().seq;
  entry_ends_ = std::move(existing.entry_ends);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw CmError(ErrorCode::kIo, "cannot open " + path_.string() + ": " + std::strerror(errno));
}

void CommandLog::truncate_after(std::uint64_t keep) {
  if (keep > entry_ends_.size()) throw CmError(ErrorCode::kSequenceGap, "cannot keep more entries than exist");
  const std::uint64_t bytes = keep == 0 ? 0 : entry_ends_[keep - 1];
  if (::ftruncate(fd_, static_cast<off_t>(bytes)) != 0 || ::lseek(fd_, static_cast<off_t>(bytes), SEEK_SET) < 0)
    throw CmError(ErrorCode::kIo, "cannot truncate " + path_.string() + ": " + std::strerror(errno));
  entry_ends_.resize(keep);
  last_seq_ = keep;
  positioned_ = true;
}

CommandLog::CommandLog(CommandLog&& other) noexcept
    : path_(std::move(other.path_)),
      durability_(other.durability_),
      fd_(std::exchange(other.fd_, -1)),
      last_seq_(other.last_seq_),
      entry_ends_(std::move(other.entry_ends_)),
      positioned_(other.positioned_) {}

CommandLog& CommandLog::operator=(CommandLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    durability_ = other.durability_;
    fd_ = std::exchange(other.fd_, -1);
    last_seq_ = other.last_seq_;
    entry_ends_ = std::move(other.entry_ends_);
    positioned_ = other.positioned_;
  }
  return *this;
}

CommandLog::~CommandLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t CommandLog::append(const LogEntry& entry) {
  if (entry.seq != last_seq_ + 1)
    throw CmError(ErrorCode::kSequenceGap,
                  "expected seq " + std::to_string(last_seq_ + 1) + ", got " + std::to_string(entry.seq));
  if (!positioned_) truncate_after(last_seq_);
  const std::string payload =
      json{{"seq", entry.seq}, {"project", entry.project}, {"ts", entry.timestamp_ms}, {"command", entry.command}}.dump();
  std::string frame;
  frame.reserve(kHeader + payload.size());
  put_u32(frame, static_cast<std::uint32_t>(payload.size()));
  put_u32(frame, crc_of(payload));
  frame += payload;

  std::size_t written = 0;
  while (written < frame.size()) {
    const auto n = ::write(fd_, frame.data() + written, frame.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw CmError(ErrorCode::kIo, "append to " + path_.string() + " failed: " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (durability_ == Durability::kFsync && ::fdatasync(fd_) != 0)
    throw CmError(ErrorCode::kIo, "sync of " + path_.string() + " failed: " + std::strerror(errno));
  entry_ends_.push_back((entry_ends_.empty() ? 0 : entry_ends_.back()) + frame.size());
  last_seq_ = entry.seq;
  return last_seq_;
}

CommandLog::ReadResult CommandLog::read(const fs::path& path) {
  ReadResult result;
  if (!fs::exists(path)) return result;
  const std::string data = read_file(path);
  std::size_t at = 0;
  std::uint64_t expected = 1;
  const auto fail = [&](std::string reason) { result.corrupt = CorruptEntry{expected, std::move(reason)}; };

  while (at < data.size()) {
    if (data.size() - at < kHeader) {
      fail("truncated frame header");
      break;
    }
    const std::uint32_t len = get_u32(data, at);
    const std::uint32_t crc = get_u32(data, at + 4);
    if (len > kMaxFrame || data.size() - at - kHeader < len) {
      fail("truncated frame payload");
      break;
    }
    const std::string payload = data.substr(at + kHeader, len);
    if (crc_of(payload) != crc) {
      fail("checksum mismatch");
      break;
    }
    try {
      const json j = json::parse(payload);
      LogEntry entry{j.at("seq").get<std::uint64_t>(), j.at("project").get<std::string>(), j.at("command"),
                     j.at("ts").get<std::int64_t>()};
      if (entry.seq != expected) {
        fail("sequence " + std::to_string(entry.seq) + " out of order");
        break;
      }
      result.entries.push_back(std::move(entry));
    } catch (const json::exception& e) {
      fail(std::string("unreadable payload: ") + e.what());
      break;
    }
    at += kHeader + len;
    result.valid_bytes = at;
    result.entry_ends.push_back(at);
    ++expected;
  }
  return result;
}

ReplayResult replay_entries(const std::string& project, const std::vector<LogEntry>& entries) {
  ReplayResult result{Project(project), 0, std::nullopt};
  for (const auto& entry : entries) {
    try {
      execute(result.project, command_from_json(entry.command));
    } catch (const CmError& e) {
      // Only successful commands are logged, so a failing one means damage.
      result.corrupt = CorruptEntry{entry.seq, std::string("command rejected on replay: ") + e.what()};
      break;
    }
    result.last_seq = entry.seq;
  }
  return result;
}

Snapshot snapshot_of(const BaseVersion& base) {
  Snapshot snap;
  for (const auto& [file, lines] : base.files) {
    auto& out = snap.files[file];
    for (const auto& l : lines) out.push_back(l.text);
  }
  return snap;
}

std::string encode_snapshot(const Snapshot& snapshot, std::uint64_t number, std::optional<std::uint64_t> parent) {
  std::string out = "ucm-snapshot 1\nnumber " + std::to_string(number) + "\nparent " +
                    (parent ? std::to_string(*parent) : std::string("-")) + "\n";
  for (const auto& [file, lines] : snapshot.files) {
    out += "file " + std::to_string(lines.size()) + " " + file.str() + "\n";
    for (const auto& line : lines) {
      out += line;
      out += '\n';
    }
  }
  return out;
}

ArchivedBase decode_snapshot(const std::string& project, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  const auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw CmError(ErrorCode::kCorruptEntry, std::string("snapshot truncated at ") + what);
    return line;
  };
  if (next("header") != "ucm-snapshot 1") throw CmError(ErrorCode::kCorruptEntry, "not a snapshot file");
  ArchivedBase base{project, 0, std::nullopt, {}};
  const auto field = [&](const char* name) {
    const std::string l = next(name);
    const std::string prefix = std::string(name) + " ";
    if (l.rfind(prefix, 0) != 0) throw CmError(ErrorCode::kCorruptEntry, std::string("snapshot lacks ") + name);
    return l.substr(prefix.size());
  };
  try {
    base.number = std::stoull(field("number"));
    const std::string parent = field("parent");
    if (parent != "-") base.parent = std::stoull(parent);
    while (std::getline(in, line)) {
      if (line.rfind("file ", 0) != 0) throw CmError(ErrorCode::kCorruptEntry, "expected a file section");
      const auto space = line.find(' ', 5);
      if (space == std::string::npos) throw CmError(ErrorCode::kCorruptEntry, "malformed file section");
      const std::size_t count = std::stoull(line.substr(5, space - 5));
      auto& lines = base.content.files[FileId(line.substr(space + 1))];
      for (std::size_t i = 0; i < count; ++i) lines.push_back(next("file body"));
    }
  } catch (const std::logic_error& e) {
    if (const auto* cm = dynamic_cast<const CmError*>(&e)) throw *cm;
    throw CmError(ErrorCode::kCorruptEntry, std::string("malformed snapshot number: ") + e.what());
  }
  return base;
}

void export_snapshot(const Snapshot& snapshot, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [file, lines] : snapshot.files) {
    const fs::path path = dir / file.str();
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CmError(ErrorCode::kIo, "cannot write " + path.string());
    for (const auto& line : lines) out << line << '\n';
    if (!out) throw CmError(ErrorCode::kIo, "short write to " + path.string());
  }
}

Snapshot import_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CmError(ErrorCode::kIo, dir.string() + " is not a directory");
  Snapshot snap;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().lexically_relative(dir).generic_string();
    const std::string data = read_file(entry.path());
    auto& lines = snap.files[FileId(name)];
    std::size_t start = 0;
    while (start < data.size()) {
      auto end = data.find('\n', start);
      if (end == std::string::npos) end = data.size();
      std::string line = data.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
      start = end + 1;
    }
  }
  return snap;
}

ProjectStore::ProjectStore(const fs::path& data_dir, const std::string& project, StoreOptions options)
    : project_(project),
      dir_(data_dir / project),
      options_(options),
      log_((fs::create_directories(dir_ / "bases"), dir_ / "log.bin"), options.durability) {
  if (!fs::exists(dir_ / "meta.json")) write_meta(json{{"project", project_}, {"format", 1}, {"created_ms", now_ms()}});
}

ReplayResult ProjectStore::replay() const {
  const auto read = CommandLog::read(dir_ / "log.bin");
  auto result = replay_entries(project_, read.entries);
  if (!result.corrupt) result.corrupt = read.corrupt;
  return result;
}

ReplayResult ProjectStore::recover() {
  auto result = replay();
  if (result.corrupt) log_.truncate_after(result.last_seq);
  for (const auto& [n, base] : result.project.archive())
    if (!fs::exists(snap_path(n))) archive_base(base);
  return result;
}

std::uint64_t ProjectStore::append(const Command& command) {
  return append(LogEntry{log_.last_seq() + 1, project_, command_to_json(command), now_ms()});
}

std::uint64_t ProjectStore::append(const LogEntry& entry) { return log_.append(entry); }

fs::path ProjectStore::snap_path(std::uint64_t number) const {
  return dir_ / "bases" / (std::to_string(number) + ".snap");
}

void ProjectStore::archive_base(const BaseVersion& base) {
  const std::string text = encode_snapshot(snapshot_of(base), base.number, base.parent);
  const fs::path path = snap_path(base.number);
  if (fs::exists(path)) {
    if (read_file(path) == text) return;
    throw CmError(ErrorCode::kDuplicateName, "base version " + std::to_string(base.number) + " already archived");
  }
  write_file_atomic(path, text);
}

ArchivedBase ProjectStore::fetch_base(std::uint64_t number) const {
  const fs::path path = snap_path(number);
  if (!fs::exists(path)) throw CmError(ErrorCode::kVersionUnknown, "no archived base " + std::to_string(number));
  return decode_snapshot(project_, read_file(path));
}

std::vector<std::uint64_t> ProjectStore::archived_numbers() const {
  std::vector<std::uint64_t> out;
  for (const auto& entry : fs::directory_iterator(dir_ / "bases")) {
    if (entry.path().extension() != ".snap") continue;
    try {
      out.push_back(std::stoull(entry.path().stem().string()));
    } catch (const std::logic_error&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

json ProjectStore::meta() const { return json::parse(read_file(dir_ / "meta.json")); }

void ProjectStore::write_meta(const json& meta) { write_file_atomic(dir_ / "meta.json", meta.dump(2) + "\n"); }

std::vector<std::string> ProjectStore::list_projects(const fs::path& data_dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(data_dir)) return out;
  for (const auto& entry : fs::directory_iterator(data_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ucm::store
