#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ucm::net {

// Owning TCP socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  // Returns 0 at end of stream. Throws CmError(kIo) on failure.
  std::size_t read_some(char* buf, std::size_t n);
  void write_all(std::string_view data);

  // Wakes up any thread blocked on this socket without releasing the descriptor.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

struct Listener {
  Socket socket;
  std::uint16_t port = 0;
};

// Port 0 binds an ephemeral port; the chosen one is reported back.
Listener listen_tcp(const std::string& host, std::uint16_t port);
std::optional<Socket> accept_connection(Listener& listener);
Socket connect_tcp(const std::string& host, std::uint16_t port);

// Splits "host:port"; a bare port means 127.0.0.1.
std::pair<std::string, std::uint16_t> parse_address(std::string_view address);

class BufferedReader {
 public:
  explicit BufferedReader(Socket& socket) : socket_(&socket) {}

  // Line without its terminator, nullopt at end of stream. Throws when the line exceeds max.
  std::optional<std::string> read_line(std::size_t max);
  // Exactly n bytes, nullopt when the stream ends first.
  std::optional<std::string> read_exact(std::size_t n);
  // Up to n bytes already buffered or readable right now, without consuming them.
  std::string_view peek(std::size_t n);

  // True when data can be read without blocking, waiting at most `timeout`.
  bool wait_readable(std::chrono::milliseconds timeout);
  bool buffered() const { return pos_ < buf_.size(); }

 private:
  bool fill();
  void compact();

  Socket* socket_;
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace ucm::net
