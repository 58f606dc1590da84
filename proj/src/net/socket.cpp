#include "ucm/net/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "ucm/core/errors.hpp"

namespace ucm::net {
namespace {

[[noreturn]] void fail(const std::string& what) {
  throw CmError(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

}  // namespace

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Socket::~Socket() { close(); }

std::size_t Socket::read_some(char* buf, std::size_t n) {
  for (;;) {
    const ssize_t got = ::recv(fd_, buf, n, 0);
    if (got >= 0) return static_cast<std::size_t>(got);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    fail("recv");
  }
}

void Socket::write_all(std::string_view data) {
  while (!data.empty()) {
    const ssize_t put = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (put < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    data.remove_prefix(static_cast<std::size_t>(put));
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener listen_tcp(const std::string& host, std::uint16_t port) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) fail("socket");
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw CmError(ErrorCode::kIo, "cannot parse listen address '" + host + "'");
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    fail("bind " + host + ":" + std::to_string(port));
  if (::listen(s.fd(), 64) != 0) fail("listen");

  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return Listener{std::move(s), ntohs(addr.sin_port)};
}

std::optional<Socket> accept_connection(Listener& listener) {
  for (;;) {
    const int fd = ::accept4(listener.socket.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return std::nullopt;  // listener shut down
  }
}

Socket connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0)
    throw CmError(ErrorCode::kIo, "cannot resolve '" + host + "': " + ::gai_strerror(rc));

  std::string last = "no address";
  for (addrinfo* ai = found; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(found);
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return s;
    }
    last = std::strerror(errno);
  }
  ::freeaddrinfo(found);
  throw CmError(ErrorCode::kIo, "cannot connect to " + host + ":" + service + ": " + last);
}

std::pair<std::string, std::uint16_t> parse_address(std::string_view address) {
  std::string host = "127.0.0.1";
  std::string_view port = address;
  if (const auto colon = address.rfind(':'); colon != std::string_view::npos) {
    host = std::string(address.substr(0, colon));
    port = address.substr(colon + 1);
  }
  unsigned long value = 0;
  try {
    std::size_t used = 0;
    value = std::stoul(std::string(port), &used);
    if (used != port.size() || value > 65535) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw CmError(ErrorCode::kInvalid, "bad address '" + std::string(address) + "', expected host:port");
  }
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(value)};
}

bool BufferedReader::fill() {
  compact();
  char chunk[16384];
  const std::size_t got = socket_->read_some(chunk, sizeof chunk);
  if (got == 0) return false;
  buf_.append(chunk, got);
  return true;
}

void BufferedReader::compact() {
  if (pos_ > 0 && pos_ >= buf_.size() / 2) {
    buf_.erase(0, pos_);
    pos_ = 0;
  }
}

std::optional<std::string> BufferedReader::read_line(std::size_t max) {
  std::size_t scanned = pos_;
  for (;;) {
    const auto nl = buf_.find('\n', scanned);
    if (nl != std::string::npos) {
      std::string line = buf_.substr(pos_, nl - pos_);
      pos_ = nl + 1;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (buf_.size() - pos_ > max) throw CmError(ErrorCode::kInvalid, "line longer than " + std::to_string(max));
    const std::size_t offset = buf_.size() - pos_;
    if (!fill()) return std::nullopt;
    scanned = pos_ + offset;
  }
}

std::optional<std::string> BufferedReader::read_exact(std::size_t n) {
  while (buf_.size() - pos_ < n)
    if (!fill()) return std::nullopt;
  std::string out = buf_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string_view BufferedReader::peek(std::size_t n) {
  while (buf_.size() - pos_ < n)
    if (!fill()) break;
  return std::string_view(buf_).substr(pos_, n);
}

bool BufferedReader::wait_readable(std::chrono::milliseconds timeout) {
  if (buffered()) return true;
  pollfd p{socket_->fd(), POLLIN, 0};
  for (;;) {
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc >= 0) return rc > 0;
    if (errno != EINTR) fail("poll");
  }
}

}  // namespace ucm::net
