#include "ucm/net/websocket.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cctype>
#include <vector>

#include "ucm/core/errors.hpp"

namespace ucm::net {
namespace {

constexpr std::size_t kMaxHeaderBytes = 16384;
constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return std::string(s);
}

bool has_token(const std::string& list, std::string_view token) {
  std::size_t start = 0;
  const std::string l = lower(list);
  while (start <= l.size()) {
    const auto comma = l.find(',', start);
    const auto item = trim(std::string_view(l).substr(start, comma == std::string::npos ? l.npos : comma - start));
    if (item == token) return true;
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return false;
}

}  // namespace

std::string HttpRequest::header(const std::string& name) const {
  auto it = headers.find(lower(name));
  return it == headers.end() ? std::string() : it->second;
}

std::optional<HttpRequest> read_http_request(BufferedReader& reader) {
  auto first = reader.read_line(kMaxHeaderBytes);
  if (!first) return std::nullopt;
  HttpRequest req;
  const auto sp1 = first->find(' ');
  const auto sp2 = first->find(' ', sp1 == std::string::npos ? sp1 : sp1 + 1);
  if (sp1 == std::string::npos || sp2 == std::string::npos)
    throw CmError(ErrorCode::kInvalid, "malformed request line");
  req.method = first->substr(0, sp1);
  req.target = first->substr(sp1 + 1, sp2 - sp1 - 1);

  std::size_t total = first->size();
  for (;;) {
    auto line = reader.read_line(kMaxHeaderBytes);
    if (!line) return std::nullopt;
    if (line->empty()) break;
    total += line->size();
    if (total > kMaxHeaderBytes) throw CmError(ErrorCode::kInvalid, "request headers too large");
    const auto colon = line->find(':');
    if (colon == std::string::npos) throw CmError(ErrorCode::kInvalid, "malformed header");
    req.headers[lower(line->substr(0, colon))] = trim(std::string_view(*line).substr(colon + 1));
  }
  return req;
}

std::string http_response(int status, std::string_view reason, std::string_view content_type,
                          std::string_view body) {
  std::string out = "HTTP/1.1 " + std::to_string(status) + " " + std::string(reason) + "\r\n";
  out += "Content-Type: " + std::string(content_type) + "\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  out += "Connection: close\r\n\r\n";
  out += body;
  return out;
}

namespace ws {

void throw_protocol(const std::string& what) { throw CmError(ErrorCode::kInvalid, "websocket: " + what); }

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string accept_key(std::string_view client_key) {
  const std::string input = std::string(client_key) + std::string(kGuid);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw CmError(ErrorCode::kIo, "sha1 failed");
  return base64(std::string_view(reinterpret_cast<const char*>(digest), len));
}

bool is_upgrade(const HttpRequest& request) {
  return request.method == "GET" && has_token(request.header("connection"), "upgrade") &&
         lower(request.header("upgrade")) == "websocket" && !request.header("sec-websocket-key").empty();
}

std::string upgrade_response(const HttpRequest& request) {
  return "HTTP/1.1 101 Switching Protocols\r\n"
         "Upgrade: websocket\r\n"
         "Connection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         accept_key(request.header("sec-websocket-key")) + "\r\n\r\n";
}

std::string encode_frame(Opcode opcode, std::string_view payload, bool masked) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | opcode));
  const std::uint8_t mask_bit = masked ? 0x80 : 0;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xFF));
  }
  if (!masked) {
    out.append(payload);
    return out;
  }
  unsigned char key[4];
  if (RAND_bytes(key, sizeof key) != 1) throw CmError(ErrorCode::kIo, "no randomness for the frame mask");
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

std::optional<Frame> read_frame(BufferedReader& reader, std::size_t max_payload) {
  auto head = reader.read_exact(2);
  if (!head) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>((*head)[0]);
  const auto b1 = static_cast<std::uint8_t>((*head)[1]);
  if (b0 & 0x70) throw_protocol("reserved bits set");
  Frame frame;
  frame.fin = (b0 & 0x80) != 0;
  frame.opcode = static_cast<Opcode>(b0 & 0x0F);
  switch (frame.opcode) {
    case kContinuation:
    case kText:
    case kBinary:
    case kClose:
    case kPing:
    case kPong:
      break;
    default:
      throw_protocol("unknown opcode");
  }
  const bool masked = (b1 & 0x80) != 0;
  std::uint64_t len = b1 & 0x7F;
  if (len == 126 || len == 127) {
    auto ext = reader.read_exact(len == 126 ? 2 : 8);
    if (!ext) return std::nullopt;
    len = 0;
    for (char c : *ext) len = (len << 8) | static_cast<std::uint8_t>(c);
  }
  if (frame.opcode >= kClose && (len > 125 || !frame.fin)) throw_protocol("bad control frame");
  if (len > max_payload) throw_protocol("frame too large");
  std::string key;
  if (masked) {
    auto k = reader.read_exact(4);
    if (!k) return std::nullopt;
    key = *k;
  }
  auto payload = reader.read_exact(static_cast<std::size_t>(len));
  if (!payload) return std::nullopt;
  if (masked)
    for (std::size_t i = 0; i < payload->size(); ++i) (*payload)[i] = static_cast<char>((*payload)[i] ^ key[i % 4]);
  frame.payload = std::move(*payload);
  return frame;
}

void client_handshake(Socket& socket, BufferedReader& reader, const std::string& host, const std::string& path) {
  unsigned char nonce[16];
  if (RAND_bytes(nonce, sizeof nonce) != 1) throw CmError(ErrorCode::kIo, "no randomness for the handshake");
  const std::string key = base64(std::string_view(reinterpret_cast<const char*>(nonce), sizeof nonce));
  socket.write_all("GET " + path + " HTTP/1.1\r\nHost: " + host +
                   "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                   "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  auto status = reader.read_line(kMaxHeaderBytes);
  if (!status) throw CmError(ErrorCode::kIo, "connection closed during handshake");
  if (status->find(" 101 ") == std::string::npos) throw CmError(ErrorCode::kIo, "upgrade refused: " + *status);
  std::string accept;
  for (;;) {
    auto line = reader.read_line(kMaxHeaderBytes);
    if (!line) throw CmError(ErrorCode::kIo, "connection closed during handshake");
    if (line->empty()) break;
    const auto colon = line->find(':');
    if (colon != std::string::npos && lower(line->substr(0, colon)) == "sec-websocket-accept")
      accept = trim(std::string_view(*line).substr(colon + 1));
  }
  if (accept != accept_key(key)) throw CmError(ErrorCode::kIo, "bad Sec-WebSocket-Accept");
}

}  // namespace ws
}  // namespace ucm::net
