#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ucm/net/socket.hpp"

namespace ucm::net {

struct HttpRequest {
  std::string method;
  std::string target;
  std::map<std::string, std::string> headers;  // lower-cased names

  std::string header(const std::string& name) const;
};

// Request line and headers; nullopt when the peer hangs up first.
std::optional<HttpRequest> read_http_request(BufferedReader& reader);

std::string http_response(int status, std::string_view reason, std::string_view content_type,
                          std::string_view body);

namespace ws {

enum Opcode : std::uint8_t {
  kContinuation = 0x0,
  kText = 0x1,
  kBinary = 0x2,
  kClose = 0x8,
  kPing = 0x9,
  kPong = 0xA,
};

std::string base64(std::string_view bytes);

// Sec-WebSocket-Accept for a client's Sec-WebSocket-Key.
std::string accept_key(std::string_view client_key);

bool is_upgrade(const HttpRequest& request);
std::string upgrade_response(const HttpRequest& request);

// Clients must mask, servers must not.
std::string encode_frame(Opcode opcode, std::string_view payload, bool masked);

struct Frame {
  Opcode opcode = kText;
  bool fin = true;
  std::string payload;
};

[[noreturn]] void throw_protocol(const std::string& what);

// Throws CmError(kInvalid) on protocol violations; nullopt at end of stream.
std::optional<Frame> read_frame(BufferedReader& reader, std::size_t max_payload);

// Reassembles fragmented data frames. Control frames are handed to on_control.
template <class OnControl>
std::optional<std::string> read_message(BufferedReader& reader, std::size_t max_payload, OnControl on_control) {
  std::string message;
  bool started = false;
  for (;;) {
    auto frame = read_frame(reader, max_payload);
    if (!frame) return std::nullopt;
    if (frame->opcode >= kClose) {
      if (!on_control(*frame)) return std::nullopt;
      continue;
    }
    if (!started && frame->opcode == kContinuation) throw_protocol("continuation without a start frame");
    started = true;
    message += frame->payload;
    if (message.size() > max_payload) throw_protocol("message too large");
    if (frame->fin) return message;
  }
}

// Client side of the opening handshake; throws CmError(kIo) when refused.
void client_handshake(Socket& socket, BufferedReader& reader, const std::string& host, const std::string& path);

}  // namespace ws
}  // namespace ucm::net
