#pragma once

#include <cstdint>
#include <string_view>

#include <json.hpp>

#include "ucm/core/errors.hpp"
#include "ucm/core/types.hpp"

namespace ucm::net {

inline constexpr std::size_t kMaxMessageBytes = std::size_t{16} << 20;

// {"type", "seq", "payload"}; server-initiated events use seq 0.
nlohmann::json message(std::string_view type, std::uint64_t seq, nlohmann::json payload = nlohmann::json::object());

// {"code", "detail"} plus "conflicts" for a ConflictError.
nlohmann::json error_payload(const CmError& error);
// Rethrows an error reply as the exception the server raised (ConflictError keeps its conflicts).
[[noreturn]] void throw_error_payload(const nlohmann::json& payload);

// Per-line delta turning `before` into `after`:
//   {"upsert": [AnnotatedLine + "after": <previous line id or null>], "remove": [<line id>]}
// Lines never change relative order, so upserts only need an anchor for lines new to the view.
nlohmann::json render_delta(const AnnotatedDocument& before, const AnnotatedDocument& after);
bool delta_empty(const nlohmann::json& delta);

// Applies removes, then upserts in order. Throws CmError(kInvalid) if an anchor is missing.
void apply_delta(AnnotatedDocument& doc, const nlohmann::json& delta);

}  // namespace ucm::net
