#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ucm {

// Position of a line within its file: a digit path compared lexicographically
// (a proper prefix sorts first). Generated keys never end in a zero digit, which
// keeps the order dense: between any two distinct keys another key exists.
class OrderKey {
 public:
  static constexpr std::uint64_t kRadix = std::uint64_t{1} << 32;
  static constexpr std::uint32_t kStep = 1u << 16;

  OrderKey() = default;
  explicit OrderKey(std::vector<std::uint32_t> digits);

  // A key strictly between lo and hi. Absent bounds mean the start or end of the file.
  static OrderKey between(const std::optional<OrderKey>& lo, const std::optional<OrderKey>& hi);

  const std::vector<std::uint32_t>& digits() const { return digits_; }
  bool valid() const { return !digits_.empty() && digits_.back() != 0; }
  std::string str() const;

  std::strong_ordering operator<=>(const OrderKey& other) const;
  bool operator==(const OrderKey& other) const = default;

 private:
  std::vector<std::uint32_t> digits_;
};

}  // namespace ucm
