#include "ucm/core/order_key.hpp"

#include <algorithm>
#include <stdexcept>

namespace ucm {

OrderKey::OrderKey(std::vector<std::uint32_t> digits) : digits_(std::move(digits)) {}

OrderKey OrderKey::between(const std::optional<OrderKey>& lo, const std::optional<OrderKey>& hi) {
  if (lo && hi && !(*lo < *hi)) throw std::invalid_argument("order key bounds out of order");
  if ((lo && !lo->valid()) || (hi && !hi->valid())) throw std::invalid_argument("invalid order key bound");

  std::vector<std::uint32_t> out;
  bool bounded = hi.has_value();
  for (std::size_t depth = 0;; ++depth) {
    const std::uint64_t a = (lo && depth < lo->digits_.size()) ? lo->digits_[depth] : 0;
    // While bounded, out equals a prefix of hi that is not all of hi, so hi has this digit.
    const std::uint64_t b = bounded ? hi->digits_.at(depth) : kRadix;
    const std::uint64_t gap = b - a;
    if (gap >= 2) {
      out.push_back(static_cast<std::uint32_t>(gap > 2 * std::uint64_t{kStep} ? a + kStep : a + gap / 2));
      return OrderKey(std::move(out));
    }
    out.push_back(static_cast<std::uint32_t>(a));
    if (a < b) bounded = false;
  }
}

std::string OrderKey::str() const {
  std::string out;
  for (std::size_t i = 0; i < digits_.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(digits_[i]);
  }
  return out;
}

std::strong_ordering OrderKey::operator<=>(const OrderKey& other) const {
  return std::lexicographical_compare_three_way(digits_.begin(), digits_.end(), other.digits_.begin(),
                                                other.digits_.end());
}

}  // namespace ucm
