// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace oocd {

// 64-bit FNV-1a. Used for cache keys, config hashes, data fingerprints and
// mock-backend seeds, so it must never change.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a& update(std::span<const std::uint8_t> bytes) noexcept {
    for (std::uint8_t b : bytes) {
      state_ ^= b;
      state_ *= kPrime;
    }
    return *this;
  }
  Fnv1a& update(std::string_view text) noexcept {
    return update(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  // Little-endian encoding of the integer, independent of host order.
  Fnv1a& update_u64(std::uint64_t v) noexcept {
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return update(std::span<const std::uint8_t>(buf, 8));
  }
  // Field separator so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& field(std::string_view text) noexcept {
    update_u64(text.size());
    return update(text);
  }

  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = kOffset;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::string to_hex64(std::uint64_t value);

}  // namespace oocd
