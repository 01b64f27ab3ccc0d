#pragma once

// SHA-256 (FIPS 180-4), written as the pad / block / compress / finalize
// pipeline with value-semantic state so every intermediate can be inspected.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "siot/bytes.hpp"

namespace siot {

inline constexpr std::size_t kBlockBytes = 64;
inline constexpr std::size_t kDigestBytes = 32;

class Digest256 {
  public:
    using Storage = std::array<std::uint8_t, kDigestBytes>;

    constexpr Digest256() = default;
    constexpr explicit Digest256(const Storage& bytes) : bytes_(bytes) {}

    // Accepts the dash-grouped display form or 64 contiguous hex digits.
    static Digest256 parse(std::string_view text);
    static Digest256 from_bytes(ByteView bytes);  // requires exactly 32 octets

    const Storage& bytes() const { return bytes_; }
    ByteView view() const { return bytes_; }

    friend bool operator==(const Digest256&, const Digest256&) = default;

  private:
    Storage bytes_{};
};

/// 64 lowercase hex digits in 8 dash-separated groups of 8.
std::string format_digest(const Digest256& d);
inline Digest256 parse_digest(std::string_view text) { return Digest256::parse(text); }

/// Sixteen big-endian words of one 512-bit block.
struct MessageBlock {
    std::array<std::uint32_t, 16> words{};

    static MessageBlock load(ByteView octets);  // requires exactly 64 octets
    friend bool operator==(const MessageBlock&, const MessageBlock&) = default;
};

using ChainingValue = std::array<std::uint32_t, 8>;

inline constexpr ChainingValue kInitialHashValue = {
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
};

struct HashState {
    ChainingValue chaining_value = kInitialHashValue;
    std::uint64_t total_bits = 0;
    std::array<std::uint8_t, kBlockBytes> pending{};
    std::uint8_t pending_len = 0;

    friend bool operator==(const HashState&, const HashState&) = default;
};

/// Message ‖ 0x80 ‖ zeros ‖ 64-bit big-endian bit length, shortest multiple of 64 octets.
Bytes pad(ByteView message);

/// One application of the 64-round compression function.  Only the chaining
/// value changes; the counters and buffer are carried through untouched.
HashState compress(const HashState& state, const MessageBlock& block);

HashState update(HashState state, ByteView data);
Digest256 finalize(const HashState& state);

Digest256 digest_of(ByteView message);
inline Digest256 digest_of(std::string_view message) { return digest_of(as_bytes(message)); }

/// Hashes "abc" and compares with the published vector.  Guards the literal
/// constant tables.
bool hash_self_test();

}  // namespace siot
