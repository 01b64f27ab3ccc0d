#include "siot/hash.hpp"

#include <algorithm>
#include <bit>
#include <limits>

namespace siot {

namespace {

constexpr std::array<std::uint32_t, 64> kRoundConstants = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
};

constexpr std::uint32_t ch(std::uint32_t x, std::uint32_t y, std::uint32_t z) { return (x & y) ^ (~x & z); }
constexpr std::uint32_t maj(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    return (x & y) ^ (x & z) ^ (y & z);
}
constexpr std::uint32_t big_sigma0(std::uint32_t x) {
    return std::rotr(x, 2) ^ std::rotr(x, 13) ^ std::rotr(x, 22);
}
constexpr std::uint32_t big_sigma1(std::uint32_t x) {
    return std::rotr(x, 6) ^ std::rotr(x, 11) ^ std::rotr(x, 25);
}
constexpr std::uint32_t small_sigma0(std::uint32_t x) { return std::rotr(x, 7) ^ std::rotr(x, 18) ^ (x >> 3); }
constexpr std::uint32_t small_sigma1(std::uint32_t x) { return std::rotr(x, 17) ^ std::rotr(x, 19) ^ (x >> 10); }

void compress_into(ChainingValue& h, const MessageBlock& block) {
    std::array<std::uint32_t, 64> w;
    std::copy(block.words.begin(), block.words.end(), w.begin());
    for (std::size_t t = 16; t < 64; ++t) {
        w[t] = small_sigma1(w[t - 2]) + w[t - 7] + small_sigma0(w[t - 15]) + w[t - 16];
    }

    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    std::uint32_t e = h[4], f = h[5], g = h[6], hh = h[7];
    for (std::size_t t = 0; t < 64; ++t) {
        const std::uint32_t t1 = hh + big_sigma1(e) + ch(e, f, g) + kRoundConstants[t] + w[t];
        const std::uint32_t t2 = big_sigma0(a) + maj(a, b, c);
        hh = g;
        g = f;
        f = e;
        e = d + t1;
        d = c;
        c = b;
        b = a;
        a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
}

constexpr std::uint64_t kMaxOctets = std::numeric_limits<std::uint64_t>::max() / 8;

// true iff `bits_so_far + 8 * octets` stays below 2^64
bool fits_length(std::uint64_t bits_so_far, std::uint64_t octets) {
    if (octets > kMaxOctets) return false;
    return std::numeric_limits<std::uint64_t>::max() - bits_so_far >= octets * 8;
}

}  // namespace

Digest256 Digest256::from_bytes(ByteView bytes) {
    if (bytes.size() != kDigestBytes) throw ParseError("digest must be exactly 32 octets");
    Storage s;
    std::copy(bytes.begin(), bytes.end(), s.begin());
    return Digest256(s);
}

Digest256 Digest256::parse(std::string_view text) {
    std::string hex;
    hex.reserve(64);
    if (text.size() == 71) {
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (i % 9 == 8) {
                if (text[i] != '-') throw ParseError("digest groups must be separated by '-'");
            } else {
                hex.push_back(text[i]);
            }
        }
    } else if (text.size() == 64) {
        hex.assign(text);
    } else {
        throw ParseError("digest text must be 64 hex digits or 8 dash-separated groups");
    }
    return from_bytes(from_hex(hex));
}

std::string format_digest(const Digest256& d) {
    const std::string hex = to_hex(d.view());
    std::string out;
    out.reserve(71);
    for (std::size_t g = 0; g < 8; ++g) {
        if (g) out.push_back('-');
        out.append(hex, g * 8, 8);
    }
    return out;
}

MessageBlock MessageBlock::load(ByteView octets) {
    if (octets.size() != kBlockBytes) throw ParseError("a message block is exactly 64 octets");
    MessageBlock b;
    for (std::size_t i = 0; i < 16; ++i) {
        b.words[i] = (std::uint32_t{octets[4 * i]} << 24) | (std::uint32_t{octets[4 * i + 1]} << 16) |
                     (std::uint32_t{octets[4 * i + 2]} << 8) | std::uint32_t{octets[4 * i + 3]};
    }
    return b;
}

Bytes pad(ByteView message) {
    if (!fits_length(0, message.size())) throw MessageTooLong("message length must be below 2^64 bits");
    const std::uint64_t bit_len = std::uint64_t{message.size()} * 8;
    // 1 marker octet + 8 length octets, rounded up to the block size
    const std::size_t padded = (message.size() + 1 + 8 + kBlockBytes - 1) / kBlockBytes * kBlockBytes;
    Bytes out(padded, 0);
    std::copy(message.begin(), message.end(), out.begin());
    out[message.size()] = 0x80;
    for (int i = 0; i < 8; ++i) out[padded - 1 - i] = static_cast<std::uint8_t>(bit_len >> (8 * i));
    return out;
}

HashState compress(const HashState& state, const MessageBlock& block) {
    HashState next = state;
    compress_into(next.chaining_value, block);
    return next;
}

HashState update(HashState state, ByteView data) {
    if (!fits_length(state.total_bits, data.size())) {
        throw MessageTooLong("total message length must stay below 2^64 bits");
    }
    state.total_bits += std::uint64_t{data.size()} * 8;

    std::size_t pos = 0;
    if (state.pending_len > 0) {
        const std::size_t take = std::min<std::size_t>(kBlockBytes - state.pending_len, data.size());
        std::copy_n(data.begin(), take, state.pending.begin() + state.pending_len);
        state.pending_len = static_cast<std::uint8_t>(state.pending_len + take);
        pos = take;
        if (state.pending_len < kBlockBytes) return state;
        compress_into(state.chaining_value, MessageBlock::load(state.pending));
        state.pending_len = 0;
    }
    for (; pos + kBlockBytes <= data.size(); pos += kBlockBytes) {
        compress_into(state.chaining_value, MessageBlock::load(data.subspan(pos, kBlockBytes)));
    }
    const std::size_t tail = data.size() - pos;
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(pos), tail, state.pending.begin());
    state.pending_len = static_cast<std::uint8_t>(tail);
    return state;
}

Digest256 finalize(const HashState& state) {
    // The buffered tail is padded with the length of the whole message, not
    // of the tail, so pad() cannot be reused directly here.
    std::array<std::uint8_t, 2 * kBlockBytes> tail{};
    std::copy_n(state.pending.begin(), state.pending_len, tail.begin());
    tail[state.pending_len] = 0x80;
    const std::size_t used = state.pending_len + 1u + 8u <= kBlockBytes ? kBlockBytes : 2 * kBlockBytes;
    for (int i = 0; i < 8; ++i) tail[used - 1 - i] = static_cast<std::uint8_t>(state.total_bits >> (8 * i));

    ChainingValue h = state.chaining_value;
    for (std::size_t off = 0; off < used; off += kBlockBytes) {
        compress_into(h, MessageBlock::load(ByteView(tail).subspan(off, kBlockBytes)));
    }

    Digest256::Storage out;
    for (std::size_t i = 0; i < 8; ++i) {
        out[4 * i] = static_cast<std::uint8_t>(h[i] >> 24);
        out[4 * i + 1] = static_cast<std::uint8_t>(h[i] >> 16);
        out[4 * i + 2] = static_cast<std::uint8_t>(h[i] >> 8);
        out[4 * i + 3] = static_cast<std::uint8_t>(h[i]);
    }
    return Digest256(out);
}

Digest256 digest_of(ByteView message) { return finalize(update(HashState{}, message)); }

bool hash_self_test() {
    static const Digest256 expected =
        Digest256::parse("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    return digest_of(std::string_view("abc")) == expected;
}

}  // namespace siot
