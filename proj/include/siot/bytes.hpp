#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "siot/errors.hpp"

namespace siot {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);  // throws ParseError

std::string base64_encode(ByteView bytes);
Bytes base64_decode(std::string_view text);  // throws ParseError

// Big-endian fixed-width writer used by every wire format in the project.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void raw(std::string_view s) { raw(as_bytes(s)); }

    const Bytes& bytes() const& { return out_; }
    Bytes take() && { return std::move(out_); }
    std::size_t size() const { return out_.size(); }

  private:
    void put(std::uint64_t v, int width) {
        for (int i = width - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes out_;
};

// Big-endian reader; every short read throws MalformedPayload.
class ByteReader {
  public:
    explicit ByteReader(ByteView data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    ByteView raw(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }

  private:
    void need(std::size_t n) const {
        if (remaining() < n) throw MalformedPayload("truncated input");
    }
    std::uint64_t get(std::size_t width) {
        need(width);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
        pos_ += width;
        return v;
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

}  // namespace siot
