#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "fedgraph/errors.hpp"

namespace fedgraph {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

/// Append-only little-endian byte sink.
class ByteWriter {
public:
    template <class T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    template <class T>
        requires std::is_arithmetic_v<T>
    void put_span(std::span<const T> vs) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(vs.data());
        buf_.insert(buf_.end(), p, p + vs.size_bytes());
    }

    void put_magic(std::string_view magic) { buf_.insert(buf_.end(), magic.begin(), magic.end()); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader over a byte span.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <class T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    template <class T>
        requires std::is_arithmetic_v<T>
    std::vector<T> get_vector(std::size_t count) {
        if (count > remaining() / sizeof(T)) throw FormatError("truncated input");
        std::vector<T> v(count);
        std::memcpy(v.data(), bytes_.data() + pos_, count * sizeof(T));
        pos_ += count * sizeof(T);
        return v;
    }

    void expect_magic(std::string_view magic) {
        need(magic.size());
        if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0)
            throw FormatError("bad magic, expected '" + std::string(magic) + "'");
        pos_ += magic.size();
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError("truncated input");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace fedgraph
