#pragma once

#include "xrdl/error.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace xrdl {

using bytes = std::vector<std::uint8_t>;

/// Little-endian encoder, independent of host byte order.
class byte_writer {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) {
            out_.push_back(static_cast<std::uint8_t>(v >> shift));
        }
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

    [[nodiscard]] const bytes& buffer() const noexcept { return out_; }
    bytes take() { return std::move(out_); }

  private:
    bytes out_;
};

/// Little-endian decoder over a borrowed buffer. Reading past the end throws
/// the error type supplied by the caller's context via `truncated()`.
class byte_reader {
  public:
    byte_reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    [[nodiscard]] std::size_t remaining() const noexcept { return size_ - pos_; }
    [[nodiscard]] std::size_t position() const noexcept { return pos_; }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string raw(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

  private:
    void need(std::size_t n) const {
        if (n > remaining()) {
            throw format_error("unexpected end of data at byte " + std::to_string(pos_));
        }
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open " + path.string());
    }
    bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw io_error("read failed for " + path.string());
    }
    return data;
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw io_error("cannot open " + tmp.string() + " for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw io_error("write failed for " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw io_error("cannot move " + tmp.string() + " to " + path.string());
    }
}

inline void atomic_write(const std::filesystem::path& path, const bytes& content) {
    atomic_write(path, std::string_view(reinterpret_cast<const char*>(content.data()), content.size()));
}

}  // namespace xrdl
