#pragma once

// XRT1 raw tensor files:
//   "XRT1" | u8 rank | rank x u32 dims (LE) | row-major f32 data (LE)

#include "xrdl/byte_io.hpp"
#include "xrdl/tensor.hpp"

#include <filesystem>
#include <limits>

namespace xrdl {

inline constexpr std::string_view xrt_magic = "XRT1";

inline bytes encode_xrt(const tensor32& t) {
    if (t.rank() > 255) {
        throw shape_error("XRT1 supports rank <= 255");
    }
    byte_writer w;
    w.raw(xrt_magic);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (const std::size_t d : t.dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) {
            throw shape_error("XRT1 extent exceeds 32 bits");
        }
        w.u32(static_cast<std::uint32_t>(d));
    }
    for (const float v : t.values()) {
        w.f32(v);
    }
    return w.take();
}

inline tensor32 decode_xrt(const bytes& data) {
    byte_reader r(data.data(), data.size());
    if (data.size() < 5 || r.raw(4) != xrt_magic) {
        throw format_error("missing XRT1 magic");
    }
    const std::size_t rank = r.u8();
    shape_t dims(rank);
    for (auto& d : dims) {
        d = r.u32();
    }
    const std::size_t n = element_count(dims);
    if (r.remaining() != n * 4) {
        throw format_error("XRT1 payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                           std::to_string(n * 4) + " for shape " + to_string(dims));
    }
    std::vector<float> values(n);
    for (auto& v : values) {
        v = r.f32();
    }
    return tensor32(std::move(dims), std::move(values));
}

inline void save_xrt(const tensor32& t, const std::filesystem::path& path) { atomic_write(path, encode_xrt(t)); }

inline tensor32 load_xrt(const std::filesystem::path& path) { return decode_xrt(read_file(path)); }

}  // namespace xrdl
