#pragma once

// Raster decoding (8-bit binary PGM/PPM, XRT1 tensors) and resampling.
// Decoded images are float tensors [C,H,W] on the 0..255 scale.

#include "xrdl/byte_io.hpp"
#include "xrdl/error.hpp"
#include "xrdl/tensor.hpp"
#include "xrdl/tensor_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>

namespace xrdl {

namespace detail {

class pnm_cursor {
  public:
    pnm_cursor(const bytes& data, const std::string& origin) : data_(data), origin_(origin) {}

    // Skips whitespace and '#' comments, then reads an unsigned decimal.
    std::size_t number() {
        skip_space();
        if (pos_ >= data_.size() || !std::isdigit(data_[pos_])) {
            throw decode_error(origin_ + ": malformed PNM header");
        }
        std::size_t v = 0;
        while (pos_ < data_.size() && std::isdigit(data_[pos_])) {
            v = v * 10 + (data_[pos_++] - '0');
            if (v > (1u << 24)) {
                throw decode_error(origin_ + ": PNM header value out of range");
            }
        }
        return v;
    }

    void single_whitespace() {
        if (pos_ >= data_.size() || !std::isspace(data_[pos_])) {
            throw decode_error(origin_ + ": malformed PNM header");
        }
        ++pos_;
    }

    [[nodiscard]] std::size_t position() const noexcept { return pos_; }

  private:
    void skip_space() {
        while (pos_ < data_.size()) {
            if (std::isspace(data_[pos_])) {
                ++pos_;
            } else if (data_[pos_] == '#') {
                while (pos_ < data_.size() && data_[pos_] != '\n') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    const bytes& data_;
    const std::string& origin_;
    std::size_t pos_ = 2;
};

}  // namespace detail

/// Decodes binary PGM (P5) or PPM (P6) with maxval <= 255. Samples are
/// rescaled to 0..255 when maxval is smaller.
inline tensor32 decode_pnm(const bytes& data, const std::string& origin = "<memory>") {
    if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6')) {
        throw decode_error(origin + ": not a binary PGM/PPM file");
    }
    const std::size_t channels = data[1] == '5' ? 1 : 3;
    detail::pnm_cursor cur(data, origin);
    const std::size_t width = cur.number();
    const std::size_t height = cur.number();
    const std::size_t maxval = cur.number();
    cur.single_whitespace();
    if (width == 0 || height == 0) {
        throw decode_error(origin + ": zero image extent");
    }
    if (maxval == 0 || maxval > 255) {
        throw format_error(origin + ": only 8-bit PNM (maxval 1..255) is supported, got " + std::to_string(maxval));
    }
    const std::size_t n = width * height * channels;
    if (data.size() - cur.position() < n) {
        throw decode_error(origin + ": truncated pixel data");
    }
    tensor32 img({channels, height, width});
    const std::uint8_t* px = data.data() + cur.position();
    const float scale = 255.0f / static_cast<float>(maxval);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                const float v = static_cast<float>(px[(y * width + x) * channels + c]);
                img[(c * height + y) * width + x] = maxval == 255 ? v : v * scale;
            }
        }
    }
    return img;
}

/// Encodes a [1,H,W] or [3,H,W] tensor of 0..255 values as P5/P6 (rounded, clamped).
inline bytes encode_pnm(const tensor32& img) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
        throw shape_error("encode_pnm expects [1|3,H,W], got " + to_string(img.dims()));
    }
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    byte_writer out;
    out.raw((c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n");
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t k = 0; k < c; ++k) {
                const float v = std::clamp(img[(k * h + y) * w + x], 0.0f, 255.0f);
                out.u8(static_cast<std::uint8_t>(std::lround(v)));
            }
        }
    }
    return out.take();
}

inline void save_pnm(const tensor32& img, const std::filesystem::path& path) { atomic_write(path, encode_pnm(img)); }

inline bool has_image_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".pgm" || ext == ".ppm" || ext == ".xrt" || ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Decodes any supported raster into [C,H,W] on the 0..255 scale.
inline tensor32 load_image(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".pgm" || ext == ".ppm") {
        return decode_pnm(read_file(path), path.string());
    }
    if (ext == ".xrt") {
        tensor32 t;
        try {
            t = decode_xrt(read_file(path));
        } catch (const format_error& e) {
            throw decode_error(path.string() + ": " + e.what());
        }
        if (t.rank() == 2) {
            t = t.reshape({1, t.dim(0), t.dim(1)});
        }
        if (t.rank() != 3 || t.size() == 0) {
            throw decode_error(path.string() + ": XRT image must be [H,W] or [C,H,W], got " + to_string(t.dims()));
        }
        for (const float v : t.values()) {
            if (!(v >= 0.0f && v <= 255.0f)) {
                throw decode_error(path.string() + ": XRT pixel values must lie in [0,255]");
            }
        }
        return t;
    }
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
        throw format_error(path.string() + ": no " + ext + " decoder in this build; convert to PGM/PPM");
    }
    throw format_error(path.string() + ": unsupported image format");
}

/// 1 -> 3 channels by replication, 3 -> 1 by ITU-R BT.601 luma.
inline tensor32 convert_channels(const tensor32& img, std::size_t channels) {
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2), area = h * w;
    if (c == channels) {
        return img;
    }
    if (c == 1 && channels == 3) {
        tensor32 out({3, h, w});
        for (std::size_t k = 0; k < 3; ++k) {
            std::copy(img.data(), img.data() + area, out.data() + k * area);
        }
        return out;
    }
    if (c == 3 && channels == 1) {
        tensor32 out({1, h, w});
        for (std::size_t i = 0; i < area; ++i) {
            out[i] = 0.299f * img[i] + 0.587f * img[area + i] + 0.114f * img[2 * area + i];
        }
        return out;
    }
    throw parameter_error("cannot convert " + std::to_string(c) + " channels to " + std::to_string(channels));
}

/// Bilinear resize with half-pixel centers; samples outside the source clamp
/// to the nearest edge.
inline tensor32 resize_bilinear(const tensor32& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3 || out_h == 0 || out_w == 0) {
        throw shape_error("resize_bilinear expects [C,H,W] and a positive target");
    }
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (h == out_h && w == out_w) {
        return img;
    }
    struct tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            const double src = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0,
                                          static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ys = taps(h, out_h);
    const auto xs = taps(w, out_w);
    tensor32 out({c, out_h, out_w});
    for (std::size_t k = 0; k < c; ++k) {
        const float* plane = img.data() + k * h * w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& ty = ys[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& tx = xs[x];
                // a + (b - a) * t is exact when a == b, so constant regions stay constant.
                const double a = plane[ty.lo * w + tx.lo], b = plane[ty.lo * w + tx.hi];
                const double c0 = plane[ty.hi * w + tx.lo], d = plane[ty.hi * w + tx.hi];
                const double top = a + (b - a) * tx.frac;
                const double bottom = c0 + (d - c0) * tx.frac;
                out[(k * out_h + y) * out_w + x] = static_cast<float>(top + (bottom - top) * ty.frac);
            }
        }
    }
    return out;
}

}  // namespace xrdl
