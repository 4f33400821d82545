#pragma once

// Dataset discovery, deterministic splitting, preprocessing, augmentation
// and minibatch assembly.

#include "xrdl/error.hpp"
#include "xrdl/image.hpp"
#include "xrdl/rng.hpp"
#include "xrdl/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

namespace xrdl {

enum class split_kind { train, valid, test };

inline const char* to_string(split_kind s) {
    switch (s) {
        case split_kind::train: return "train";
        case split_kind::valid: return "valid";
        case split_kind::test: return "test";
    }
    return "?";
}

inline split_kind split_from_string(const std::string& s) {
    if (s == "train") return split_kind::train;
    if (s == "valid") return split_kind::valid;
    if (s == "test") return split_kind::test;
    throw usage_error("unknown split '" + s + "' (expected train, valid or test)");
}

struct sample_ref {
    std::filesystem::path path;
    std::size_t label = 0;

    friend bool operator==(const sample_ref&, const sample_ref&) = default;
};

struct dataset_manifest {
    std::vector<std::string> class_names;
    std::map<split_kind, std::vector<sample_ref>> splits;

    [[nodiscard]] bool has(split_kind s) const { return splits.count(s) != 0; }

    [[nodiscard]] const std::vector<sample_ref>& split(split_kind s) const {
        static const std::vector<sample_ref> none;
        auto it = splits.find(s);
        return it == splits.end() ? none : it->second;
    }

    /// Items per class for one split.
    [[nodiscard]] std::vector<std::size_t> class_counts(split_kind s) const {
        std::vector<std::size_t> counts(class_names.size(), 0);
        for (const auto& item : split(s)) {
            ++counts[item.label];
        }
        return counts;
    }

    friend bool operator==(const dataset_manifest&, const dataset_manifest&) = default;
};

/// Reads root/{train,test[,valid]}/<Class>/<images>. Class indices are the
/// lexicographic rank of the class directory name; files are sorted by path.
inline dataset_manifest scan_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw ingestion_error("dataset root " + root.string() + " does not exist or is not a directory");
    }
    std::map<split_kind, std::map<std::string, std::vector<fs::path>>> found;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) {
            continue;
        }
        const std::string name = entry.path().filename().string();
        if (name != "train" && name != "valid" && name != "test") {
            continue;
        }
        auto& classes = found[split_from_string(name)];
        for (const auto& cls : fs::directory_iterator(entry.path())) {
            if (!cls.is_directory()) {
                continue;
            }
            auto& files = classes[cls.path().filename().string()];
            for (const auto& f : fs::directory_iterator(cls.path())) {
                if (f.is_regular_file() && has_image_extension(f.path())) {
                    files.push_back(f.path());
                }
            }
        }
    }
    if (found.empty()) {
        throw ingestion_error(root.string() + " has no train/valid/test split directories");
    }

    std::set<std::string> all;
    for (const auto& [split, classes] : found) {
        for (const auto& [cls, files] : classes) {
            all.insert(cls);
        }
    }
    if (all.empty()) {
        throw ingestion_error(root.string() + " contains zero class directories");
    }
    std::string mismatch;
    for (const auto& [split, classes] : found) {
        for (const auto& cls : all) {
            if (!classes.count(cls)) {
                mismatch += std::string(" ") + to_string(split) + " lacks '" + cls + "';";
            }
        }
    }
    if (!mismatch.empty()) {
        throw ingestion_error("class sets differ across splits:" + mismatch);
    }

    dataset_manifest m;
    m.class_names.assign(all.begin(), all.end());
    for (auto& [split, classes] : found) {
        auto& items = m.splits[split];
        for (std::size_t label = 0; label < m.class_names.size(); ++label) {
            for (auto& p : classes[m.class_names[label]]) {
                items.push_back({p, label});
            }
        }
        std::sort(items.begin(), items.end(), [](const sample_ref& a, const sample_ref& b) { return a.path < b.path; });
    }
    return m;
}

using split_ratios = std::array<double, 3>;

inline void check_ratios(const split_ratios& r) {
    for (const double v : r) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw parameter_error("split ratios must be non-negative");
        }
    }
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
        throw parameter_error("split ratios must sum to 1");
    }
}

/// Seeded Fisher-Yates shuffle, then cuts at round(cumulative_ratio * N).
template <typename Item>
std::array<std::vector<Item>, 3> split_dataset(std::vector<Item> items, const split_ratios& ratios,
                                               std::uint64_t seed) {
    check_ratios(ratios);
    rng gen(seed);
    gen.shuffle(items);
    const double n = static_cast<double>(items.size());
    const auto cut1 = std::min<std::size_t>(static_cast<std::size_t>(std::llround(ratios[0] * n)), items.size());
    const auto cut2 = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround((ratios[0] + ratios[1]) * n)),
                                              cut1, items.size());
    std::array<std::vector<Item>, 3> out;
    out[0].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(cut1));
    out[1].assign(items.begin() + static_cast<std::ptrdiff_t>(cut1), items.begin() + static_cast<std::ptrdiff_t>(cut2));
    out[2].assign(items.begin() + static_cast<std::ptrdiff_t>(cut2), items.end());
    return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct preprocess_config {
    std::size_t height = 224;
    std::size_t width = 224;
    std::size_t channels = 1;
    static constexpr float normalize_divisor = 255.0f;

    void validate() const {
        if (height == 0 || width == 0) {
            throw parameter_error("target size must be positive");
        }
        if (channels != 1 && channels != 3) {
            throw parameter_error("channels must be 1 or 3");
        }
    }
};

/// Decode, convert channels, bilinear resize, divide by 255. Values land in [0,1].
inline tensor32 load_and_preprocess(const std::filesystem::path& path, const preprocess_config& config) {
    config.validate();
    tensor32 img = resize_bilinear(convert_channels(load_image(path), config.channels), config.height, config.width);
    for (auto& v : img.values()) {
        v = std::clamp(v / preprocess_config::normalize_divisor, 0.0f, 1.0f);
    }
    return img;
}

// ---------------------------------------------------------------------------
// Augmentation

struct augment_config {
    double rotation_degrees = 15.0;
    double flip_prob = 0.5;
    double zoom_min = 0.9;
    double zoom_max = 1.1;
    double shift_fraction = 0.1;

    /// All transforms disabled.
    static augment_config none() { return {0.0, 0.0, 1.0, 1.0, 0.0}; }

    void validate() const {
        if (!(rotation_degrees >= 0.0 && rotation_degrees <= 180.0)) {
            throw parameter_error("augment rotation must lie in [0, 180] degrees");
        }
        if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
            throw parameter_error("augment flip probability must lie in [0, 1]");
        }
        if (!(zoom_min > 0.0 && zoom_min <= 1.0 && zoom_max >= 1.0 && std::isfinite(zoom_max))) {
            throw parameter_error("augment zoom range must satisfy 0 < min <= 1 <= max");
        }
        if (!(shift_fraction >= 0.0 && shift_fraction < 1.0)) {
            throw parameter_error("augment shift fraction must lie in [0, 1)");
        }
    }
};

inline tensor32 horizontal_flip(const tensor32& img) {
    const std::size_t planes = img.dim(0) * img.dim(1), w = img.dim(2);
    tensor32 out(img.dims());
    for (std::size_t r = 0; r < planes; ++r) {
        for (std::size_t x = 0; x < w; ++x) {
            out[r * w + x] = img[r * w + (w - 1 - x)];
        }
    }
    return out;
}

namespace detail {

// Bilinear sample with zero fill outside the image.
inline float sample_zero_fill(const float* plane, std::size_t h, std::size_t w, double y, double x) {
    const double fy = std::floor(y), fx = std::floor(x);
    const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
    const double ty = y - fy, tx = x - fx;
    auto at = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) -> double {
        if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) {
            return 0.0;
        }
        return plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
    };
    const double top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
    const double bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
    return static_cast<float>(top * (1.0 - ty) + bottom * ty);
}

// Inverse-maps every output pixel through `source_of(y, x) -> (sy, sx)`.
template <typename Map>
tensor32 remap(const tensor32& img, Map&& source_of) {
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    tensor32 out(img.dims());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto [sy, sx] = source_of(static_cast<double>(y), static_cast<double>(x));
            for (std::size_t k = 0; k < c; ++k) {
                out[(k * h + y) * w + x] = sample_zero_fill(img.data() + k * h * w, h, w, sy, sx);
            }
        }
    }
    return out;
}

}  // namespace detail

/// Random rotation, horizontal flip, zoom about the center and shift, in
/// that order; zero fill; output clamped to [0,1]. Always consumes exactly
/// five draws from `gen` so streams stay aligned whatever the config.
inline tensor32 augment(const tensor32& image, const augment_config& config, rng& gen) {
    config.validate();
    if (image.rank() != 3) {
        throw shape_error("augment expects [C,H,W], got " + to_string(image.dims()));
    }
    const double angle_deg = gen.uniform(-config.rotation_degrees, config.rotation_degrees);
    const bool flip = gen.bernoulli(config.flip_prob);
    const double zoom = gen.uniform(config.zoom_min, config.zoom_max);
    const double shift_y = gen.uniform(-config.shift_fraction, config.shift_fraction) * static_cast<double>(image.dim(1));
    const double shift_x = gen.uniform(-config.shift_fraction, config.shift_fraction) * static_cast<double>(image.dim(2));

    const double cy = (static_cast<double>(image.dim(1)) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.dim(2)) - 1.0) / 2.0;
    tensor32 out = image;
    if (angle_deg != 0.0) {
        const double a = angle_deg * std::numbers::pi / 180.0;
        const double ca = std::cos(a), sa = std::sin(a);
        out = detail::remap(out, [&](double y, double x) {
            const double dy = y - cy, dx = x - cx;
            return std::pair{cy - sa * dx + ca * dy, cx + ca * dx + sa * dy};
        });
    }
    if (flip) {
        out = horizontal_flip(out);
    }
    if (zoom != 1.0) {
        out = detail::remap(out, [&](double y, double x) {
            return std::pair{cy + (y - cy) / zoom, cx + (x - cx) / zoom};
        });
    }
    if (shift_y != 0.0 || shift_x != 0.0) {
        out = detail::remap(out, [&](double y, double x) { return std::pair{y - shift_y, x - shift_x}; });
    }
    for (auto& v : out.values()) {
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batching

/// Preprocessed images held in memory with their labels.
struct sample_set {
    std::vector<tensor32> images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    [[nodiscard]] std::size_t size() const noexcept { return images.size(); }
};

inline sample_set load_samples(const std::vector<sample_ref>& items, const preprocess_config& config,
                               std::size_t num_classes) {
    sample_set s;
    s.num_classes = num_classes;
    s.images.reserve(items.size());
    for (const auto& item : items) {
        if (item.label >= num_classes) {
            throw ingestion_error(item.path.string() + ": label " + std::to_string(item.label) + " out of range");
        }
        s.images.push_back(load_and_preprocess(item.path, config));
        s.labels.push_back(item.label);
    }
    return s;
}

struct batch {
    tensor32 images;  // [N,C,H,W]
    tensor32 labels;  // one-hot [N,num_classes]
    std::vector<std::size_t> label_indices;

    [[nodiscard]] std::size_t size() const noexcept { return label_indices.size(); }
};

/// ceil(N / batch_size) batches in manifest order, or in a seeded shuffled
/// order. With `augmentation`, item i of the epoch uses its own generator
/// derived from one epoch seed, so the result does not depend on processing order.
inline std::vector<batch> make_batches(const sample_set& samples, std::size_t batch_size, bool shuffle, rng& gen,
                                       const augment_config* augmentation = nullptr) {
    if (batch_size == 0) {
        throw parameter_error("batch size must be >= 1");
    }
    if (samples.size() == 0) {
        throw ingestion_error("cannot batch an empty split");
    }
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    if (shuffle) {
        gen.shuffle(order);
    }
    const std::uint64_t epoch_seed = augmentation ? gen.next_u64() : 0;
    const shape_t item_dims = samples.images.front().dims();
    const std::size_t item_size = element_count(item_dims);

    std::vector<batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, order.size() - start);
        shape_t dims{n};
        dims.insert(dims.end(), item_dims.begin(), item_dims.end());
        batch b{tensor32(dims), tensor32({n, samples.num_classes}), {}};
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = order[start + k];
            const tensor32* img = &samples.images[idx];
            if (img->dims() != item_dims) {
                throw shape_error("sample " + std::to_string(idx) + " has shape " + to_string(img->dims()) +
                                  ", expected " + to_string(item_dims));
            }
            tensor32 augmented;
            if (augmentation) {
                rng item_rng(rng::derive(epoch_seed, idx));
                augmented = augment(*img, *augmentation, item_rng);
                img = &augmented;
            }
            std::copy(img->data(), img->data() + item_size, b.images.data() + k * item_size);
            b.labels[k * samples.num_classes + samples.labels[idx]] = 1.0f;
            b.label_indices.push_back(samples.labels[idx]);
        }
        out.push_back(std::move(b));
    }
    return out;
}

/// Loads a manifest split from disk and batches it.
inline std::vector<batch> make_batches(const std::vector<sample_ref>& items, const preprocess_config& config,
                                       std::size_t num_classes, std::size_t batch_size, bool shuffle, rng& gen) {
    if (items.empty()) {
        throw ingestion_error("cannot batch an empty split");
    }
    return make_batches(load_samples(items, config, num_classes), batch_size, shuffle, gen);
}

}  // namespace xrdl
