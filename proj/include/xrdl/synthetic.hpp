#pragma once

// Seeded striped-pattern images for smoke runs and fixtures. Class k draws
// stripes at angle k*180/C degrees with a random phase plus pixel noise, so
// any two classes are separable by orientation.

#include "xrdl/data.hpp"
#include "xrdl/image.hpp"
#include "xrdl/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace xrdl {

struct synthetic_config {
    std::size_t num_classes = 2;
    std::size_t per_class = 20;
    std::size_t size = 32;
    std::size_t channels = 1;
    double period = 8.0;  // stripe period in pixels
    double noise = 0.1;   // uniform noise amplitude, fraction of full scale
};

/// One image on the 0..1 scale, shape (channels, size, size).
inline tensor32 synthetic_pattern(std::size_t label, const synthetic_config& config, rng& gen) {
    const double angle = static_cast<double>(label) * std::numbers::pi / static_cast<double>(config.num_classes);
    const double cs = std::cos(angle), sn = std::sin(angle);
    const double phase = gen.uniform(0.0, 2.0 * std::numbers::pi);
    const std::size_t n = config.size;
    tensor32 img({config.channels, n, n});
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double t = (static_cast<double>(x) * cs + static_cast<double>(y) * sn) * 2.0 * std::numbers::pi /
                                 config.period + phase;
            double v = 0.5 + 0.4 * std::sin(t) + config.noise * gen.uniform(-1.0, 1.0);
            v = std::clamp(v, 0.0, 1.0);
            for (std::size_t c = 0; c < config.channels; ++c) {
                img[(c * n + y) * n + x] = static_cast<float>(v);
            }
        }
    }
    return img;
}

/// In-memory set with labels cycling 0..C-1.
inline sample_set synthetic_samples(const synthetic_config& config, std::uint64_t seed) {
    rng gen(seed);
    sample_set s;
    s.num_classes = config.num_classes;
    for (std::size_t i = 0; i < config.per_class * config.num_classes; ++i) {
        const std::size_t label = i % config.num_classes;
        s.images.push_back(synthetic_pattern(label, config, gen));
        s.labels.push_back(label);
    }
    return s;
}

/// Writes root/<split>/<class>/img_NNNN.pgm (or .ppm) for each split count.
inline void write_synthetic_dataset(const std::filesystem::path& root, const synthetic_config& config,
                                    const std::vector<std::pair<std::string, std::size_t>>& per_class_by_split,
                                    std::uint64_t seed, const std::vector<std::string>& class_names = {}) {
    rng gen(seed);
    const char* ext = config.channels == 3 ? ".ppm" : ".pgm";
    for (const auto& [split, count] : per_class_by_split) {
        for (std::size_t k = 0; k < config.num_classes; ++k) {
            const std::string cls = class_names.empty() ? "class_" + std::to_string(k) : class_names.at(k);
            const auto dir = root / split / cls;
            std::filesystem::create_directories(dir);
            for (std::size_t i = 0; i < count; ++i) {
                tensor32 img = synthetic_pattern(k, config, gen);
                for (auto& v : img.values()) {
                    v *= 255.0f;
                }
                char name[32];
                std::snprintf(name, sizeof name, "img_%04zu%s", i, ext);
                save_pnm(img, dir / name);
            }
        }
    }
}

}  // namespace xrdl
