#pragma once

// Flat `key = value` run configuration.
//
//   # comment
//   task = pneumonia
//   data.root = data/chest_xray
//
// Keys: task, data.root, split.train, split.valid, split.test, image.size,
// image.channels, model.kind, model.backbone, model.backbone_weights,
// train.epochs, train.batch_size, train.lr, train.patience,
// train.restore_best, lr_plateau.factor, lr_plateau.patience, lr_plateau.min,
// augment.enabled, augment.rotation, augment.flip_prob, augment.zoom_min,
// augment.zoom_max, augment.shift, seed.
//
// `task` selects defaults (split, epochs, model kind); explicit keys win
// regardless of their position in the file. Relative paths resolve against
// the directory holding the config file. XRDL_SEED overrides `seed`.

#include "xrdl/byte_io.hpp"
#include "xrdl/data.hpp"
#include "xrdl/error.hpp"
#include "xrdl/train.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>

namespace xrdl {

enum class model_kind { reference_cnn, vgg16, inception_v3, efficientnet_b0 };

inline const char* to_string(model_kind k) {
    switch (k) {
        case model_kind::reference_cnn: return "reference_cnn";
        case model_kind::vgg16: return "vgg16";
        case model_kind::inception_v3: return "inception_v3";
        case model_kind::efficientnet_b0: return "efficientnet_b0";
    }
    return "?";
}

inline model_kind model_kind_from_string(const std::string& s) {
    for (auto k : {model_kind::reference_cnn, model_kind::vgg16, model_kind::inception_v3,
                   model_kind::efficientnet_b0}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw parameter_error("model.kind: unknown model '" + s +
                          "' (expected reference_cnn, vgg16, inception_v3 or efficientnet_b0)");
}

struct run_config {
    std::string task = "custom";
    std::filesystem::path data_root;
    split_ratios split{0.8, 0.2, 0.0};
    std::size_t image_size = 224;
    std::size_t image_channels = 1;
    model_kind kind = model_kind::reference_cnn;
    std::string backbone = "vgg16";  // vgg16 | test
    std::filesystem::path backbone_weights;
    train_config train;
    bool augment_enabled = true;
    augment_config augment;

    [[nodiscard]] preprocess_config preprocess() const { return {image_size, image_size, image_channels}; }
};

struct task_defaults {
    split_ratios split;
    std::size_t epochs;
    model_kind kind;
};

inline std::optional<task_defaults> defaults_for_task(const std::string& task) {
    if (task == "covid") return task_defaults{{0.8, 0.2, 0.0}, 50, model_kind::reference_cnn};
    if (task == "pneumonia") return task_defaults{{0.7, 0.2, 0.1}, 50, model_kind::reference_cnn};
    if (task == "lung_cancer") return task_defaults{{0.7, 0.2, 0.1}, 30, model_kind::efficientnet_b0};
    if (task == "custom") return task_defaults{{0.8, 0.2, 0.0}, 50, model_kind::reference_cnn};
    return std::nullopt;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double config_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw parameter_error(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

inline std::uint64_t config_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
        throw parameter_error(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

inline bool config_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw parameter_error(key + ": expected true or false, got '" + v + "'");
}

template <typename Fn>
void check_key(const std::string& key, bool ok, Fn&& message) {
    if (!ok) {
        throw parameter_error(key + ": " + message());
    }
}

}  // namespace detail

/// Parses config text. `base_dir` anchors relative paths.
inline run_config parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw parameter_error("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
            throw parameter_error("config line " + std::to_string(line_no) + ": missing key");
        }
        if (!entries.emplace(key, value).second) {
            throw parameter_error(key + ": given more than once");
        }
    }

    run_config c;
    if (auto it = entries.find("task"); it != entries.end()) {
        c.task = it->second;
    }
    const auto defaults = defaults_for_task(c.task);
    if (!defaults) {
        throw parameter_error("task: unknown task '" + c.task + "' (expected covid, pneumonia, lung_cancer or custom)");
    }
    c.split = defaults->split;
    c.train.max_epochs = defaults->epochs;
    c.kind = defaults->kind;

    auto path_value = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };

    for (const auto& [key, v] : entries) {
        using namespace detail;
        if (key == "task") {
        } else if (key == "data.root") {
            check_key(key, !v.empty(), [] { return "must not be empty"; });
            c.data_root = path_value(v);
        } else if (key == "split.train") {
            c.split[0] = config_double(key, v);
        } else if (key == "split.valid") {
            c.split[1] = config_double(key, v);
        } else if (key == "split.test") {
            c.split[2] = config_double(key, v);
        } else if (key == "image.size") {
            c.image_size = config_uint(key, v);
        } else if (key == "image.channels") {
            c.image_channels = config_uint(key, v);
        } else if (key == "model.kind") {
            c.kind = model_kind_from_string(v);
        } else if (key == "model.backbone") {
            check_key(key, v == "vgg16" || v == "test", [&] { return "unknown backbone '" + v + "'"; });
            c.backbone = v;
        } else if (key == "model.backbone_weights") {
            c.backbone_weights = path_value(v);
        } else if (key == "train.epochs") {
            c.train.max_epochs = config_uint(key, v);
        } else if (key == "train.batch_size") {
            c.train.batch_size = config_uint(key, v);
        } else if (key == "train.lr") {
            c.train.learning_rate = config_double(key, v);
        } else if (key == "train.patience") {
            c.train.early_stop_patience = config_uint(key, v);
        } else if (key == "train.restore_best") {
            c.train.restore_best = config_bool(key, v);
        } else if (key == "lr_plateau.factor") {
            c.train.lr_plateau.factor = config_double(key, v);
        } else if (key == "lr_plateau.patience") {
            c.train.lr_plateau.patience = config_uint(key, v);
        } else if (key == "lr_plateau.min") {
            c.train.lr_plateau.min_lr = config_double(key, v);
        } else if (key == "augment.enabled") {
            c.augment_enabled = config_bool(key, v);
        } else if (key == "augment.rotation") {
            c.augment.rotation_degrees = config_double(key, v);
        } else if (key == "augment.flip_prob") {
            c.augment.flip_prob = config_double(key, v);
        } else if (key == "augment.zoom_min") {
            c.augment.zoom_min = config_double(key, v);
        } else if (key == "augment.zoom_max") {
            c.augment.zoom_max = config_double(key, v);
        } else if (key == "augment.shift") {
            c.augment.shift_fraction = config_double(key, v);
        } else if (key == "seed") {
            c.train.seed = config_uint(key, v);
        } else {
            throw parameter_error(key + ": unknown config key");
        }
    }
    return c;
}

/// Applies XRDL_SEED when set.
inline void apply_environment(run_config& c) {
    if (const char* seed = std::getenv("XRDL_SEED"); seed != nullptr) {
        c.train.seed = detail::config_uint("XRDL_SEED", seed);
    }
}

/// Range checks that do not need the dataset; errors name the offending key.
inline void validate(const run_config& c) {
    using detail::check_key;
    check_key("data.root", !c.data_root.empty(), [] { return "is required"; });
    for (std::size_t i = 0; i < 3; ++i) {
        static const char* names[] = {"split.train", "split.valid", "split.test"};
        check_key(names[i], c.split[i] >= 0.0 && c.split[i] <= 1.0, [] { return "must lie in [0, 1]"; });
    }
    check_key("split", std::abs(c.split[0] + c.split[1] + c.split[2] - 1.0) <= 1e-9,
              [] { return "split.train + split.valid + split.test must equal 1"; });
    check_key("split.train", c.split[0] > 0.0, [] { return "must be positive"; });
    check_key("image.channels", c.image_channels == 1 || c.image_channels == 3, [] { return "must be 1 or 3"; });
    check_key("image.size", c.image_size >= 1 && c.image_size <= 4096, [] { return "must lie in [1, 4096]"; });
    std::size_t multiple = 8;
    if (c.kind != model_kind::reference_cnn) {
        multiple = c.backbone == "vgg16" ? 32 : 16;
        check_key("image.channels", c.backbone != "vgg16" || c.image_channels == 3,
                  [] { return "the vgg16 backbone needs 3 channels"; });
    }
    check_key("image.size", c.image_size % multiple == 0,
              [&] { return "must be a multiple of " + std::to_string(multiple) + " for " + to_string(c.kind); });
    check_key("train.epochs", c.train.max_epochs >= 1 && c.train.max_epochs <= 100000,
              [] { return "must lie in [1, 100000]"; });
    check_key("train.batch_size", c.train.batch_size >= 1, [] { return "must be >= 1"; });
    check_key("train.lr", c.train.learning_rate > 0.0 && c.train.learning_rate < 10.0,
              [] { return "must lie in (0, 10)"; });
    check_key("train.patience", c.train.early_stop_patience >= 1, [] { return "must be >= 1"; });
    check_key("lr_plateau.factor", c.train.lr_plateau.factor > 0.0 && c.train.lr_plateau.factor < 1.0,
              [] { return "must lie in (0, 1)"; });
    check_key("lr_plateau.patience", c.train.lr_plateau.patience >= 1, [] { return "must be >= 1"; });
    check_key("lr_plateau.min", c.train.lr_plateau.min_lr >= 0.0, [] { return "must be >= 0"; });
    check_key("augment.rotation", c.augment.rotation_degrees >= 0.0 && c.augment.rotation_degrees <= 180.0,
              [] { return "must lie in [0, 180]"; });
    check_key("augment.flip_prob", c.augment.flip_prob >= 0.0 && c.augment.flip_prob <= 1.0,
              [] { return "must lie in [0, 1]"; });
    check_key("augment.zoom_min", c.augment.zoom_min > 0.0 && c.augment.zoom_min <= 1.0,
              [] { return "must lie in (0, 1]"; });
    check_key("augment.zoom_max", c.augment.zoom_max >= 1.0 && c.augment.zoom_max <= 10.0,
              [] { return "must lie in [1, 10]"; });
    check_key("augment.shift", c.augment.shift_fraction >= 0.0 && c.augment.shift_fraction < 1.0,
              [] { return "must lie in [0, 1)"; });
}

inline run_config load_run_config(const std::filesystem::path& path) {
    const bytes raw = read_file(path);
    run_config c = parse_run_config(std::string(raw.begin(), raw.end()), path.parent_path());
    apply_environment(c);
    validate(c);
    c.train.augmentation = c.augment_enabled ? std::optional<augment_config>(c.augment) : std::nullopt;
    return c;
}

}  // namespace xrdl
