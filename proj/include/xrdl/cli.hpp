#pragma once

// Command-line surface:
//
//   xrdl scan <root>
//   xrdl train --config <file> --out <dir>
//   xrdl evaluate --checkpoint <file> --data <root> [--split test|valid|train] [--out <dir>]
//   xrdl predict --checkpoint <file> --image <file>
//   xrdl synth --out <root> [--classes 2] [--per-class 20] [--test-per-class 5] [--size 32]
//
// Exit codes: 0 success, 1 usage, 2 data or format, 3 divergence.

#include "xrdl/checkpoint.hpp"
#include "xrdl/config.hpp"
#include "xrdl/data.hpp"
#include "xrdl/history.hpp"
#include "xrdl/metrics.hpp"
#include "xrdl/model_zoo.hpp"
#include "xrdl/synthetic.hpp"
#include "xrdl/train.hpp"

#include "CLI11.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

namespace xrdl {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_data = 2;
inline constexpr int exit_divergence = 3;

inline int exit_code_for(const error& e) {
    switch (e.category()) {
        case error_category::usage: return exit_usage;
        case error_category::data: return exit_data;
        case error_category::divergence: return exit_divergence;
    }
    return exit_data;
}

/// Train/valid/test item lists: the train folder is cut by `ratios`, then
/// any valid/ and test/ folders are appended to their splits.
inline std::array<std::vector<sample_ref>, 3> assemble_splits(const dataset_manifest& m, const split_ratios& ratios,
                                                              std::uint64_t seed) {
    if (m.split(split_kind::train).empty()) {
        throw ingestion_error("dataset has no training images");
    }
    auto parts = split_dataset(m.split(split_kind::train), ratios, seed);
    const auto& valid = m.split(split_kind::valid);
    const auto& test = m.split(split_kind::test);
    parts[1].insert(parts[1].end(), valid.begin(), valid.end());
    parts[2].insert(parts[2].end(), test.begin(), test.end());
    return parts;
}

inline built_model<float> build_configured_model(const run_config& c, std::size_t num_classes) {
    const image_shape input{c.image_channels, c.image_size, c.image_size};
    if (c.kind == model_kind::reference_cnn) {
        return build_reference_cnn(input, num_classes, rng::derive(c.train.seed, 1));
    }
    backbone base = c.backbone == "vgg16" ? build_vgg16_backbone(input, rng::derive(c.train.seed, 2))
                                          : build_test_backbone(input, rng::derive(c.train.seed, 2));
    if (!c.backbone_weights.empty()) {
        base = import_backbone_weights(std::move(base), c.backbone_weights);
    }
    const transfer_head head = transfer_head_from_string(to_string(c.kind));
    return build_transfer_model(head, base, num_classes, rng::derive(c.train.seed, 3));
}

inline std::vector<batch> ordered_batches(const std::vector<sample_ref>& items, const preprocess_config& pre,
                                          std::size_t num_classes, std::size_t batch_size) {
    rng unused(0);
    return make_batches(items, pre, num_classes, batch_size, false, unused);
}

namespace detail {

/// Directory whose contents are moved into place only on commit().
class staging_dir {
  public:
    explicit staging_dir(std::filesystem::path target) : target_(std::move(target)) {
        target_ = std::filesystem::absolute(target_).lexically_normal();
        if (!target_.has_filename()) {
            target_ = target_.parent_path();
        }
        path_ = target_.parent_path() / ("." + target_.filename().string() + ".partial");
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    staging_dir(const staging_dir&) = delete;
    staging_dir& operator=(const staging_dir&) = delete;
    ~staging_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    [[nodiscard]] std::filesystem::path file(const std::string& name) const { return path_ / name; }

    void commit(const std::vector<std::string>& names) {
        std::filesystem::create_directories(target_);
        for (const auto& n : names) {
            std::filesystem::rename(path_ / n, target_ / n);
        }
    }

  private:
    std::filesystem::path target_;
    std::filesystem::path path_;
};

inline void write_report_files(const evaluation& e, const std::string& split,
                               const std::function<std::filesystem::path(const std::string&)>& where) {
    nlohmann::json j = to_json(e.report);
    j["split"] = split;
    j["loss"] = e.loss;
    atomic_write(where("report.txt"), render_report(e.report));
    atomic_write(where("report.json"), j.dump(2) + "\n");
    atomic_write(where("confusion.csv"), format_confusion_csv(e.matrix));
}

inline std::string format_record(const epoch_record& r, std::size_t max_epochs) {
    char line[256];
    std::snprintf(line, sizeof line, "epoch %zu/%zu  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f  lr %g\n",
                  r.epoch, max_epochs, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate);
    return line;
}

}  // namespace detail

inline void cmd_scan(const std::filesystem::path& root, std::ostream& out) {
    const dataset_manifest m = scan_dataset(root);
    out << "classes: " << m.class_names.size() << " (";
    for (std::size_t i = 0; i < m.class_names.size(); ++i) {
        out << (i ? ", " : "") << m.class_names[i];
    }
    out << ")\n";
    for (const auto& [split, items] : m.splits) {
        out << to_string(split) << ":";
        const auto counts = m.class_counts(split);
        for (std::size_t i = 0; i < counts.size(); ++i) {
            out << " " << m.class_names[i] << "=" << counts[i];
        }
        out << " total=" << items.size() << "\n";
    }
}

inline void cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                      std::ostream& out) {
    const run_config cfg = load_run_config(config_path);
    const dataset_manifest manifest = scan_dataset(cfg.data_root);
    const std::size_t num_classes = manifest.class_names.size();
    if (num_classes < 2) {
        throw ingestion_error("training needs at least 2 classes, found " + std::to_string(num_classes));
    }
    const auto splits = assemble_splits(manifest, cfg.split, cfg.train.seed);
    if (splits[1].empty()) {
        throw ingestion_error("validation split is empty; set split.valid or add a valid/ folder");
    }
    built_model<float> model = build_configured_model(cfg, num_classes);
    const preprocess_config pre = cfg.preprocess();
    const sample_set train_set = load_samples(splits[0], pre, num_classes);
    if (train_set.size() == 0) {
        throw ingestion_error("training split is empty");
    }
    const auto valid_batches = ordered_batches(splits[1], pre, num_classes, cfg.train.batch_size);

    detail::staging_dir staging(out_dir);
    fit_hooks hooks;
    hooks.checkpoint_path = staging.file("best.ckpt");
    hooks.class_names = manifest.class_names;
    hooks.extra_metadata = {{"task", cfg.task},
                            {"split", {cfg.split[0], cfg.split[1], cfg.split[2]}},
                            {"batch_size", cfg.train.batch_size}};
    hooks.on_epoch = [&](const epoch_record& r) { out << detail::format_record(r, cfg.train.max_epochs) << std::flush; };

    const fit_result result = fit(model.spec, std::move(model.params), train_set, valid_batches, cfg.train, hooks);

    const bool use_test = !splits[2].empty();
    const auto eval_batches =
        use_test ? ordered_batches(splits[2], pre, num_classes, cfg.train.batch_size) : valid_batches;
    const evaluation e = evaluate_model(model.spec, result.params, eval_batches, manifest.class_names);

    emit_history(result.history, staging.file("history.csv"));
    detail::write_report_files(e, use_test ? "test" : "valid", [&](const std::string& n) { return staging.file(n); });
    staging.commit({"best.ckpt", "history.csv", "report.txt", "report.json", "confusion.csv"});

    out << "best epoch " << result.best_epoch << " (val_loss " << round_trip(result.best_val_loss) << ")\n";
    out << (use_test ? "test" : "valid") << " report:\n" << render_report(e.report);
}

inline void cmd_evaluate(const std::filesystem::path& checkpoint_path, const std::filesystem::path& data_root,
                         const std::string& split_name, const std::filesystem::path& out_dir, std::ostream& out) {
    const split_kind which = split_from_string(split_name);
    const checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.spec.headless()) {
        throw usage_error(checkpoint_path.string() + " holds a backbone, not a classifier");
    }
    const dataset_manifest manifest = scan_dataset(data_root);
    if (manifest.class_names != ck.class_names) {
        throw consistency_error("dataset classes do not match the checkpoint's class names");
    }
    const nlohmann::json& meta = ck.metadata;
    split_ratios ratios{1.0, 0.0, 0.0};
    if (meta.contains("split")) {
        ratios = {meta["split"][0].get<double>(), meta["split"][1].get<double>(), meta["split"][2].get<double>()};
    }
    const std::uint64_t seed = meta.value("seed", std::uint64_t{0});
    const std::size_t batch_size = meta.value("batch_size", std::size_t{32});
    const auto splits = assemble_splits(manifest, ratios, seed);
    const auto& items = splits[static_cast<std::size_t>(which)];
    if (items.empty()) {
        throw ingestion_error(std::string("split '") + to_string(which) + "' is empty");
    }
    const image_shape& in = ck.spec.input_shape;
    const preprocess_config pre{in.height, in.width, in.channels};
    const evaluation e =
        evaluate_model(ck.spec, ck.params, ordered_batches(items, pre, ck.spec.num_classes, batch_size), ck.class_names);

    if (!out_dir.empty()) {
        detail::staging_dir staging(out_dir);
        detail::write_report_files(e, to_string(which), [&](const std::string& n) { return staging.file(n); });
        staging.commit({"report.txt", "report.json", "confusion.csv"});
    }
    out << "split: " << to_string(which) << "\n";
    out << "samples: " << e.matrix.total() << "\n";
    out << "loss: " << round_trip(e.loss) << "\n";
    out << "accuracy: " << round_trip(e.accuracy) << "\n\n";
    out << render_report(e.report);
}

inline void cmd_predict(const std::filesystem::path& checkpoint_path, const std::filesystem::path& image_path,
                        std::ostream& out) {
    const checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.spec.headless()) {
        throw usage_error(checkpoint_path.string() + " holds a backbone, not a classifier");
    }
    const image_shape& in = ck.spec.input_shape;
    const tensor32 img = load_and_preprocess(image_path, {in.height, in.width, in.channels});
    const tensor32 scores = infer(ck.spec, ck.params, img.reshape({1, in.channels, in.height, in.width}));
    const std::size_t best = predict_classes(scores).front();
    out << "predicted: " << ck.class_names.at(best) << "\n";
    std::size_t width = 0;
    for (const auto& n : ck.class_names) {
        width = std::max(width, n.size());
    }
    for (std::size_t k = 0; k < ck.class_names.size(); ++k) {
        char line[256];
        std::snprintf(line, sizeof line, "  %-*s %.6f\n", static_cast<int>(width), ck.class_names[k].c_str(),
                      static_cast<double>(scores[k]));
        out << line;
    }
}

/// Entry point shared by the binary and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Chest X-ray classification toolkit", "xrdl"};
    app.require_subcommand(1);

    std::string scan_root;
    auto* scan = app.add_subcommand("scan", "Summarize a dataset directory");
    scan->add_option("root", scan_root, "Dataset root holding train/ [valid/] test/")->required();

    std::string config_path, train_out;
    auto* train = app.add_subcommand("train", "Train a model from a run config");
    train->add_option("--config", config_path, "Run config file")->required();
    train->add_option("--out", train_out, "Output directory")->required();

    std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
    evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    evaluate->add_option("--data", eval_data, "Dataset root")->required();
    evaluate->add_option("--split", eval_split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
    evaluate->add_option("--out", eval_out, "Write report.txt, report.json and confusion.csv here");

    std::string pred_ckpt, pred_image;
    auto* predict = app.add_subcommand("predict", "Classify one image");
    predict->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required();
    predict->add_option("--image", pred_image, "Image file (.pgm, .ppm, .xrt)")->required();

    std::string synth_out;
    synthetic_config synth_cfg;
    std::size_t synth_test = 5;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "Write a striped-pattern dataset");
    synth->add_option("--out", synth_out, "Dataset root to create")->required();
    synth->add_option("--classes", synth_cfg.num_classes, "Number of classes")->check(CLI::Range(2, 16));
    synth->add_option("--per-class", synth_cfg.per_class, "Training images per class")->check(CLI::Range(1, 100000));
    synth->add_option("--test-per-class", synth_test, "Test images per class")->check(CLI::Range(0, 100000));
    synth->add_option("--size", synth_cfg.size, "Image side length")->check(CLI::Range(1, 4096));
    synth->add_option("--channels", synth_cfg.channels, "1 or 3")->check(CLI::IsMember({1, 3}));
    synth->add_option("--seed", synth_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*scan) {
            cmd_scan(scan_root, out);
        } else if (*train) {
            cmd_train(config_path, train_out, out);
        } else if (*evaluate) {
            cmd_evaluate(eval_ckpt, eval_data, eval_split, eval_out, out);
        } else if (*predict) {
            cmd_predict(pred_ckpt, pred_image, out);
        } else if (*synth) {
            std::vector<std::pair<std::string, std::size_t>> plan{{"train", synth_cfg.per_class}};
            if (synth_test > 0) {
                plan.emplace_back("test", synth_test);
            }
            write_synthetic_dataset(synth_out, synth_cfg, plan, synth_seed);
            out << "wrote " << synth_cfg.num_classes * (synth_cfg.per_class + synth_test) << " images to " << synth_out
                << "\n";
        }
    } catch (const error& e) {
        err << "xrdl: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "xrdl: " << e.what() << "\n";
        return exit_data;
    }
    return exit_ok;
}

}  // namespace xrdl
