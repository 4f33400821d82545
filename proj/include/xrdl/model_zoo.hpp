#pragma once

// Concrete architectures: the reference CNN, the VGG16 convolutional base,
// a small fixture backbone, and the three transfer-learning heads.

#include "xrdl/model.hpp"

#include <string>
#include <utility>

namespace xrdl {

template <scalar T = float>
struct built_model {
    model_spec spec;
    param_store<T> params;
};

/// Feature extractor: a headless spec plus its parameters.
struct backbone {
    model_spec spec;
    param_store<float> params;

    [[nodiscard]] const image_shape& input_shape() const noexcept { return spec.input_shape; }

    /// (C', H', W') of the feature map for the configured input.
    [[nodiscard]] shape_t output_shape() const { return xrdl::output_shape(spec); }

    [[nodiscard]] tensor32 features(const tensor32& batch) const { return infer(spec, params, batch); }
};

/// Three [conv3x3 same, relu, maxpool, dropout 0.25] blocks with 32/64/128
/// filters, then flatten, dense 128 + relu, dropout 0.5, dense + softmax.
inline built_model<float> build_reference_cnn(const image_shape& input, std::size_t num_classes, std::uint64_t seed) {
    if (input.height % 8 != 0 || input.width % 8 != 0 || input.height == 0 || input.width == 0) {
        throw shape_error("reference CNN needs extents divisible by 8, got " + to_string(input));
    }
    if (num_classes < 2) {
        throw parameter_error("reference CNN needs at least 2 classes");
    }
    model_spec spec{"reference_cnn", input, {}, num_classes, head_activation::softmax};
    const std::size_t filters[] = {32, 64, 128};
    for (int b = 0; b < 3; ++b) {
        const std::string block = "block" + std::to_string(b + 1);
        spec.layers.push_back(layer_spec::conv(block + ".conv", filters[b]));
        spec.layers.push_back(layer_spec::simple(layer_kind::relu, block + ".relu"));
        spec.layers.push_back(layer_spec::simple(layer_kind::maxpool2d, block + ".pool"));
        spec.layers.push_back(layer_spec::dropout(block + ".dropout", 0.25));
    }
    spec.layers.push_back(layer_spec::simple(layer_kind::flatten, "flatten"));
    spec.layers.push_back(layer_spec::dense("fc1", 128));
    spec.layers.push_back(layer_spec::simple(layer_kind::relu, "fc1.relu"));
    spec.layers.push_back(layer_spec::dropout("fc1.dropout", 0.5));
    spec.layers.push_back(layer_spec::dense("logits", num_classes, init_scheme::glorot_uniform));
    spec.layers.push_back(layer_spec::simple(layer_kind::softmax, "softmax"));
    validate(spec);
    rng gen(seed);
    auto params = init_params<float>(spec, gen);
    return {std::move(spec), std::move(params)};
}

/// The 13-conv / 5-pool VGG16 base without its classifier, randomly
/// initialized. Parameters are frozen; import real weights with
/// import_backbone_weights().
inline backbone build_vgg16_backbone(const image_shape& input, std::uint64_t seed = 0) {
    if (input.channels != 3) {
        throw shape_error("VGG16 expects RGB input, got " + to_string(input));
    }
    if (input.height % 32 != 0 || input.width % 32 != 0 || input.height == 0 || input.width == 0) {
        throw shape_error("VGG16 needs extents divisible by 32, got " + to_string(input));
    }
    model_spec spec{"vgg16", input, {}, 0, head_activation::none};
    const std::pair<int, std::size_t> blocks[] = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    int b = 0;
    for (const auto& [convs, filters] : blocks) {
        ++b;
        const std::string block = "vgg16.block" + std::to_string(b);
        for (int c = 1; c <= convs; ++c) {
            const std::string conv = block + "_conv" + std::to_string(c);
            spec.layers.push_back(layer_spec::conv(conv, filters));
            spec.layers.push_back(layer_spec::simple(layer_kind::relu, conv + ".relu"));
        }
        spec.layers.push_back(layer_spec::simple(layer_kind::maxpool2d, block + "_pool"));
    }
    validate(spec);
    rng gen(seed);
    return {spec, init_params<float>(spec, gen, false)};
}

/// Four [conv3x3 same, relu, maxpool] blocks (8/16/16/32 filters); extents
/// must be divisible by 16. Small enough for fixtures and unit tests.
inline backbone build_test_backbone(const image_shape& input, std::uint64_t seed = 0) {
    if (input.height % 16 != 0 || input.width % 16 != 0 || input.height == 0 || input.width == 0) {
        throw shape_error("test backbone needs extents divisible by 16, got " + to_string(input));
    }
    model_spec spec{"test_backbone", input, {}, 0, head_activation::none};
    const std::size_t filters[] = {8, 16, 16, 32};
    for (int b = 0; b < 4; ++b) {
        const std::string block = "tiny.block" + std::to_string(b + 1);
        spec.layers.push_back(layer_spec::conv(block + "_conv", filters[b]));
        spec.layers.push_back(layer_spec::simple(layer_kind::relu, block + "_conv.relu"));
        spec.layers.push_back(layer_spec::simple(layer_kind::maxpool2d, block + "_pool"));
    }
    validate(spec);
    rng gen(seed);
    return {spec, init_params<float>(spec, gen, false)};
}

enum class transfer_head { vgg16, inception_v3, efficientnet_b0 };

inline const char* to_string(transfer_head h) {
    switch (h) {
        case transfer_head::vgg16: return "vgg16";
        case transfer_head::inception_v3: return "inception_v3";
        case transfer_head::efficientnet_b0: return "efficientnet_b0";
    }
    return "?";
}

inline transfer_head transfer_head_from_string(const std::string& s) {
    if (s == "vgg16") return transfer_head::vgg16;
    if (s == "inception_v3") return transfer_head::inception_v3;
    if (s == "efficientnet_b0") return transfer_head::efficientnet_b0;
    throw parameter_error("unknown transfer head '" + s + "'");
}

/// Head layers only, in order.
inline std::vector<layer_spec> transfer_head_layers(transfer_head head, std::size_t num_classes) {
    using lk = layer_kind;
    switch (head) {
        case transfer_head::vgg16:
            return {layer_spec::simple(lk::flatten, "head.flatten"), layer_spec::dropout("head.dropout", 0.25),
                    layer_spec::dense("head.dense", num_classes, init_scheme::glorot_uniform),
                    layer_spec::simple(lk::sigmoid, "head.sigmoid")};
        case transfer_head::inception_v3:
            return {layer_spec::simple(lk::flatten, "head.flatten"), layer_spec::dense("head.dense1", 1024),
                    layer_spec::simple(lk::relu, "head.dense1.relu"), layer_spec::dropout("head.dropout", 0.2),
                    layer_spec::dense("head.dense2", num_classes, init_scheme::glorot_uniform),
                    layer_spec::simple(lk::sigmoid, "head.sigmoid")};
        case transfer_head::efficientnet_b0:
            return {layer_spec::simple(lk::global_average_pool, "head.gap"), layer_spec::dropout("head.dropout", 0.5),
                    layer_spec::dense("head.dense", num_classes, init_scheme::glorot_uniform),
                    layer_spec::simple(lk::softmax, "head.softmax")};
    }
    throw parameter_error("unknown transfer head");
}

/// Stacks a classification head on a frozen backbone. Backbone parameters
/// are copied and flagged frozen; head parameters are fresh and trainable.
inline built_model<float> build_transfer_model(transfer_head head, const backbone& base, std::size_t num_classes,
                                               std::uint64_t seed) {
    if (num_classes < 2) {
        throw parameter_error("transfer model needs at least 2 classes");
    }
    model_spec head_spec{std::string(to_string(head)) + "_head", base.input_shape(), {}, num_classes,
                         head == transfer_head::efficientnet_b0 ? head_activation::softmax : head_activation::sigmoid};
    head_spec.layers = base.spec.layers;
    for (auto& l : transfer_head_layers(head, num_classes)) {
        head_spec.layers.push_back(std::move(l));
    }
    head_spec.name = std::string(to_string(head)) + "_transfer";
    validate(head_spec);
    check_params_match(base.spec, base.params);

    // Only the head is initialized; the backbone layout is a prefix.
    model_spec only_head = head_spec;
    only_head.layers.erase(only_head.layers.begin(),
                           only_head.layers.begin() + static_cast<std::ptrdiff_t>(base.spec.layers.size()));
    const shape_t feat = base.output_shape();
    if (feat.size() != 3) {
        throw shape_error("backbone must produce a feature map, got " + to_string(feat));
    }
    only_head.input_shape = {feat[0], feat[1], feat[2]};
    rng gen(seed);
    param_store<float> params = init_params<float>(only_head, gen, true);
    for (const auto& [name, e] : base.params) {
        params.add(name, e.value, false);
    }
    return {std::move(head_spec), std::move(params)};
}

}  // namespace xrdl
