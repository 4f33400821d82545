#pragma once

// Declarative layer stacks, named parameter storage and the forward pass.

#include "xrdl/autodiff.hpp"
#include "xrdl/error.hpp"
#include "xrdl/kernels.hpp"
#include "xrdl/rng.hpp"
#include "xrdl/tensor.hpp"

#include "json.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace xrdl {

struct image_shape {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const image_shape&, const image_shape&) = default;
};

inline std::string to_string(const image_shape& s) {
    return "(" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," + std::to_string(s.width) + ")";
}

enum class layer_kind { conv2d, relu, sigmoid, softmax, maxpool2d, dropout, flatten, dense, global_average_pool };

/// Weight initializer for conv/dense layers; biases always start at zero.
enum class init_scheme { he_uniform, glorot_uniform };

enum class head_activation { softmax, sigmoid, none };

struct layer_spec {
    layer_kind kind = layer_kind::relu;
    std::string name;
    std::size_t filters = 0;  // conv2d
    std::size_t kernel = 0;   // conv2d, square
    padding pad = padding::same;
    std::size_t stride = 1;
    std::size_t units = 0;  // dense
    double rate = 0.0;      // dropout
    init_scheme init = init_scheme::he_uniform;

    friend bool operator==(const layer_spec&, const layer_spec&) = default;

    static layer_spec conv(std::string name, std::size_t filters, std::size_t kernel = 3, padding pad = padding::same,
                           std::size_t stride = 1, init_scheme init = init_scheme::he_uniform) {
        layer_spec l{layer_kind::conv2d, std::move(name)};
        l.filters = filters;
        l.kernel = kernel;
        l.pad = pad;
        l.stride = stride;
        l.init = init;
        return l;
    }
    static layer_spec dense(std::string name, std::size_t units, init_scheme init = init_scheme::he_uniform) {
        layer_spec l{layer_kind::dense, std::move(name)};
        l.units = units;
        l.init = init;
        return l;
    }
    static layer_spec dropout(std::string name, double rate) {
        layer_spec l{layer_kind::dropout, std::move(name)};
        l.rate = rate;
        return l;
    }
    static layer_spec simple(layer_kind kind, std::string name) { return layer_spec{kind, std::move(name)}; }
};

/// A model: input geometry plus an ordered layer stack. A spec with
/// head_activation::none and num_classes == 0 is headless (a backbone).
struct model_spec {
    std::string name;
    image_shape input_shape;
    std::vector<layer_spec> layers;
    std::size_t num_classes = 0;
    head_activation head = head_activation::softmax;

    friend bool operator==(const model_spec&, const model_spec&) = default;

    [[nodiscard]] bool headless() const noexcept { return head == head_activation::none; }
};

// ---------------------------------------------------------------------------
// Names <-> enums

inline const char* to_string(layer_kind k) {
    switch (k) {
        case layer_kind::conv2d: return "conv2d";
        case layer_kind::relu: return "relu";
        case layer_kind::sigmoid: return "sigmoid";
        case layer_kind::softmax: return "softmax";
        case layer_kind::maxpool2d: return "maxpool2d";
        case layer_kind::dropout: return "dropout";
        case layer_kind::flatten: return "flatten";
        case layer_kind::dense: return "dense";
        case layer_kind::global_average_pool: return "global_average_pool";
    }
    return "?";
}

inline layer_kind layer_kind_from_string(const std::string& s) {
    for (auto k : {layer_kind::conv2d, layer_kind::relu, layer_kind::sigmoid, layer_kind::softmax,
                   layer_kind::maxpool2d, layer_kind::dropout, layer_kind::flatten, layer_kind::dense,
                   layer_kind::global_average_pool}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw format_error("unknown layer kind '" + s + "'");
}

inline const char* to_string(head_activation h) {
    switch (h) {
        case head_activation::softmax: return "softmax";
        case head_activation::sigmoid: return "sigmoid";
        case head_activation::none: return "none";
    }
    return "?";
}

inline const char* to_string(init_scheme s) { return s == init_scheme::he_uniform ? "he_uniform" : "glorot_uniform"; }

// ---------------------------------------------------------------------------
// Shape propagation

/// Per-sample output shape after every layer (batch axis excluded).
inline std::vector<shape_t> propagate_shapes(const model_spec& spec) {
    const auto& in = spec.input_shape;
    if (in.channels == 0 || in.height == 0 || in.width == 0) {
        throw shape_error("model '" + spec.name + "': input shape " + to_string(in) + " has a zero extent");
    }
    shape_t cur{in.channels, in.height, in.width};
    std::vector<shape_t> out;
    out.reserve(spec.layers.size());
    for (const auto& l : spec.layers) {
        const std::string where = "layer '" + l.name + "' (" + to_string(l.kind) + ") with input " + to_string(cur);
        switch (l.kind) {
            case layer_kind::conv2d: {
                if (cur.size() != 3) {
                    throw shape_error(where + ": conv2d needs a feature map");
                }
                if (l.filters == 0 || l.kernel == 0) {
                    throw shape_error(where + ": filters and kernel must be positive");
                }
                const auto g = make_conv_geometry({1, cur[0], cur[1], cur[2]}, {l.filters, cur[0], l.kernel, l.kernel},
                                                  l.pad, l.stride);
                cur = {l.filters, g.out_h, g.out_w};
                break;
            }
            case layer_kind::maxpool2d:
                if (cur.size() != 3 || cur[1] % 2 != 0 || cur[2] % 2 != 0) {
                    throw shape_error(where + ": maxpool2d needs even spatial extents");
                }
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            case layer_kind::flatten:
                cur = {element_count(cur)};
                break;
            case layer_kind::global_average_pool:
                if (cur.size() != 3) {
                    throw shape_error(where + ": global_average_pool needs a feature map");
                }
                cur = {cur[0]};
                break;
            case layer_kind::dense:
                if (cur.size() != 1) {
                    throw shape_error(where + ": dense needs a flat input");
                }
                if (l.units == 0) {
                    throw shape_error(where + ": dense width must be >= 1");
                }
                cur = {l.units};
                break;
            case layer_kind::dropout:
                if (!(l.rate >= 0.0 && l.rate < 1.0)) {
                    throw parameter_error(where + ": dropout rate outside [0, 1)");
                }
                break;
            case layer_kind::softmax:
            case layer_kind::relu:
            case layer_kind::sigmoid:
                break;
        }
        out.push_back(cur);
    }
    return out;
}

inline shape_t output_shape(const model_spec& spec) {
    const auto shapes = propagate_shapes(spec);
    return shapes.empty() ? shape_t{spec.input_shape.channels, spec.input_shape.height, spec.input_shape.width}
                          : shapes.back();
}

/// Checks every ModelSpec invariant; throws shape_error/parameter_error.
inline void validate(const model_spec& spec) {
    const shape_t out = output_shape(spec);
    std::map<std::string, int> seen;
    for (const auto& l : spec.layers) {
        if (l.name.empty() || seen[l.name]++) {
            throw parameter_error("model '" + spec.name + "': layer names must be unique and non-empty ('" + l.name +
                                  "')");
        }
    }
    if (spec.headless()) {
        return;
    }
    if (spec.num_classes == 0 || out != shape_t{spec.num_classes}) {
        throw shape_error("model '" + spec.name + "' produces " + to_string(out) + ", expected (" +
                          std::to_string(spec.num_classes) + ")");
    }
    const layer_kind expected = spec.head == head_activation::softmax ? layer_kind::softmax : layer_kind::sigmoid;
    if (spec.layers.empty() || spec.layers.back().kind != expected) {
        throw shape_error("model '" + spec.name + "' must end with a " + to_string(spec.head) + " layer");
    }
}

// ---------------------------------------------------------------------------
// Parameters

struct param_info {
    std::string name;
    shape_t dims;
    init_scheme init = init_scheme::he_uniform;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    bool bias = false;
};

/// Every parameter a spec needs, in layer order (weight before bias).
inline std::vector<param_info> parameter_layout(const model_spec& spec) {
    const auto shapes = propagate_shapes(spec);
    std::vector<param_info> out;
    shape_t prev{spec.input_shape.channels, spec.input_shape.height, spec.input_shape.width};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (l.kind == layer_kind::conv2d) {
            const std::size_t c = prev[0], k2 = l.kernel * l.kernel;
            out.push_back({l.name + ".w", {l.filters, c, l.kernel, l.kernel}, l.init, c * k2, l.filters * k2, false});
            out.push_back({l.name + ".b", {l.filters}, l.init, 0, 0, true});
        } else if (l.kind == layer_kind::dense) {
            out.push_back({l.name + ".w", {prev[0], l.units}, l.init, prev[0], l.units, false});
            out.push_back({l.name + ".b", {l.units}, l.init, 0, 0, true});
        }
        prev = shapes[i];
    }
    return out;
}

inline std::size_t parameter_count(const model_spec& spec) {
    std::size_t total = 0;
    for (const auto& p : parameter_layout(spec)) {
        total += element_count(p.dims);
    }
    return total;
}

template <scalar T>
class param_store {
  public:
    struct entry {
        tensor<T> value;
        bool trainable = true;
    };

    void add(const std::string& name, tensor<T> value, bool trainable) {
        if (!entries_.emplace(name, entry{std::move(value), trainable}).second) {
            throw consistency_error("duplicate parameter '" + name + "'");
        }
    }

    [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    [[nodiscard]] const entry& at(const std::string& name) const { return lookup(name); }
    [[nodiscard]] const tensor<T>& value(const std::string& name) const { return lookup(name).value; }
    [[nodiscard]] bool trainable(const std::string& name) const { return lookup(name).trainable; }

    /// Replaces a value, keeping its shape contract.
    void set_value(const std::string& name, tensor<T> value) {
        auto& e = lookup(name);
        if (e.value.dims() != value.dims()) {
            throw shape_error("parameter '" + name + "' has shape " + to_string(e.value.dims()) + ", got " +
                              to_string(value.dims()));
        }
        e.value = std::move(value);
    }

    tensor<T>& mutable_value(const std::string& name) { return lookup(name).value; }
    void set_trainable(const std::string& name, bool flag) { lookup(name).trainable = flag; }

    void freeze_all() {
        for (auto& [name, e] : entries_) {
            e.trainable = false;
        }
    }

    [[nodiscard]] std::vector<std::string> names(bool trainable_only = false) const {
        std::vector<std::string> out;
        for (const auto& [name, e] : entries_) {
            if (!trainable_only || e.trainable) {
                out.push_back(name);
            }
        }
        return out;
    }

    [[nodiscard]] std::size_t element_count(bool trainable_only = false) const {
        std::size_t total = 0;
        for (const auto& [name, e] : entries_) {
            if (!trainable_only || e.trainable) {
                total += e.value.size();
            }
        }
        return total;
    }

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] auto begin() const { return entries_.begin(); }
    [[nodiscard]] auto end() const { return entries_.end(); }

    template <scalar U>
    [[nodiscard]] param_store<U> cast() const {
        param_store<U> out;
        for (const auto& [name, e] : entries_) {
            out.add(name, e.value.template cast<U>(), e.trainable);
        }
        return out;
    }

    friend bool operator==(const param_store& a, const param_store& b) {
        if (a.entries_.size() != b.entries_.size()) {
            return false;
        }
        for (auto i = a.entries_.begin(), j = b.entries_.begin(); i != a.entries_.end(); ++i, ++j) {
            if (i->first != j->first || i->second.trainable != j->second.trainable ||
                !bit_identical(i->second.value, j->second.value)) {
                return false;
            }
        }
        return true;
    }

  private:
    entry& lookup(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw consistency_error("unknown parameter '" + name + "'");
        }
        return it->second;
    }
    const entry& lookup(const std::string& name) const { return const_cast<param_store*>(this)->lookup(name); }

    std::map<std::string, entry> entries_;
};

/// Draws fresh parameters for `spec`: He- or Glorot-uniform weights, zero
/// biases, in layer order from `gen`.
template <scalar T = float>
param_store<T> init_params(const model_spec& spec, rng& gen, bool trainable = true) {
    param_store<T> store;
    for (const auto& p : parameter_layout(spec)) {
        tensor<T> value(p.dims);
        if (!p.bias) {
            const double limit = p.init == init_scheme::he_uniform
                                     ? std::sqrt(6.0 / static_cast<double>(p.fan_in))
                                     : std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
            for (auto& v : value.values()) {
                v = static_cast<T>(gen.uniform(-limit, limit));
            }
        }
        store.add(p.name, std::move(value), trainable);
    }
    return store;
}

/// Throws consistency_error unless `params` holds exactly the parameters the model needs.
template <scalar T>
void check_params_match(const model_spec& spec, const param_store<T>& params) {
    std::string problems;
    std::map<std::string, int> expected;
    for (const auto& p : parameter_layout(spec)) {
        expected[p.name] = 1;
        if (!params.contains(p.name)) {
            problems += " missing '" + p.name + "';";
        } else if (params.value(p.name).dims() != p.dims) {
            problems += " '" + p.name + "' has shape " + to_string(params.value(p.name).dims()) + ", expected " +
                        to_string(p.dims) + ";";
        }
    }
    for (const auto& [name, e] : params) {
        if (!expected.count(name)) {
            problems += " unexpected '" + name + "';";
        }
    }
    if (!problems.empty()) {
        throw consistency_error("parameters do not match model '" + spec.name + "':" + problems);
    }
}

// ---------------------------------------------------------------------------
// Structured-text serialization

inline nlohmann::json to_json(const layer_spec& l) {
    nlohmann::json j{{"kind", to_string(l.kind)}, {"name", l.name}};
    switch (l.kind) {
        case layer_kind::conv2d:
            j["filters"] = l.filters;
            j["kernel"] = l.kernel;
            j["padding"] = to_string(l.pad);
            j["stride"] = l.stride;
            j["init"] = to_string(l.init);
            break;
        case layer_kind::dense:
            j["units"] = l.units;
            j["init"] = to_string(l.init);
            break;
        case layer_kind::dropout:
            j["rate"] = l.rate;
            break;
        default:
            break;
    }
    return j;
}

inline nlohmann::json to_json(const model_spec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        layers.push_back(to_json(l));
    }
    return {{"name", spec.name},
            {"input_shape", {spec.input_shape.channels, spec.input_shape.height, spec.input_shape.width}},
            {"layers", layers},
            {"num_classes", spec.num_classes},
            {"head_activation", to_string(spec.head)}};
}

inline layer_spec layer_from_json(const nlohmann::json& j) {
    layer_spec l{layer_kind_from_string(j.at("kind").get<std::string>()), j.at("name").get<std::string>()};
    auto init_of = [&](const nlohmann::json& o) {
        const auto s = o.value("init", std::string("he_uniform"));
        if (s == "he_uniform") return init_scheme::he_uniform;
        if (s == "glorot_uniform") return init_scheme::glorot_uniform;
        throw format_error("unknown init scheme '" + s + "'");
    };
    switch (l.kind) {
        case layer_kind::conv2d: {
            l.filters = j.at("filters").get<std::size_t>();
            l.kernel = j.at("kernel").get<std::size_t>();
            const auto pad = j.at("padding").get<std::string>();
            if (pad != "same" && pad != "valid") {
                throw format_error("unknown padding '" + pad + "'");
            }
            l.pad = pad == "same" ? padding::same : padding::valid;
            l.stride = j.at("stride").get<std::size_t>();
            l.init = init_of(j);
            break;
        }
        case layer_kind::dense:
            l.units = j.at("units").get<std::size_t>();
            l.init = init_of(j);
            break;
        case layer_kind::dropout:
            l.rate = j.at("rate").get<double>();
            break;
        default:
            break;
    }
    return l;
}

inline model_spec spec_from_json(const nlohmann::json& j) {
    try {
        model_spec spec;
        spec.name = j.at("name").get<std::string>();
        const auto& in = j.at("input_shape");
        spec.input_shape = {in.at(0).get<std::size_t>(), in.at(1).get<std::size_t>(), in.at(2).get<std::size_t>()};
        for (const auto& l : j.at("layers")) {
            spec.layers.push_back(layer_from_json(l));
        }
        spec.num_classes = j.at("num_classes").get<std::size_t>();
        const auto head = j.at("head_activation").get<std::string>();
        if (head == "softmax") {
            spec.head = head_activation::softmax;
        } else if (head == "sigmoid") {
            spec.head = head_activation::sigmoid;
        } else if (head == "none") {
            spec.head = head_activation::none;
        } else {
            throw format_error("unknown head activation '" + head + "'");
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed model spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Forward pass

namespace detail {

inline void check_batch(const model_spec& spec, const shape_t& dims) {
    const auto& in = spec.input_shape;
    if (dims.size() != 4 || dims[1] != in.channels || dims[2] != in.height || dims[3] != in.width || dims[0] == 0) {
        throw shape_error("model '" + spec.name + "' expects batches of shape (N," + std::to_string(in.channels) +
                          "," + std::to_string(in.height) + "," + std::to_string(in.width) + "), got " +
                          to_string(dims));
    }
}

template <typename Fn>
decltype(auto) in_layer(const layer_spec& l, Fn&& fn) {
    try {
        return fn();
    } catch (const shape_error& e) {
        throw shape_error("layer '" + l.name + "': " + e.what());
    }
}

}  // namespace detail

/// Infer-mode forward without recording a tape.
template <scalar T>
tensor<T> infer(const model_spec& spec, const param_store<T>& params, const tensor<T>& batch) {
    detail::check_batch(spec, batch.dims());
    tensor<T> x = batch;
    for (const auto& l : spec.layers) {
        x = detail::in_layer(l, [&]() -> tensor<T> {
            switch (l.kind) {
                case layer_kind::conv2d:
                    return conv2d(x, params.value(l.name + ".w"), params.value(l.name + ".b"), l.pad, l.stride);
                case layer_kind::relu: return relu(x);
                case layer_kind::sigmoid: return sigmoid(x);
                case layer_kind::softmax: return softmax(x, -1);
                case layer_kind::maxpool2d: return maxpool2d(x);
                case layer_kind::dropout: return x;
                case layer_kind::flatten: return flatten(x);
                case layer_kind::global_average_pool: return global_average_pool(x);
                case layer_kind::dense:
                    return affine(x, params.value(l.name + ".w"), params.value(l.name + ".b"));
            }
            return x;
        });
    }
    return x;
}

/// Records the forward pass onto `t` using caller-provided parameter nodes.
template <scalar T>
var<T> record_forward(const model_spec& spec, const std::map<std::string, var<T>>& params, const var<T>& input,
                      run_mode mode, rng& gen) {
    detail::check_batch(spec, input.dims());
    auto param = [&](const std::string& name) -> const var<T>& {
        auto it = params.find(name);
        if (it == params.end()) {
            throw consistency_error("no parameter node for '" + name + "'");
        }
        return it->second;
    };
    var<T> x = input;
    for (const auto& l : spec.layers) {
        x = detail::in_layer(l, [&]() -> var<T> {
            switch (l.kind) {
                case layer_kind::conv2d:
                    return conv2d(x, param(l.name + ".w"), param(l.name + ".b"), l.pad, l.stride);
                case layer_kind::relu: return relu(x);
                case layer_kind::sigmoid: return sigmoid(x);
                case layer_kind::softmax: return softmax(x, -1);
                case layer_kind::maxpool2d: return maxpool2d(x);
                case layer_kind::dropout: return dropout(x, l.rate, mode, gen);
                case layer_kind::flatten: return flatten(x);
                case layer_kind::global_average_pool: return global_average_pool(x);
                case layer_kind::dense: return affine(x, param(l.name + ".w"), param(l.name + ".b"));
            }
            return x;
        });
    }
    return x;
}

template <scalar T>
struct forward_pass {
    std::unique_ptr<tape<T>> graph;  // null in infer mode
    var<T> output_node;
    tensor<T> output;
};

/// Train mode records a tape (trainable parameters as gradient-tracked
/// leaves, frozen ones as constants); infer mode runs the kernels directly.
template <scalar T>
forward_pass<T> forward_model(const model_spec& spec, const param_store<T>& params, const tensor<T>& batch,
                              run_mode mode, rng& gen) {
    forward_pass<T> r;
    if (mode == run_mode::infer) {
        r.output = infer(spec, params, batch);
        return r;
    }
    r.graph = std::make_unique<tape<T>>();
    std::map<std::string, var<T>> vars;
    for (const auto& [name, e] : params) {
        vars.emplace(name, e.trainable ? r.graph->parameter(name, e.value) : r.graph->constant(e.value));
    }
    r.output_node = record_forward(spec, vars, r.graph->constant(batch), mode, gen);
    r.output = r.output_node.value();
    return r;
}

/// Row-wise argmax; ties go to the lowest index.
template <scalar T>
std::vector<std::size_t> predict_classes(const tensor<T>& output) {
    if (output.rank() != 2 || output.dim(1) < 2) {
        throw shape_error("predict_classes expects [N,C] with C >= 2, got " + to_string(output.dims()));
    }
    const std::size_t n = output.dim(0), c = output.dim(1);
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (output[i * c + j] > output[i * c + best]) {
                best = j;
            }
        }
        out[i] = best;
    }
    return out;
}

}  // namespace xrdl
