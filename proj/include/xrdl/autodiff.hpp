#pragma once

// Reverse-mode differentiation over a recorded tape.
//
// Every differentiable op appends one node holding its forward value and a
// backward closure over whatever it saved. Node ids are assigned in
// recording order, so inputs always precede their consumers and a single
// reverse sweep visits each node exactly once.

#include "xrdl/error.hpp"
#include "xrdl/kernels.hpp"
#include "xrdl/rng.hpp"
#include "xrdl/tensor.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace xrdl {

using node_id = std::size_t;

template <scalar T>
class tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <scalar T>
class var {
  public:
    var() = default;
    var(tape<T>* owner, node_id id) : tape_(owner), id_(id) {}

    [[nodiscard]] node_id id() const noexcept { return id_; }
    [[nodiscard]] tape<T>& owner() const { return *tape_; }
    [[nodiscard]] const tensor<T>& value() const { return tape_->value(id_); }
    [[nodiscard]] const shape_t& dims() const { return value().dims(); }

  private:
    tape<T>* tape_ = nullptr;
    node_id id_ = 0;
};

/// Receives the upstream gradient and a per-input "needed" mask; returns one
/// gradient per input (an empty tensor for inputs that were not needed).
template <scalar T>
using backward_rule = std::function<std::vector<tensor<T>>(const tensor<T>& grad, const std::vector<bool>& needed)>;

template <scalar T>
class gradients {
  public:
    gradients(std::vector<std::optional<tensor<T>>> by_node, std::map<std::string, tensor<T>> by_param)
        : by_node_(std::move(by_node)), by_param_(std::move(by_param)) {}

    /// Gradient w.r.t. any node; zeros when the node did not influence the loss.
    [[nodiscard]] tensor<T> wrt(const var<T>& v) const {
        const auto& g = by_node_.at(v.id());
        return g ? *g : tensor<T>(v.dims());
    }

    [[nodiscard]] const std::map<std::string, tensor<T>>& params() const noexcept { return by_param_; }
    [[nodiscard]] const tensor<T>& param(const std::string& name) const { return by_param_.at(name); }

  private:
    std::vector<std::optional<tensor<T>>> by_node_;
    std::map<std::string, tensor<T>> by_param_;
};

template <scalar T>
class tape {
  public:
    tape() = default;
    tape(const tape&) = delete;
    tape& operator=(const tape&) = delete;

    /// Leaf that never receives gradients.
    var<T> constant(tensor<T> value) { return push("constant", {}, std::move(value), nullptr, false); }

    /// Leaf whose gradient is tracked and returned by wrt().
    var<T> input(tensor<T> value) { return push("input", {}, std::move(value), nullptr, true); }

    /// Named trainable leaf; its gradient is reported by name from backward().
    var<T> parameter(const std::string& name, tensor<T> value) {
        if (param_ids_.count(name)) {
            throw usage_error("parameter '" + name + "' registered twice on one tape");
        }
        var<T> v = push("parameter", {}, std::move(value), nullptr, true);
        param_ids_.emplace(name, v.id());
        return v;
    }

    /// Appends an op node. Gradients flow only to inputs that require them.
    var<T> record(std::string tag, std::vector<node_id> inputs, tensor<T> value, backward_rule<T> rule) {
        bool tracked = false;
        for (const node_id in : inputs) {
            if (in >= nodes_.size()) {
                throw usage_error("op '" + tag + "' references node " + std::to_string(in) + " not yet recorded");
            }
            tracked = tracked || nodes_[in].requires_grad;
        }
        if (!rule) {
            throw usage_error("op '" + tag + "' recorded without a backward rule");
        }
        return push(std::move(tag), std::move(inputs), std::move(value), std::move(rule), tracked);
    }

    [[nodiscard]] const tensor<T>& value(node_id id) const { return nodes_.at(id).value; }
    [[nodiscard]] const std::string& tag(node_id id) const { return nodes_.at(id).tag; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const std::map<std::string, node_id>& parameters() const noexcept { return param_ids_; }

    /// Reverse sweep from a rank-0 loss. Every registered parameter appears
    /// in the result; unreachable ones get zero tensors.
    [[nodiscard]] gradients<T> backward(const var<T>& loss) const {
        const tensor<T>& out = value(loss.id());
        if (out.rank() != 0) {
            throw usage_error("backward requires a rank-0 loss, got shape " + to_string(out.dims()));
        }
        std::vector<std::optional<tensor<T>>> grads(nodes_.size());
        grads[loss.id()] = tensor<T>::scalar_value(T{1});
        for (node_id i = loss.id() + 1; i-- > 0;) {
            const node& n = nodes_[i];
            if (!grads[i] || !n.requires_grad || !n.rule) {
                continue;
            }
            std::vector<bool> needed(n.inputs.size());
            bool any = false;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                needed[k] = nodes_[n.inputs[k]].requires_grad;
                any = any || needed[k];
            }
            if (!any) {
                continue;
            }
            std::vector<tensor<T>> input_grads = n.rule(*grads[i], needed);
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                if (!needed[k]) {
                    continue;
                }
                auto& slot = grads[n.inputs[k]];
                if (slot) {
                    *slot += input_grads[k];
                } else {
                    slot = std::move(input_grads[k]);
                }
            }
        }
        std::map<std::string, tensor<T>> by_param;
        for (const auto& [name, id] : param_ids_) {
            by_param.emplace(name, grads[id] ? *grads[id] : tensor<T>(nodes_[id].value.dims()));
        }
        return gradients<T>(std::move(grads), std::move(by_param));
    }

  private:
    struct node {
        std::string tag;
        std::vector<node_id> inputs;
        tensor<T> value;
        backward_rule<T> rule;
        bool requires_grad = false;
    };

    var<T> push(std::string tag, std::vector<node_id> inputs, tensor<T> value, backward_rule<T> rule,
                bool tracked) {
        nodes_.push_back(node{std::move(tag), std::move(inputs), std::move(value), std::move(rule), tracked});
        return var<T>(this, nodes_.size() - 1);
    }

    std::vector<node> nodes_;
    std::map<std::string, node_id> param_ids_;
};

namespace detail {

template <scalar T>
void same_tape(const var<T>& a, const var<T>& b) {
    if (&a.owner() != &b.owner()) {
        throw usage_error("operands recorded on different tapes");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable ops

template <scalar T>
var<T> relu(const var<T>& x) {
    const tape<T>* t = &x.owner();
    const node_id xi = x.id();
    return x.owner().record("relu", {xi}, relu(x.value()), [t, xi](const tensor<T>& g, const std::vector<bool>&) {
        return std::vector<tensor<T>>{relu_backward(t->value(xi), g)};
    });
}

template <scalar T>
var<T> sigmoid(const var<T>& x) {
    const tape<T>* t = &x.owner();
    const node_id self = t->size();
    return x.owner().record("sigmoid", {x.id()}, sigmoid(x.value()),
                            [t, self](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{sigmoid_backward(t->value(self), g)};
                            });
}

template <scalar T>
var<T> pointwise_activation(const var<T>& x, activation kind) {
    return kind == activation::relu ? relu(x) : sigmoid(x);
}

template <scalar T>
var<T> softmax(const var<T>& x, int axis = -1) {
    const tape<T>* t = &x.owner();
    const node_id self = t->size();
    return x.owner().record("softmax", {x.id()}, softmax(x.value(), axis),
                            [t, self, axis](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{softmax_backward(t->value(self), g, axis)};
                            });
}

template <scalar T>
var<T> conv2d(const var<T>& x, const var<T>& w, const var<T>& b, padding pad, std::size_t stride = 1) {
    detail::same_tape(x, w);
    detail::same_tape(x, b);
    const tape<T>* t = &x.owner();
    const node_id xi = x.id(), wi = w.id();
    tensor<T> y = conv2d(x.value(), w.value(), b.value(), pad, stride);
    return x.owner().record("conv2d", {xi, wi, b.id()}, std::move(y),
                            [t, xi, wi, pad, stride](const tensor<T>& g, const std::vector<bool>& need) {
                                auto r = conv2d_backward(t->value(xi), t->value(wi), g, pad, stride, need[0],
                                                         need[1], need[2]);
                                return std::vector<tensor<T>>{std::move(r.dx), std::move(r.dw), std::move(r.db)};
                            });
}

template <scalar T>
var<T> maxpool2d(const var<T>& x) {
    auto r = maxpool2d_with_indices(x.value());
    shape_t in_dims = x.dims();
    return x.owner().record("maxpool2d", {x.id()}, std::move(r.output),
                            [in_dims, idx = std::move(r.argmax)](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{maxpool2d_backward(in_dims, idx, g)};
                            });
}

template <scalar T>
var<T> affine(const var<T>& x, const var<T>& w, const var<T>& b) {
    detail::same_tape(x, w);
    detail::same_tape(x, b);
    const tape<T>* t = &x.owner();
    const node_id xi = x.id(), wi = w.id();
    tensor<T> y = affine(x.value(), w.value(), b.value());
    return x.owner().record("affine", {xi, wi, b.id()}, std::move(y),
                            [t, xi, wi](const tensor<T>& g, const std::vector<bool>& need) {
                                auto r = affine_backward(t->value(xi), t->value(wi), g, need[0], need[1], need[2]);
                                return std::vector<tensor<T>>{std::move(r.dx), std::move(r.dw), std::move(r.db)};
                            });
}

template <scalar T>
var<T> reshape(const var<T>& x, shape_t dims) {
    shape_t in_dims = x.dims();
    return x.owner().record("reshape", {x.id()}, x.value().reshape(std::move(dims)),
                            [in_dims](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{g.reshape(in_dims)};
                            });
}

template <scalar T>
var<T> flatten(const var<T>& x) {
    const tensor<T> y = flatten(x.value());
    return reshape(x, y.dims());
}

template <scalar T>
var<T> global_average_pool(const var<T>& x) {
    shape_t in_dims = x.dims();
    return x.owner().record("global_average_pool", {x.id()}, global_average_pool(x.value()),
                            [in_dims](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{global_average_pool_backward(in_dims, g)};
                            });
}

/// Dropout with an explicit multiplier mask (see dropout_mask()).
template <scalar T>
var<T> dropout_with_mask(const var<T>& x, tensor<T> mask) {
    tensor<T> y = apply_mask(x.value(), mask);
    return x.owner().record("dropout", {x.id()}, std::move(y),
                            [mask = std::move(mask)](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{apply_mask(g, mask)};
                            });
}

template <scalar T>
var<T> dropout(const var<T>& x, double rate, run_mode mode, rng& gen) {
    check_dropout_rate(rate);
    if (mode == run_mode::infer || rate == 0.0) {
        return x;
    }
    return dropout_with_mask(x, dropout_mask<T>(x.dims(), rate, gen));
}

/// Batch-mean categorical cross-entropy against constant one-hot labels.
template <scalar T>
var<T> categorical_cross_entropy(const var<T>& p, const tensor<T>& labels) {
    const tape<T>* t = &p.owner();
    const node_id pi = p.id();
    const T loss = categorical_cross_entropy(p.value(), labels);
    return p.owner().record("categorical_cross_entropy", {pi}, tensor<T>::scalar_value(loss),
                            [t, pi, labels](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{
                                    categorical_cross_entropy_backward(t->value(pi), labels, g.item())};
                            });
}

/// Sum of all elements, producing a rank-0 node.
template <scalar T>
var<T> sum(const var<T>& x) {
    T total{0};
    for (const T v : x.value().values()) {
        total += v;
    }
    shape_t in_dims = x.dims();
    return x.owner().record("sum", {x.id()}, tensor<T>::scalar_value(total),
                            [in_dims](const tensor<T>& g, const std::vector<bool>&) {
                                return std::vector<tensor<T>>{tensor<T>(in_dims, g.item())};
                            });
}

/// Elementwise product of two same-shaped nodes.
template <scalar T>
var<T> multiply(const var<T>& a, const var<T>& b) {
    detail::same_tape(a, b);
    if (a.dims() != b.dims()) {
        throw shape_error("multiply shape mismatch " + to_string(a.dims()) + " vs " + to_string(b.dims()));
    }
    const tape<T>* t = &a.owner();
    const node_id ai = a.id(), bi = b.id();
    return a.owner().record("multiply", {ai, bi}, apply_mask(a.value(), b.value()),
                            [t, ai, bi](const tensor<T>& g, const std::vector<bool>& need) {
                                std::vector<tensor<T>> out(2);
                                if (need[0]) out[0] = apply_mask(g, t->value(bi));
                                if (need[1]) out[1] = apply_mask(g, t->value(ai));
                                return out;
                            });
}

}  // namespace xrdl
