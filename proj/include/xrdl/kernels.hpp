#pragma once

// Forward and backward numerical kernels for every layer kind. These are
// pure functions over tensors; the tape in autodiff.hpp wires them together.
// All loops run in a fixed sequential order so results are bit-reproducible.

#include "xrdl/error.hpp"
#include "xrdl/rng.hpp"
#include "xrdl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace xrdl {

enum class activation { relu, sigmoid };
enum class padding { same, valid };
enum class run_mode { train, infer };

inline std::string to_string(padding p) { return p == padding::same ? "same" : "valid"; }

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T{0}) {
                continue;
            }
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T{0}) {
                continue;
            }
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc{0};
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            c[i * n + j] += acc;
        }
    }
}

template <typename T>
void require_finite_input(const tensor<T>& x, const char* op) {
    require_finite(x, std::string(op) + " input");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise activations

template <scalar T>
tensor<T> pointwise_activation(const tensor<T>& x, activation kind) {
    detail::require_finite_input(x, kind == activation::relu ? "relu" : "sigmoid");
    tensor<T> y(x.dims());
    const auto in = x.values();
    auto out = y.values();
    if (kind == activation::relu) {
        for (std::size_t i = 0; i < in.size(); ++i) {
            out[i] = in[i] > T{0} ? in[i] : T{0};
        }
    } else {
        for (std::size_t i = 0; i < in.size(); ++i) {
            // Split by sign so exp() never overflows.
            if (in[i] >= T{0}) {
                out[i] = T{1} / (T{1} + std::exp(-in[i]));
            } else {
                const T e = std::exp(in[i]);
                out[i] = e / (T{1} + e);
            }
        }
    }
    return y;
}

template <scalar T>
tensor<T> relu(const tensor<T>& x) {
    return pointwise_activation(x, activation::relu);
}

template <scalar T>
tensor<T> sigmoid(const tensor<T>& x) {
    return pointwise_activation(x, activation::sigmoid);
}

template <scalar T>
tensor<T> relu_backward(const tensor<T>& x, const tensor<T>& grad) {
    tensor<T> dx(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) {
        dx[i] = x[i] > T{0} ? grad[i] : T{0};
    }
    return dx;
}

/// Takes the forward output y = sigmoid(x).
template <scalar T>
tensor<T> sigmoid_backward(const tensor<T>& y, const tensor<T>& grad) {
    tensor<T> dx(y.dims());
    for (std::size_t i = 0; i < y.size(); ++i) {
        dx[i] = grad[i] * y[i] * (T{1} - y[i]);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Softmax

namespace detail {

struct axis_layout {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

inline axis_layout layout_for_axis(const shape_t& dims, int axis) {
    const int rank = static_cast<int>(dims.size());
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw shape_error("softmax axis " + std::to_string(axis) + " invalid for shape " + to_string(dims));
    }
    axis_layout l;
    for (int i = 0; i < a; ++i) {
        l.outer *= dims[i];
    }
    l.extent = dims[a];
    for (int i = a + 1; i < rank; ++i) {
        l.inner *= dims[i];
    }
    return l;
}

}  // namespace detail

template <scalar T>
tensor<T> softmax(const tensor<T>& x, int axis = -1) {
    const auto l = detail::layout_for_axis(x.dims(), axis);
    detail::require_finite_input(x, "softmax");
    tensor<T> y(x.dims());
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.extent * l.inner + in;
            T peak = x[base];
            for (std::size_t k = 1; k < l.extent; ++k) {
                peak = std::max(peak, x[base + k * l.inner]);
            }
            T total{0};
            for (std::size_t k = 0; k < l.extent; ++k) {
                const T e = std::exp(x[base + k * l.inner] - peak);
                y[base + k * l.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < l.extent; ++k) {
                y[base + k * l.inner] /= total;
            }
        }
    }
    return y;
}

/// dx = y * (g - <g, y>) along the axis.
template <scalar T>
tensor<T> softmax_backward(const tensor<T>& y, const tensor<T>& grad, int axis = -1) {
    const auto l = detail::layout_for_axis(y.dims(), axis);
    tensor<T> dx(y.dims());
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.extent * l.inner + in;
            T dot{0};
            for (std::size_t k = 0; k < l.extent; ++k) {
                dot += grad[base + k * l.inner] * y[base + k * l.inner];
            }
            for (std::size_t k = 0; k < l.extent; ++k) {
                const std::size_t i = base + k * l.inner;
                dx[i] = y[i] * (grad[i] - dot);
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip)

struct conv_geometry {
    std::size_t batch = 0, channels = 0, height = 0, width = 0;
    std::size_t filters = 0, kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1;
    std::size_t pad_top = 0, pad_left = 0;
    std::size_t out_h = 0, out_w = 0;

    [[nodiscard]] std::size_t patch() const { return channels * kernel_h * kernel_w; }
    [[nodiscard]] std::size_t out_area() const { return out_h * out_w; }
};

namespace detail {

inline void conv_extent(std::size_t in, std::size_t k, std::size_t stride, padding pad, std::size_t& out,
                        std::size_t& pad_before, const std::string& context) {
    if (pad == padding::same) {
        out = (in + stride - 1) / stride;
        const std::size_t needed = (out - 1) * stride + k;
        const std::size_t total = needed > in ? needed - in : 0;
        // Odd totals put the extra row/column at the bottom/right.
        pad_before = total / 2;
    } else {
        if (in < k) {
            throw shape_error("conv2d output extent is not positive: " + context);
        }
        out = (in - k) / stride + 1;
        pad_before = 0;
    }
    if (out == 0) {
        throw shape_error("conv2d output extent is not positive: " + context);
    }
}

}  // namespace detail

inline conv_geometry make_conv_geometry(const shape_t& x, const shape_t& w, padding pad, std::size_t stride) {
    const std::string context = "input " + to_string(x) + ", kernel " + to_string(w);
    if (x.size() != 4 || w.size() != 4) {
        throw shape_error("conv2d expects rank-4 input and kernel; got " + context);
    }
    if (x[1] != w[1]) {
        throw shape_error("conv2d channel mismatch: " + context);
    }
    if (stride == 0) {
        throw parameter_error("conv2d stride must be positive");
    }
    if (w[2] == 0 || w[3] == 0 || w[0] == 0) {
        throw shape_error("conv2d kernel extents must be positive: " + context);
    }
    conv_geometry g;
    g.batch = x[0];
    g.channels = x[1];
    g.height = x[2];
    g.width = x[3];
    g.filters = w[0];
    g.kernel_h = w[2];
    g.kernel_w = w[3];
    g.stride = stride;
    detail::conv_extent(g.height, g.kernel_h, stride, pad, g.out_h, g.pad_top, context);
    detail::conv_extent(g.width, g.kernel_w, stride, pad, g.out_w, g.pad_left, context);
    return g;
}

namespace detail {

// One image [C,H,W] -> columns [C*kH*kW, outH*outW], zero outside the input.
template <typename T>
void im2col(const conv_geometry& g, const T* image, T* cols) {
    const std::size_t area = g.out_area();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
                T* dst = cols + row * area;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                              static_cast<std::ptrdiff_t>(g.pad_top);
                    T* out = dst + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(out, out + g.out_w, T{0});
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                                  static_cast<std::ptrdiff_t>(g.pad_left);
                        out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                                      ? T{0}
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates columns back into an image.
template <typename T>
void col2im(const conv_geometry& g, const T* cols, T* image) {
    const std::size_t area = g.out_area();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
                const T* src = cols + row * area;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                              static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        continue;
                    }
                    T* dst = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                                  static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
                            dst[static_cast<std::size_t>(ix)] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <scalar T>
tensor<T> conv2d(const tensor<T>& x, const tensor<T>& w, const tensor<T>& b, padding pad, std::size_t stride = 1) {
    const conv_geometry g = make_conv_geometry(x.dims(), w.dims(), pad, stride);
    if (b.rank() != 1 || b.dim(0) != g.filters) {
        throw shape_error("conv2d bias " + to_string(b.dims()) + " does not match kernel " + to_string(w.dims()));
    }
    tensor<T> y({g.batch, g.filters, g.out_h, g.out_w});
    std::vector<T> cols(g.patch() * g.out_area());
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = g.filters * g.out_area();
    for (std::size_t n = 0; n < g.batch; ++n) {
        detail::im2col(g, x.data() + n * in_stride, cols.data());
        T* out = y.data() + n * out_stride;
        for (std::size_t f = 0; f < g.filters; ++f) {
            std::fill(out + f * g.out_area(), out + (f + 1) * g.out_area(), b[f]);
        }
        detail::gemm_nn(g.filters, g.out_area(), g.patch(), w.data(), cols.data(), out);
    }
    return y;
}

template <scalar T>
struct conv2d_grads {
    tensor<T> dx, dw, db;
};

template <scalar T>
conv2d_grads<T> conv2d_backward(const tensor<T>& x, const tensor<T>& w, const tensor<T>& grad, padding pad,
                                std::size_t stride, bool need_dx = true, bool need_dw = true, bool need_db = true) {
    const conv_geometry g = make_conv_geometry(x.dims(), w.dims(), pad, stride);
    conv2d_grads<T> out;
    if (need_dx) out.dx = tensor<T>(x.dims());
    if (need_dw) out.dw = tensor<T>(w.dims());
    if (need_db) out.db = tensor<T>({g.filters});
    std::vector<T> cols(g.patch() * g.out_area());
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = g.filters * g.out_area();
    for (std::size_t n = 0; n < g.batch; ++n) {
        const T* gy = grad.data() + n * out_stride;
        if (need_db) {
            for (std::size_t f = 0; f < g.filters; ++f) {
                T acc{0};
                for (std::size_t i = 0; i < g.out_area(); ++i) {
                    acc += gy[f * g.out_area() + i];
                }
                out.db[f] += acc;
            }
        }
        if (need_dw) {
            detail::im2col(g, x.data() + n * in_stride, cols.data());
            detail::gemm_nt(g.filters, g.patch(), g.out_area(), gy, cols.data(), out.dw.data());
        }
        if (need_dx) {
            std::fill(cols.begin(), cols.end(), T{0});
            detail::gemm_tn(g.patch(), g.out_area(), g.filters, w.data(), gy, cols.data());
            detail::col2im(g, cols.data(), out.dx.data() + n * in_stride);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Max pooling, fixed 2x2 window with stride 2

template <scalar T>
struct pool_result {
    tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index feeding each output element
};

template <scalar T>
pool_result<T> maxpool2d_with_indices(const tensor<T>& x) {
    if (x.rank() != 4) {
        throw shape_error("maxpool2d expects rank-4 input, got " + to_string(x.dims()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0) {
        throw shape_error("maxpool2d requires even positive spatial extents, got " + to_string(x.dims()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    pool_result<T> r{tensor<T>({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = base + (2 * oy) * w + 2 * ox;
                // Row-major window order; strict > keeps the first maximum.
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if (x[idx] > x[best]) {
                            best = idx;
                        }
                    }
                }
                r.output[o] = x[best];
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

template <scalar T>
tensor<T> maxpool2d(const tensor<T>& x) {
    return maxpool2d_with_indices(x).output;
}

template <scalar T>
tensor<T> maxpool2d_backward(const shape_t& input_dims, const std::vector<std::size_t>& argmax,
                             const tensor<T>& grad) {
    tensor<T> dx(input_dims);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        dx[argmax[i]] += grad[i];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Dense

template <scalar T>
tensor<T> affine(const tensor<T>& x, const tensor<T>& w, const tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) || b.dim(0) != w.dim(1)) {
        throw shape_error("affine dimension mismatch: x " + to_string(x.dims()) + ", w " + to_string(w.dims()) +
                          ", b " + to_string(b.dims()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
    tensor<T> y({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(b.values().begin(), b.values().end(), y.data() + i * m);
    }
    detail::gemm_nn(n, m, d, x.data(), w.data(), y.data());
    return y;
}

template <scalar T>
struct affine_grads {
    tensor<T> dx, dw, db;
};

template <scalar T>
affine_grads<T> affine_backward(const tensor<T>& x, const tensor<T>& w, const tensor<T>& grad, bool need_dx = true,
                                bool need_dw = true, bool need_db = true) {
    const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
    affine_grads<T> out;
    if (need_dx) {
        out.dx = tensor<T>(x.dims());
        detail::gemm_nt(n, d, m, grad.data(), w.data(), out.dx.data());
    }
    if (need_dw) {
        out.dw = tensor<T>(w.dims());
        detail::gemm_tn(d, m, n, x.data(), grad.data(), out.dw.data());
    }
    if (need_db) {
        out.db = tensor<T>({m});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                out.db[j] += grad[i * m + j];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reshaping and pooling

template <scalar T>
tensor<T> flatten(const tensor<T>& x) {
    if (x.rank() < 2) {
        throw shape_error("flatten expects rank >= 2, got " + to_string(x.dims()));
    }
    if (x.rank() == 2) {
        return x;
    }
    return x.reshape({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
}

template <scalar T>
tensor<T> global_average_pool(const tensor<T>& x) {
    if (x.rank() != 4 || x.dim(2) * x.dim(3) == 0) {
        throw shape_error("global_average_pool expects [N,C,H,W] with H*W >= 1, got " + to_string(x.dims()));
    }
    const std::size_t planes = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
    tensor<T> y({x.dim(0), x.dim(1)});
    for (std::size_t p = 0; p < planes; ++p) {
        T acc{0};
        for (std::size_t i = 0; i < area; ++i) {
            acc += x[p * area + i];
        }
        y[p] = acc / static_cast<T>(area);
    }
    return y;
}

template <scalar T>
tensor<T> global_average_pool_backward(const shape_t& input_dims, const tensor<T>& grad) {
    tensor<T> dx(input_dims);
    const std::size_t area = input_dims[2] * input_dims[3];
    const T scale = T{1} / static_cast<T>(area);
    for (std::size_t p = 0; p < grad.size(); ++p) {
        const T v = grad[p] * scale;
        std::fill(dx.data() + p * area, dx.data() + (p + 1) * area, v);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout

inline void check_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw parameter_error("dropout rate " + std::to_string(rate) + " outside [0, 1)");
    }
}

/// Per-element multipliers: 0 with probability `rate`, else 1/(1-rate).
template <scalar T>
tensor<T> dropout_mask(const shape_t& dims, double rate, rng& gen) {
    check_dropout_rate(rate);
    tensor<T> mask(dims);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask.values()) {
        m = gen.uniform() < rate ? T{0} : keep_scale;
    }
    return mask;
}

template <scalar T>
tensor<T> apply_mask(const tensor<T>& x, const tensor<T>& mask) {
    if (x.dims() != mask.dims()) {
        throw shape_error("dropout mask " + to_string(mask.dims()) + " does not match input " + to_string(x.dims()));
    }
    tensor<T> y(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] * mask[i];
    }
    return y;
}

template <scalar T>
tensor<T> dropout(const tensor<T>& x, double rate, run_mode mode, rng& gen) {
    check_dropout_rate(rate);
    if (mode == run_mode::infer || rate == 0.0) {
        return x;
    }
    return apply_mask(x, dropout_mask<T>(x.dims(), rate, gen));
}

// ---------------------------------------------------------------------------
// Categorical cross-entropy

inline constexpr double probability_clamp = 1e-7;

template <scalar T>
void check_one_hot(const tensor<T>& p, const tensor<T>& y) {
    if (p.rank() != 2 || p.dims() != y.dims()) {
        throw shape_error("cross-entropy expects matching [N,C] tensors, got p " + to_string(p.dims()) + ", y " +
                          to_string(y.dims()));
    }
    const std::size_t n = y.dim(0), c = y.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        int ones = 0;
        for (std::size_t j = 0; j < c; ++j) {
            const T v = y[i * c + j];
            if (v == T{1}) {
                ++ones;
            } else if (v != T{0}) {
                ones = -1;
                break;
            }
        }
        if (ones != 1) {
            throw label_error("row " + std::to_string(i) + " of the label tensor is not one-hot");
        }
    }
}

/// Per-sample losses -log(clamp(p[true class])).
template <scalar T>
std::vector<T> cross_entropy_per_sample(const tensor<T>& p, const tensor<T>& y) {
    check_one_hot(p, y);
    detail::require_finite_input(p, "cross-entropy");
    const std::size_t n = p.dim(0), c = p.dim(1);
    const T lo = static_cast<T>(probability_clamp), hi = T{1} - static_cast<T>(probability_clamp);
    std::vector<T> losses(n, T{0});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (y[i * c + j] != T{0}) {
                losses[i] -= y[i * c + j] * std::log(std::clamp(p[i * c + j], lo, hi));
            }
        }
    }
    return losses;
}

template <scalar T>
T categorical_cross_entropy(const tensor<T>& p, const tensor<T>& y) {
    const auto losses = cross_entropy_per_sample(p, y);
    T total{0};
    for (const T l : losses) {
        total += l;
    }
    return losses.empty() ? T{0} : total / static_cast<T>(losses.size());
}

/// Gradient of the batch-mean loss w.r.t. p; zero where the clamp is active.
template <scalar T>
tensor<T> categorical_cross_entropy_backward(const tensor<T>& p, const tensor<T>& y, T grad) {
    const std::size_t n = p.dim(0);
    const T lo = static_cast<T>(probability_clamp), hi = T{1} - static_cast<T>(probability_clamp);
    tensor<T> dp(p.dims());
    const T scale = grad / static_cast<T>(n);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (y[i] != T{0} && p[i] > lo && p[i] < hi) {
            dp[i] = -scale * y[i] / p[i];
        }
    }
    return dp;
}

}  // namespace xrdl
