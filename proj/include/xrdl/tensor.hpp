#pragma once

#include "xrdl/error.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace xrdl {

template <typename T>
concept scalar = std::same_as<T, float> || std::same_as<T, double>;

using shape_t = std::vector<std::size_t>;

inline std::size_t element_count(const shape_t& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const shape_t& dims) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        out << (i ? "," : "") << dims[i];
    }
    out << ')';
    return out.str();
}

/// Dense row-major n-dimensional array. A value type: copies are deep.
template <scalar T>
class tensor {
  public:
    using value_type = T;

    tensor() : dims_{0} {}

    explicit tensor(shape_t dims, T fill = T{0}) : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

    tensor(shape_t dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != element_count(dims_)) {
            throw shape_error("data length " + std::to_string(data_.size()) + " does not match shape " +
                              xrdl::to_string(dims_));
        }
    }

    static tensor zeros(shape_t dims) { return tensor(std::move(dims)); }
    static tensor full(shape_t dims, T value) { return tensor(std::move(dims), value); }
    static tensor scalar_value(T value) { return tensor(shape_t{}, std::vector<T>{value}); }

    [[nodiscard]] const shape_t& dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
    [[nodiscard]] T* data() noexcept { return data_.data(); }
    [[nodiscard]] const T* data() const noexcept { return data_.data(); }
    [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Multi-index access, bounds-checked.
    T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
    const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

    /// Scalar value of a rank-0 (or single-element) tensor.
    [[nodiscard]] T item() const {
        if (data_.size() != 1) {
            throw shape_error("item() on tensor of shape " + xrdl::to_string(dims_));
        }
        return data_[0];
    }

    [[nodiscard]] tensor reshape(shape_t dims) const {
        if (element_count(dims) != data_.size()) {
            throw shape_error("cannot reshape " + xrdl::to_string(dims_) + " to " + xrdl::to_string(dims));
        }
        return tensor(std::move(dims), data_);
    }

    template <scalar U>
    [[nodiscard]] tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return tensor<U>(dims_, std::move(out));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    tensor& operator+=(const tensor& other) {
        if (other.dims_ != dims_) {
            throw shape_error("cannot add " + xrdl::to_string(other.dims_) + " into " + xrdl::to_string(dims_));
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += other.data_[i];
        }
        return *this;
    }

    friend bool operator==(const tensor& a, const tensor& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

  private:
    std::size_t offset(std::initializer_list<std::size_t> index) const {
        if (index.size() != dims_.size()) {
            throw shape_error("index rank " + std::to_string(index.size()) + " for shape " + xrdl::to_string(dims_));
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (const std::size_t i : index) {
            if (i >= dims_[axis]) {
                throw shape_error("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis) +
                                  " of shape " + xrdl::to_string(dims_));
            }
            off = off * dims_[axis] + i;
            ++axis;
        }
        return off;
    }

    shape_t dims_;
    std::vector<T> data_;
};

using tensor32 = tensor<float>;
using tensor64 = tensor<double>;

/// Throws numeric_domain_error naming the first non-finite element.
template <scalar T>
void require_finite(const tensor<T>& t, const std::string& where) {
    const auto values = t.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw numeric_domain_error(where + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

/// Bitwise equality of contents (distinguishes -0/+0, unlike operator==).
template <scalar T>
bool bit_identical(const tensor<T>& a, const tensor<T>& b) {
    if (a.dims() != b.dims()) {
        return false;
    }
    const auto x = std::as_bytes(a.values());
    const auto y = std::as_bytes(b.values());
    return std::equal(x.begin(), x.end(), y.begin(), y.end());
}

}  // namespace xrdl
