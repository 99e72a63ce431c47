// Dense row-major tensor with value semantics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "aptx/core.hpp"

namespace aptx {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

namespace detail {
// Allocator whose default-construct is a no-op, so resize(n) skips the
// zero-fill for buffers that are written in full right after.
template <class T>
struct UninitAllocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = UninitAllocator<U>;
    };
    template <class U>
    void construct(U* /*p*/) noexcept {}
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};
}  // namespace detail

template <class T>
class Tensor {
public:
    using Storage = std::vector<T, detail::UninitAllocator<T>>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        data_.resize(static_cast<std::size_t>(shape_numel(shape_)), fill);
    }
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape_))
            throw ShapeError(cat("tensor data size ", data.size(), " does not match shape ",
                                 shape_str(shape_)));
        data_.assign(data.begin(), data.end());
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
    // Contents unspecified; caller must write every element.
    static Tensor uninit(Shape shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_.resize(static_cast<std::size_t>(shape_numel(t.shape_)));
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    Storage& vec() { return data_; }
    const Storage& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
    const T& at(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * dim(1) + j)];
    }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return data_[static_cast<std::size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return data_[static_cast<std::size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw ShapeError(cat("cannot reshape ", shape_str(shape_), " to ", shape_str(s)));
        Tensor t;
        t.shape_ = std::move(s);
        t.data_ = data_;
        return t;
    }

    T scalar() const {
        if (numel() != 1) throw ShapeError(cat("scalar() on tensor of shape ", shape_str(shape_)));
        return data_[0];
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out = Tensor<U>::uninit(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    T max_value() const { return *std::max_element(data_.begin(), data_.end()); }
    double sum_value() const {
        double s = 0;
        for (const T& v : data_) s += static_cast<double>(v);
        return s;
    }
    double mean_value() const { return numel() ? sum_value() / static_cast<double>(numel()) : 0.0; }

private:
    Shape shape_;
    Storage data_;
};

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(cat("max_abs_diff: shape mismatch ", shape_str(a.shape()), " vs ",
                             shape_str(b.shape())));
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace aptx
